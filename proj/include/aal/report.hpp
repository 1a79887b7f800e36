#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "aal/clustering.hpp"
#include "aal/config.hpp"
#include "aal/engine.hpp"

namespace aal {

class ReportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// 17 significant digits: parsing the text gives back the same double.
std::string format_number(double v);

inline constexpr const char* kNotReached = "not reached";

std::string curve_csv(std::span<const CurvePoint> curve);
std::vector<CurvePoint> parse_curve_csv(std::string_view text);
std::vector<CurvePoint> read_curve_csv(const std::filesystem::path& path);

struct ThresholdRow {
  std::string curve;  // "mean" or "seed-<s>"
  double percentage = 0.0;
  double baseline = 0.0;
  std::optional<std::size_t> samples;
};

std::string thresholds_csv(std::span<const ThresholdRow> rows);
std::vector<ThresholdRow> parse_thresholds_csv(std::string_view text);

std::vector<ThresholdRow> threshold_rows(const ExperimentResult& result, std::span<const double> percentages);

// config.snapshot, curve.seed-<s>.csv, curve.mean.csv, thresholds.csv, timings.csv
void write_run_artifact(const std::filesystem::path& dir, const RunConfig& config, const ExperimentResult& result);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, std::string_view text);

struct RunSummary {
  std::filesystem::path dir;
  std::string model;
  std::string strategy;
  std::size_t seeds = 0;
  double baseline = 0.0;
  std::vector<CurvePoint> mean;
};

RunSummary load_run(const std::filesystem::path& dir);

struct ReportRow {
  std::string model;
  std::string strategy;
  double baseline = 0.0;
  std::size_t seeds = 0;
  std::vector<std::optional<std::size_t>> samples;  // per percentage
};

struct ThresholdTable {
  std::vector<double> percentages;
  std::vector<ReportRow> rows;  // sorted by model, then strategy

  std::string text() const;
  std::string csv() const;
};

ThresholdTable build_report(std::span<const RunSummary> runs, std::span<const double> percentages);

// Learning curves: one polyline per run, a dashed baseline per run, and a
// marker where each threshold is first reached.
std::string render_svg(std::span<const RunSummary> runs, std::span<const double> percentages);
std::string plot_csv(std::span<const RunSummary> runs);

struct SweepOutcome {
  ClusterAlgorithm algorithm = ClusterAlgorithm::kmeans;
  std::string encoding;
  std::optional<SweepResult> result;
  std::string error;  // set when the sweep failed
};

std::string sweep_report_json(const SweepOutcome& outcome);

}  // namespace aal
