#include "aal/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

namespace aal {

namespace {

std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> rows;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    pos = end + 1;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const auto comma = line.find(',', start);
      fields.emplace_back(line.substr(start, comma - start));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    rows.push_back(std::move(fields));
  }
  return rows;
}

double parse_double(const std::string& s, const char* what) {
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw ReportError(std::string("bad ") + what + ": '" + s + "'");
  return v;
}

std::size_t parse_size(const std::string& s, const char* what) {
  std::size_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw ReportError(std::string("bad ") + what + ": '" + s + "'");
  return v;
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string percent_label(double p) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g%%", p * 100.0);
  return buf;
}

std::string samples_text(const std::optional<std::size_t>& s) { return s ? std::to_string(*s) : kNotReached; }

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string run_label(const RunSummary& r) { return r.model + " / " + r.strategy; }

}  // namespace

std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ReportError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw ReportError("cannot write " + path.string());
}

std::string curve_csv(std::span<const CurvePoint> curve) {
  std::string out = "labeled_count,dev_macro_f1,epoch_seconds_mean\n";
  for (const auto& p : curve) {
    out += std::to_string(p.labeled) + "," + format_number(p.dev_f1) + "," + format_number(p.epoch_seconds_mean) + "\n";
  }
  return out;
}

std::vector<CurvePoint> parse_curve_csv(std::string_view text) {
  const auto rows = parse_csv(text);
  if (rows.empty() || rows[0] != std::vector<std::string>{"labeled_count", "dev_macro_f1", "epoch_seconds_mean"}) {
    throw ReportError("curve file has an unexpected header");
  }
  std::vector<CurvePoint> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() != 3) throw ReportError("curve row " + std::to_string(i + 1) + " needs 3 fields");
    out.push_back({parse_size(rows[i][0], "labeled_count"), parse_double(rows[i][1], "dev_macro_f1"),
                   parse_double(rows[i][2], "epoch_seconds_mean")});
  }
  return out;
}

std::vector<CurvePoint> read_curve_csv(const std::filesystem::path& path) { return parse_curve_csv(read_text(path)); }

std::string thresholds_csv(std::span<const ThresholdRow> rows) {
  std::string out = "curve,percentage,baseline,samples\n";
  for (const auto& r : rows) {
    out += r.curve + "," + format_number(r.percentage) + "," + format_number(r.baseline) + "," +
           samples_text(r.samples) + "\n";
  }
  return out;
}

std::vector<ThresholdRow> parse_thresholds_csv(std::string_view text) {
  const auto rows = parse_csv(text);
  if (rows.empty() || rows[0] != std::vector<std::string>{"curve", "percentage", "baseline", "samples"}) {
    throw ReportError("thresholds file has an unexpected header");
  }
  std::vector<ThresholdRow> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& f = rows[i];
    if (f.size() != 4) throw ReportError("thresholds row " + std::to_string(i + 1) + " needs 4 fields");
    ThresholdRow r{f[0], parse_double(f[1], "percentage"), parse_double(f[2], "baseline"), std::nullopt};
    if (f[3] != kNotReached) r.samples = parse_size(f[3], "samples");
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<ThresholdRow> threshold_rows(const ExperimentResult& result, std::span<const double> percentages) {
  std::vector<ThresholdRow> rows;
  auto add = [&](const std::string& name, std::span<const CurvePoint> curve) {
    const auto t = thresholds(curve, result.baseline, percentages);
    for (std::size_t i = 0; i < percentages.size(); ++i) rows.push_back({name, percentages[i], result.baseline, t[i]});
  };
  add("mean", result.mean);
  for (std::size_t s = 0; s < result.runs.size(); ++s) {
    add("seed-" + std::to_string(result.seeds[s]), result.runs[s].curve);
  }
  return rows;
}

void write_run_artifact(const std::filesystem::path& dir, const RunConfig& config, const ExperimentResult& result) {
  std::filesystem::create_directories(dir);
  write_text(dir / "config.snapshot", config.text);
  for (std::size_t s = 0; s < result.runs.size(); ++s) {
    write_text(dir / ("curve.seed-" + std::to_string(result.seeds[s]) + ".csv"), curve_csv(result.runs[s].curve));
  }
  write_text(dir / "curve.mean.csv", curve_csv(result.mean));
  write_text(dir / "thresholds.csv", thresholds_csv(threshold_rows(result, config.thresholds)));

  std::string t = "seed,episode,labeled_count,epochs,epoch_seconds_mean,train_seconds,query_seconds\n";
  for (std::size_t s = 0; s < result.runs.size(); ++s) {
    for (const auto& e : result.runs[s].timings) {
      t += std::to_string(result.seeds[s]) + "," + std::to_string(e.episode) + "," + std::to_string(e.labeled) + "," +
           std::to_string(e.epochs) + "," + format_number(e.epoch_seconds_mean) + "," +
           format_number(e.train_seconds) + "," + format_number(e.query_seconds) + "\n";
    }
  }
  write_text(dir / "timings.csv", t);
}

RunSummary load_run(const std::filesystem::path& dir) {
  RunSummary r;
  r.dir = dir;
  const RunConfig config = make_run_config(parse_config_entries(read_text(dir / "config.snapshot")), dir, false);
  r.model = std::string(model_name(config.model));
  r.strategy = config.strategy.name();
  r.seeds = config.seeds.size();
  r.mean = read_curve_csv(dir / "curve.mean.csv");
  if (r.mean.empty()) throw ReportError(dir.string() + ": mean curve is empty");
  bool found = false;
  for (const auto& row : parse_thresholds_csv(read_text(dir / "thresholds.csv"))) {
    if (row.curve == "mean") {
      r.baseline = row.baseline;
      found = true;
      break;
    }
  }
  if (!found) throw ReportError(dir.string() + ": thresholds.csv has no mean rows");
  return r;
}

ThresholdTable build_report(std::span<const RunSummary> runs, std::span<const double> percentages) {
  if (runs.empty()) throw ReportError("no runs given");
  ThresholdTable table;
  table.percentages.assign(percentages.begin(), percentages.end());
  for (const auto& r : runs) {
    table.rows.push_back({r.model, r.strategy, r.baseline, r.seeds, thresholds(r.mean, r.baseline, percentages)});
  }
  std::stable_sort(table.rows.begin(), table.rows.end(), [](const ReportRow& a, const ReportRow& b) {
    return std::tie(a.model, a.strategy) < std::tie(b.model, b.strategy);
  });
  return table;
}

std::string ThresholdTable::text() const {
  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> header{"model", "strategy", "baseline", "seeds"};
  for (double p : percentages) header.push_back(percent_label(p));
  cells.push_back(header);
  for (const auto& r : rows) {
    std::vector<std::string> line{r.model, r.strategy, fixed(r.baseline, 3), std::to_string(r.seeds)};
    for (const auto& s : r.samples) line.push_back(samples_text(s));
    cells.push_back(std::move(line));
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& line : cells) {
    for (std::size_t i = 0; i < line.size(); ++i) width[i] = std::max(width[i], line[i].size());
  }
  std::string out = "Sampling thresholds (dev, n samples)\n";
  for (const auto& line : cells) {
    std::string row;
    for (std::size_t i = 0; i < line.size(); ++i) {
      row += line[i];
      if (i + 1 < line.size()) row += std::string(width[i] - line[i].size() + 2, ' ');
    }
    out += row + "\n";
  }
  return out;
}

std::string ThresholdTable::csv() const {
  std::string out = "model,strategy,baseline,seeds";
  for (double p : percentages) out += "," + format_number(p);
  out += "\n";
  for (const auto& r : rows) {
    out += r.model + "," + r.strategy + "," + format_number(r.baseline) + "," + std::to_string(r.seeds);
    for (const auto& s : r.samples) out += "," + samples_text(s);
    out += "\n";
  }
  return out;
}

std::string plot_csv(std::span<const RunSummary> runs) {
  std::string out = "run,model,strategy,labeled_count,dev_macro_f1,baseline\n";
  for (const auto& r : runs) {
    for (const auto& p : r.mean) {
      out += r.dir.filename().string() + "," + r.model + "," + r.strategy + "," + std::to_string(p.labeled) + "," +
             format_number(p.dev_f1) + "," + format_number(r.baseline) + "\n";
    }
  }
  return out;
}

std::string render_svg(std::span<const RunSummary> runs, std::span<const double> percentages) {
  if (runs.empty()) throw ReportError("no runs given");
  static constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
                                            "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  constexpr double W = 720, H = 440, left = 60, right = 200, top = 30, bottom = 50;
  const double pw = W - left - right, ph = H - top - bottom;

  double xmax = 1.0, ymin = 1.0, ymax = 0.0;
  for (const auto& r : runs) {
    if (r.mean.empty()) throw ReportError(r.dir.string() + ": empty curve");
    for (const auto& p : r.mean) {
      xmax = std::max(xmax, static_cast<double>(p.labeled));
      ymin = std::min(ymin, p.dev_f1);
      ymax = std::max(ymax, p.dev_f1);
    }
    ymin = std::min(ymin, r.baseline);
    ymax = std::max(ymax, r.baseline);
  }
  ymin = std::floor(ymin * 10.0) / 10.0;
  ymax = std::min(1.0, std::ceil(ymax * 10.0) / 10.0);
  if (ymax <= ymin) ymax = ymin + 0.1;
  auto sx = [&](double x) { return fixed(left + pw * x / xmax, 2); };
  auto sy = [&](double y) { return fixed(top + ph * (1.0 - (y - ymin) / (ymax - ymin)), 2); };

  std::string s;
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fixed(W, 0) + "\" height=\"" + fixed(H, 0) +
       "\" viewBox=\"0 0 " + fixed(W, 0) + " " + fixed(H, 0) + "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<g class=\"axes\" stroke=\"black\">\n";
  s += "<line x1=\"" + sx(0) + "\" y1=\"" + sy(ymin) + "\" x2=\"" + sx(xmax) + "\" y2=\"" + sy(ymin) + "\"/>\n";
  s += "<line x1=\"" + sx(0) + "\" y1=\"" + sy(ymin) + "\" x2=\"" + sx(0) + "\" y2=\"" + sy(ymax) + "\"/>\n";
  s += "</g>\n";
  for (int i = 0; i <= 4; ++i) {
    const double y = ymin + (ymax - ymin) * i / 4.0;
    s += "<text x=\"" + fixed(left - 6, 2) + "\" y=\"" + sy(y) + "\" text-anchor=\"end\">" + fixed(y, 2) + "</text>\n";
    const double x = xmax * i / 4.0;
    s += "<text x=\"" + sx(x) + "\" y=\"" + fixed(top + ph + 16, 2) + "\" text-anchor=\"middle\">" + fixed(x, 0) +
         "</text>\n";
  }
  s += "<text x=\"" + fixed(left + pw / 2, 2) + "\" y=\"" + fixed(H - 10, 2) +
       "\" text-anchor=\"middle\">labeled samples</text>\n";
  s += "<text x=\"14\" y=\"" + fixed(top + ph / 2, 2) + "\" transform=\"rotate(-90 14 " + fixed(top + ph / 2, 2) +
       ")\" text-anchor=\"middle\">dev macro-F1</text>\n";

  for (std::size_t i = 0; i < runs.size(); ++i) {
    const auto& r = runs[i];
    const std::string color = kColors[i % std::size(kColors)];
    s += "<line class=\"baseline\" x1=\"" + sx(0) + "\" y1=\"" + sy(r.baseline) + "\" x2=\"" + sx(xmax) + "\" y2=\"" +
         sy(r.baseline) + "\" stroke=\"" + color + "\" stroke-dasharray=\"4 3\"/>\n";
    s += "<polyline class=\"curve\" fill=\"none\" stroke=\"" + color + "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t k = 0; k < r.mean.size(); ++k) {
      s += (k ? " " : "") + sx(static_cast<double>(r.mean[k].labeled)) + "," + sy(r.mean[k].dev_f1);
    }
    s += "\"/>\n";
    const auto t = thresholds(r.mean, r.baseline, percentages);
    for (std::size_t k = 0; k < t.size(); ++k) {
      if (!t[k]) continue;
      double f1 = 0.0;
      for (const auto& p : r.mean) {
        if (p.labeled == *t[k]) {
          f1 = p.dev_f1;
          break;
        }
      }
      s += "<circle class=\"threshold\" cx=\"" + sx(static_cast<double>(*t[k])) + "\" cy=\"" + sy(f1) +
           "\" r=\"3.5\" fill=\"" + color + "\"><title>" + percent_label(percentages[k]) + ": " +
           std::to_string(*t[k]) + "</title></circle>\n";
    }
    const double ly = top + 14.0 * static_cast<double>(i);
    s += "<line x1=\"" + fixed(W - right + 10, 2) + "\" y1=\"" + fixed(ly, 2) + "\" x2=\"" + fixed(W - right + 30, 2) +
         "\" y2=\"" + fixed(ly, 2) + "\" stroke=\"" + color + "\" stroke-width=\"1.5\"/>\n";
    s += "<text x=\"" + fixed(W - right + 34, 2) + "\" y=\"" + fixed(ly + 4, 2) + "\">" + xml_escape(run_label(r)) +
         "</text>\n";
  }
  s += "</svg>\n";
  return s;
}

std::string sweep_report_json(const SweepOutcome& outcome) {
  using nlohmann::json;
  auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  json j;
  j["algorithm"] = std::string(algorithm_name(outcome.algorithm));
  j["encoding"] = outcome.encoding;
  if (!outcome.result) {
    j["status"] = "failed";
    j["error"] = outcome.error;
    return j.dump(2) + "\n";
  }
  const SweepResult& r = *outcome.result;
  j["status"] = "ok";
  j["iterations"] = r.iterations;
  j["final_value"] = r.final_value;
  json optimum = json::object();
  for (std::size_t m = 0; m < kAllMetrics.size(); ++m) {
    optimum[std::string(metric_name(kAllMetrics[m]))] = num(r.metric_optimum[m]);
  }
  j["metric_optimum"] = optimum;
  json table = json::array();
  for (std::size_t g = 0; g < r.grid.values.size(); ++g) {
    json row;
    row["value"] = r.grid.values[g];
    row["valid_iterations"] = r.valid_iterations[g];
    for (std::size_t m = 0; m < kAllMetrics.size(); ++m) {
      row[std::string(metric_name(kAllMetrics[m]))] = num(r.mean_scores[m][g]);
    }
    table.push_back(row);
  }
  j["scores"] = table;
  return j.dump(2) + "\n";
}

}  // namespace aal
