#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <cstring>
#include <regex>

#include <json.hpp>

#include "aal/report.hpp"
#include "aal/rng.hpp"
#include "engine_fixture.hpp"

using namespace aal;

namespace {

const std::filesystem::path kData = AAL_TEST_DATA;

std::size_t count(const std::string& s, const std::string& needle) {
  std::size_t n = 0;
  for (auto p = s.find(needle); p != std::string::npos; p = s.find(needle, p + 1)) ++n;
  return n;
}

RunSummary summary(std::string model, std::string strategy, double baseline, std::vector<CurvePoint> mean) {
  RunSummary r;
  r.dir = model + "-" + strategy;
  r.model = std::move(model);
  r.strategy = std::move(strategy);
  r.seeds = 1;
  r.baseline = baseline;
  r.mean = std::move(mean);
  return r;
}

}  // namespace

TEST_CASE("numbers round-trip through their text") {
  Rng rng(3);
  for (int i = 0; i < 2000; ++i) {
    const double v = std::ldexp(rng.uniform() - 0.5, static_cast<int>(rng.uniform() * 40) - 20);
    const double back = std::strtod(format_number(v).c_str(), nullptr);
    CHECK(std::memcmp(&v, &back, sizeof v) == 0);
  }
  CHECK(format_number(0.5) == "0.5");
  CHECK(format_number(64) == "64");
}

TEST_CASE("curve csv round-trips") {
  const std::vector<CurvePoint> c{{64, 0.1 + 0.2, 1.0 / 3}, {128, 0.6523, 0.0}};
  const std::string text = curve_csv(c);
  CHECK(text.rfind("labeled_count,dev_macro_f1,epoch_seconds_mean\n", 0) == 0);
  const auto back = parse_curve_csv(text);
  REQUIRE(back.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(back[i].labeled == c[i].labeled);
    CHECK(back[i].dev_f1 == c[i].dev_f1);
    CHECK(back[i].epoch_seconds_mean == c[i].epoch_seconds_mean);
  }
  CHECK_THROWS(parse_curve_csv("wrong,header\n1,2\n"));
  CHECK_THROWS(parse_curve_csv("labeled_count,dev_macro_f1,epoch_seconds_mean\n64,abc,0\n"));
}

TEST_CASE("thresholds csv round-trips, including not reached") {
  const std::vector<ThresholdRow> rows{{"mean", 0.9, 0.66, 192}, {"mean", 1.0, 0.66, std::nullopt},
                                       {"seed-3", 0.9, 0.66, 64}};
  const std::string text = thresholds_csv(rows);
  CHECK(text.find(kNotReached) != std::string::npos);
  const auto back = parse_thresholds_csv(text);
  REQUIRE(back.size() == 3);
  CHECK(back[0].samples == std::size_t{192});
  CHECK_FALSE(back[1].samples.has_value());
  CHECK(back[2].curve == "seed-3");
  CHECK(back[2].baseline == 0.66);
}

TEST_CASE("threshold table on the recorded ATLAS curve") {
  const RunSummary run = load_run(kData / "table3_atlas");
  CHECK(run.model == "bilstm-crf");
  CHECK(run.strategy == "atlas");
  CHECK(run.seeds == 10);
  CHECK(run.baseline == 0.677);
  const std::vector<double> p{0.90, 0.95, 0.99, 1.00};
  const auto table = build_report(std::span<const RunSummary>(&run, 1), p);
  REQUIRE(table.rows.size() == 1);
  const std::vector<std::optional<std::size_t>> want{320, 640, 2112, 2432};
  CHECK(table.rows[0].samples == want);
  const std::string text = table.text();
  CHECK(text.rfind("Sampling thresholds (dev, n samples)", 0) == 0);
  CHECK(std::regex_search(text, std::regex(R"(bilstm-crf +atlas +0\.677 +10 +320 +640 +2112 +2432)")));
}

TEST_CASE("report rows are sorted by model then strategy") {
  const std::vector<CurvePoint> c{{64, 0.5, 0}, {128, 0.7, 0}};
  const std::vector<RunSummary> runs{summary("lincrf", "random", 0.7, c), summary("bilstm-crf", "random", 0.7, c),
                                     summary("lincrf", "atlas", 0.7, c)};
  const std::vector<double> p{0.9, 1.0};
  const auto t = build_report(runs, p);
  REQUIRE(t.rows.size() == 3);
  CHECK(t.rows[0].model == "bilstm-crf");
  CHECK(t.rows[1].strategy == "atlas");
  CHECK(t.rows[2].strategy == "random");
  CHECK(t.rows[0].samples[0] == std::size_t{128});
  const std::string csv = t.csv();
  CHECK(count(csv, "\n") == 4);
  CHECK(csv.find("not reached") == std::string::npos);

  const std::vector<RunSummary> low{summary("lincrf", "random", 0.9, c)};
  CHECK(build_report(low, p).text().find("not reached") != std::string::npos);
  CHECK_THROWS_AS(build_report(std::span<const RunSummary>{}, p), ReportError);
}

TEST_CASE("svg has one polyline per run with one vertex per point") {
  const std::vector<RunSummary> runs{
      summary("lincrf", "random", 0.7, {{64, 0.5, 0}, {128, 0.6, 0}, {192, 0.7, 0}}),
      summary("lincrf", "atlas", 0.7, {{64, 0.55, 0}, {128, 0.72, 0}})};
  const std::vector<double> p{0.9, 1.0};
  const std::string svg = render_svg(runs, p);
  CHECK(svg == render_svg(runs, p));
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(count(svg, "class=\"curve\"") == 2);
  CHECK(count(svg, "class=\"baseline\"") == 2);
  // random reaches 90% and 100% at 192; atlas reaches both at 128
  CHECK(count(svg, "class=\"threshold\"") == 4);
  std::smatch m;
  std::string rest = svg;
  std::vector<std::size_t> vertices;
  const std::regex poly(R"(class="curve"[^>]*points="([^"]*)\")");
  while (std::regex_search(rest, m, poly)) {
    const std::string pts = m[1];
    vertices.push_back(count(pts, ","));
    rest = m.suffix();
  }
  CHECK(vertices == std::vector<std::size_t>{3, 2});
  CHECK_THROWS_AS(render_svg(std::span<const RunSummary>{}, p), ReportError);
}

TEST_CASE("plot csv lists every curve point") {
  const std::vector<RunSummary> runs{summary("lincrf", "random", 0.7, {{64, 0.5, 0}, {128, 0.6, 0}})};
  const std::string csv = plot_csv(runs);
  CHECK(csv.rfind("run,model,strategy,labeled_count,dev_macro_f1,baseline\n", 0) == 0);
  CHECK(count(csv, "\n") == 3);
}

TEST_CASE("sweep report json") {
  SweepOutcome failed;
  failed.algorithm = ClusterAlgorithm::dbscan;
  failed.encoding = "mean-pca";
  failed.error = "no scorable grid value";
  const auto j = nlohmann::json::parse(sweep_report_json(failed));
  CHECK(j["status"] == "failed");
  CHECK(j["algorithm"] == "dbscan");
  CHECK(j["error"] == "no scorable grid value");

  Matrix pts(60, 2);
  Rng rng(1);
  for (int i = 0; i < 60; ++i) {
    pts(i, 0) = (i % 3) * 5.0 + rng.normal() * 0.1;
    pts(i, 1) = rng.normal() * 0.1;
  }
  SweepOutcome ok;
  ok.algorithm = ClusterAlgorithm::kmeans;
  ok.encoding = "mean-pca";
  ok.result = sweep_optimize(pts, ClusterAlgorithm::kmeans, 5, 3);
  const auto k = nlohmann::json::parse(sweep_report_json(ok));
  CHECK(k["status"] == "ok");
  CHECK(k["final_value"].get<double>() == ok.result->final_value);
  CHECK(k["scores"].size() == ok.result->grid.values.size());
}

TEST_CASE("run artifact holds every file and loads back") {
  fixture::TempDir dir("artifact");
  fixture::write_small_corpus(dir.path);
  write_text(dir.path / "run.conf", fixture::quick_config_text("random", "out") + "seeds = 1,2\nbudget = 64\n");
  const RunConfig c = load_run_config(dir.path / "run.conf");
  const ExperimentResult r = run_experiment(c, load_experiment_data(c));
  write_run_artifact(c.output, c, r);
  for (const char* f : {"config.snapshot", "curve.seed-1.csv", "curve.seed-2.csv", "curve.mean.csv",
                        "thresholds.csv", "timings.csv"}) {
    CHECK(std::filesystem::exists(c.output / f));
  }
  CHECK(read_text(c.output / "config.snapshot") == c.text);
  const auto rows = parse_thresholds_csv(read_text(c.output / "thresholds.csv"));
  CHECK(rows.size() == 3 * c.thresholds.size());
  CHECK(rows.front().curve == "mean");
  for (const auto& row : rows) CHECK(row.baseline == r.baseline);
  const auto seed2 = read_curve_csv(c.output / "curve.seed-2.csv");
  REQUIRE(seed2.size() == r.runs[1].curve.size());
  CHECK(seed2.back().dev_f1 == r.runs[1].curve.back().dev_f1);

  const RunSummary s = load_run(c.output);
  CHECK(s.model == "lincrf");
  CHECK(s.strategy == "random");
  CHECK(s.seeds == 2);
  CHECK(s.baseline == r.baseline);
  CHECK(s.mean.size() == r.mean.size());
  const std::string timings = read_text(c.output / "timings.csv");
  CHECK(timings.rfind("seed,episode,labeled_count,epochs,epoch_seconds_mean,train_seconds,query_seconds\n", 0) == 0);
  CHECK(count(timings, "\n") == 1 + r.runs[0].timings.size() + r.runs[1].timings.size());
}
