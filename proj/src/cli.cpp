#include "aal/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>

#include "aal/config.hpp"
#include "aal/engine.hpp"
#include "aal/exec.hpp"
#include "aal/report.hpp"
#include "aal/service.hpp"
#include "aal/synth.hpp"

// must follow the Eigen includes
#include <httplib.h>

namespace aal {

namespace fs = std::filesystem;

namespace {

std::string encoding_name(const RunConfig& c) {
  if (c.reducer == Reducer::external) return "external";
  return c.sentence_vectors.empty() ? "mean-pca" : "precomputed-pca";
}

void mark_failed(const fs::path& dir, const std::string& message) {
  try {
    fs::create_directories(dir);
    write_text(dir / "FAILED", message + "\n");
  } catch (const std::exception&) {
  }
}

int cmd_run(const fs::path& config_path, bool force, std::ostream& out, std::ostream& err) {
  const RunConfig config = load_run_config(config_path);
  if (config.output.empty()) throw ConfigError("output", "required for run");
  if (fs::exists(config.output) && !(fs::is_directory(config.output) && fs::is_empty(config.output))) {
    if (!force) {
      err << "error: output directory " << config.output.string() << " already exists (use --force to replace it)\n";
      return 2;
    }
    fs::remove_all(config.output);
  }
  fs::create_directories(config.output);
  try {
    const ExperimentData data = load_experiment_data(config);
    ExperimentOptions options;
    if (config.checkpoints) options.checkpoint_dir = config.output / "checkpoints";
    const ExperimentResult result = run_experiment(config, data, options);
    write_run_artifact(config.output, config, result);
    out << "run finished: " << result.runs.size() << " seed(s), baseline " << format_number(result.baseline) << "\n";
    const auto t = thresholds(result.mean, result.baseline, config.thresholds);
    for (std::size_t i = 0; i < t.size(); ++i) {
      out << "  " << format_number(config.thresholds[i] * 100) << "%: "
          << (t[i] ? std::to_string(*t[i]) : std::string(kNotReached)) << "\n";
    }
    return 0;
  } catch (const ConfigError& e) {
    mark_failed(config.output, e.what());
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    mark_failed(config.output, e.what());
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

int cmd_sweep(const fs::path& config_path, fs::path out_dir, std::ostream& out, std::ostream& err) {
  const RunConfig config = load_run_config(config_path);
  if (out_dir.empty()) out_dir = config.output;
  if (out_dir.empty()) throw ConfigError("output", "required for sweep-clusters (or pass --out)");
  fs::create_directories(out_dir);
  const ExperimentData data = load_experiment_data(config);
  const Matrix points = reduced_pool_points(config, data);
  const std::string encoding = encoding_name(config);
  int failures = 0;
  for (ClusterAlgorithm a : config.sweep_algorithms) {
    SweepOutcome o;
    o.algorithm = a;
    o.encoding = encoding;
    try {
      o.result = sweep_optimize(points, a, sweep_seed(config), config.sweep_iterations, std::nullopt,
                                config.cluster_min_pts);
      out << algorithm_name(a) << " / " << encoding << ": " << format_number(o.result->final_value) << "\n";
    } catch (const ClusterError& e) {
      o.error = e.what();
      ++failures;
      out << algorithm_name(a) << " / " << encoding << ": FAILED (" << e.what() << ")\n";
    }
    write_text(out_dir / ("sweep." + std::string(algorithm_name(a)) + "." + encoding + ".json"),
               sweep_report_json(o));
  }
  if (failures) err << failures << " sweep(s) failed\n";
  return failures ? 1 : 0;
}

std::vector<RunSummary> load_runs(const std::vector<std::string>& dirs) {
  std::vector<RunSummary> runs;
  for (const auto& d : dirs) runs.push_back(load_run(d));
  return runs;
}

int cmd_report(const std::vector<std::string>& dirs, const std::string& percentages, const std::string& csv,
               std::ostream& out) {
  const auto p = parse_number_list("thresholds", percentages);
  const auto runs = load_runs(dirs);
  const ThresholdTable table = build_report(runs, p);
  out << table.text();
  if (!csv.empty()) write_text(csv, table.csv());
  return 0;
}

int cmd_plot(const std::vector<std::string>& dirs, const fs::path& svg, const std::string& percentages,
             std::ostream& out) {
  const auto p = parse_number_list("thresholds", percentages);
  const auto runs = load_runs(dirs);
  write_text(svg, render_svg(runs, p));
  fs::path csv = svg;
  csv.replace_extension(".csv");
  write_text(csv, plot_csv(runs));
  out << "wrote " << svg.string() << " and " << csv.string() << "\n";
  return 0;
}

int cmd_serve(const fs::path& config_path, const std::string& host, int port, fs::path state_dir, std::ostream& out,
              std::ostream& err) {
  AnnotationService::Options o;
  o.defaults = parse_config_entries(read_text(config_path));
  o.base_dir = config_path.parent_path();
  make_run_config(o.defaults, o.base_dir, true);
  o.state_dir = state_dir.empty() ? o.base_dir / "sessions" : state_dir;
  AnnotationService service(o);
  httplib::Server server;
  service.mount(server);
  out << "listening on " << host << ":" << port << std::endl;
  if (!server.listen(host, port)) {
    err << "error: cannot listen on " << host << ":" << port << "\n";
    return 1;
  }
  return 0;
}

int cmd_synth(const fs::path& dir, std::uint64_t seed, std::ostream& out) {
  SynthConfig c;
  c.seed = seed;
  const SynthData d = generate_synthetic(c);
  write_synthetic(dir, d);
  out << "wrote " << d.sentences.size() << " sentences and " << d.words.size() << " word vectors to " << dir.string()
      << "\n";
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  configure_threads_from_env();
  CLI::App app{"Active learning experiments for token-level argument tagging"};
  app.require_subcommand(1);

  std::string config, out_path, csv, host = "127.0.0.1", state;
  std::string percentages = "0.90,0.95,0.99,1.00";
  std::vector<std::string> runs;
  bool force = false;
  int port = 8080;
  std::uint64_t seed = 2024;

  auto* run = app.add_subcommand("run", "Run an experiment and write its artifact directory");
  run->add_option("--config", config, "Config file")->required();
  run->add_flag("--force", force, "Replace an existing output directory");

  auto* sweep = app.add_subcommand("sweep-clusters", "Tune clustering parameters for each configured algorithm");
  sweep->add_option("--config", config, "Config file")->required();
  sweep->add_option("--out", out_path, "Report directory (default: the config's output)");

  auto* report = app.add_subcommand("report", "Threshold table over run directories");
  report->add_option("--runs", runs, "Run directories")->required();
  report->add_option("--thresholds", percentages, "Comma-separated fractions of the baseline");
  report->add_option("--csv", csv, "Also write the table as CSV");

  auto* plot = app.add_subcommand("plot", "Learning-curve SVG plus its CSV");
  plot->add_option("--runs", runs, "Run directories")->required();
  plot->add_option("--out", out_path, "SVG output path")->required();
  plot->add_option("--thresholds", percentages, "Comma-separated fractions of the baseline");

  auto* serve = app.add_subcommand("serve", "Annotation HTTP service");
  serve->add_option("--config", config, "Default session config")->required();
  serve->add_option("--port", port, "Port")->required();
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--state", state, "Session state directory");

  auto* synth = app.add_subcommand("synth", "Write the synthetic corpus and embeddings");
  synth->add_option("--out", out_path, "Output directory")->required();
  synth->add_option("--seed", seed, "Generator seed");

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    if (!rev.empty()) rev.pop_back();
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (run->parsed()) return cmd_run(config, force, out, err);
    if (sweep->parsed()) return cmd_sweep(config, out_path, out, err);
    if (report->parsed()) return cmd_report(runs, percentages, csv, out);
    if (plot->parsed()) return cmd_plot(runs, out_path, percentages, out);
    if (serve->parsed()) return cmd_serve(config, host, port, state, out, err);
    if (synth->parsed()) return cmd_synth(out_path, seed, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace aal
