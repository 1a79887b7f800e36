#include "aal/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace aal {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split_list(std::string_view s) {
  std::vector<std::string_view> out;
  while (true) {
    const auto comma = s.find(',');
    const auto item = trim(s.substr(0, comma));
    if (!item.empty()) out.push_back(item);
    if (comma == std::string_view::npos) break;
    s.remove_prefix(comma + 1);
  }
  return out;
}

double to_double(std::string_view key, std::string_view v) {
  double out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(out)) {
    throw ConfigError(std::string(key), "expected a number, got '" + std::string(v) + "'");
  }
  return out;
}

std::uint64_t to_uint(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw ConfigError(std::string(key), "expected a non-negative integer, got '" + std::string(v) + "'");
  }
  return out;
}

std::size_t to_positive(std::string_view key, std::string_view v) {
  const auto n = to_uint(key, v);
  if (n == 0) throw ConfigError(std::string(key), "must be positive");
  return static_cast<std::size_t>(n);
}

bool to_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "yes" || v == "on" || v == "1") return true;
  if (v == "false" || v == "no" || v == "off" || v == "0") return false;
  throw ConfigError(std::string(key), "expected true or false, got '" + std::string(v) + "'");
}

std::filesystem::path resolve(const std::filesystem::path& base, std::string_view v) {
  std::filesystem::path p{std::string(v)};
  return p.is_absolute() || base.empty() ? p : base / p;
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys{
      "corpus",          "mode",          "held_out_topics", "embeddings",       "contextual",
      "sentence_vectors", "model",        "hidden",          "strategy",         "posterior",
      "atlas_step",      "start",         "cluster_algorithm", "cluster_param",  "cluster_min_pts",
      "sweep_iterations", "sweep_algorithms", "reducer",     "reduced_points",   "batch_size",
      "start_size",      "seeds",         "budget",          "max_epochs",       "min_epochs",
      "patience",        "minibatch",     "learning_rate",   "dropout",          "baseline",
      "thresholds",      "output",        "checkpoints",
  };
  return keys;
}

std::vector<double> parse_number_list(std::string_view key, std::string_view value) {
  std::vector<double> out;
  for (auto item : split_list(value)) out.push_back(to_double(key, item));
  if (out.empty()) throw ConfigError(std::string(key), "empty list");
  return out;
}

ConfigEntries parse_config_entries(std::string_view text) {
  ConfigEntries out;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    const auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(line_no), "expected 'key = value'");
    }
    std::string key(trim(t.substr(0, eq)));
    std::string value(trim(t.substr(eq + 1)));
    if (key.empty()) throw ConfigError("line " + std::to_string(line_no), "missing key");
    if (!seen.insert(key).second) throw ConfigError(key, "duplicate key");
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

RunConfig make_run_config(const ConfigEntries& entries, const std::filesystem::path& base_dir, bool check_files) {
  RunConfig c;
  const auto& known = config_keys();
  std::map<std::string, std::string> kv;
  for (const auto& [k, v] : entries) {
    if (std::find(known.begin(), known.end(), k) == known.end()) throw ConfigError(k, "unknown key");
    if (!kv.emplace(k, v).second) throw ConfigError(k, "duplicate key");
  }
  auto get = [&](const char* key) -> std::optional<std::string_view> {
    auto it = kv.find(key);
    if (it == kv.end()) return std::nullopt;
    return std::string_view(it->second);
  };

  if (auto v = get("corpus")) c.corpus = resolve(base_dir, *v);
  else throw ConfigError("corpus", "required");
  if (auto v = get("mode")) {
    auto m = parse_mode(*v);
    if (!m) throw ConfigError("mode", "expected in_domain or cross_domain");
    c.mode = *m;
  }
  if (auto v = get("held_out_topics")) {
    for (auto t : split_list(*v)) c.held_out_topics.emplace(t);
  }
  if (c.mode == DomainMode::cross_domain && c.held_out_topics.empty()) {
    throw ConfigError("held_out_topics", "required for cross_domain mode");
  }

  if (auto v = get("embeddings")) c.embeddings = resolve(base_dir, *v);
  if (auto v = get("contextual")) c.contextual = resolve(base_dir, *v);
  if (c.embeddings.empty() == c.contextual.empty()) {
    throw ConfigError(c.embeddings.empty() ? "embeddings" : "contextual",
                      "exactly one of embeddings and contextual must be given");
  }
  if (auto v = get("sentence_vectors")) c.sentence_vectors = resolve(base_dir, *v);

  if (auto v = get("model")) {
    auto m = parse_model_name(*v);
    if (!m) throw ConfigError("model", "expected lincrf or bilstm-crf");
    c.model = *m;
  }
  if (auto v = get("hidden")) c.hidden = to_positive("hidden", *v);
  if (auto v = get("strategy")) {
    auto s = parse_strategy(*v);
    if (!s) throw ConfigError("strategy", "unknown strategy '" + std::string(*v) + "'");
    c.strategy = *s;
  } else {
    throw ConfigError("strategy", "required");
  }
  if (auto v = get("posterior")) {
    if (*v == "softmax") c.posterior = PosteriorMode::softmax_emissions;
    else if (*v == "marginals") c.posterior = PosteriorMode::crf_marginals;
    else throw ConfigError("posterior", "expected softmax or marginals");
  }
  if (auto v = get("atlas_step")) c.atlas_step = to_positive("atlas_step", *v);

  if (auto v = get("start")) {
    if (*v == "cold") c.start = StartMode::cold;
    else if (*v == "warm") c.start = StartMode::warm;
    else throw ConfigError("start", "expected cold or warm");
  }
  if (auto v = get("cluster_algorithm")) {
    auto a = parse_algorithm(*v);
    if (!a) throw ConfigError("cluster_algorithm", "expected kmeans, dbscan or agglomerative");
    c.cluster_algorithm = *a;
  }
  if (auto v = get("cluster_param"); v && *v != "auto") {
    const double p = to_double("cluster_param", *v);
    if (!(p > 0)) throw ConfigError("cluster_param", "must be positive");
    if (c.cluster_algorithm == ClusterAlgorithm::kmeans && p != std::floor(p)) {
      throw ConfigError("cluster_param", "k must be an integer");
    }
    c.cluster_param = p;
  }
  if (auto v = get("cluster_min_pts")) c.cluster_min_pts = static_cast<int>(to_positive("cluster_min_pts", *v));
  if (auto v = get("sweep_iterations")) c.sweep_iterations = static_cast<int>(to_positive("sweep_iterations", *v));
  if (auto v = get("sweep_algorithms")) {
    c.sweep_algorithms.clear();
    for (auto item : split_list(*v)) {
      auto a = parse_algorithm(item);
      if (!a) throw ConfigError("sweep_algorithms", "unknown algorithm '" + std::string(item) + "'");
      c.sweep_algorithms.push_back(*a);
    }
    if (c.sweep_algorithms.empty()) throw ConfigError("sweep_algorithms", "empty list");
  }
  if (auto v = get("reducer")) {
    if (*v == "pca") c.reducer = Reducer::pca;
    else if (*v == "external") c.reducer = Reducer::external;
    else throw ConfigError("reducer", "expected pca or external");
  }
  if (auto v = get("reduced_points")) c.reduced_points = resolve(base_dir, *v);
  if (c.reducer == Reducer::external && c.reduced_points.empty()) {
    throw ConfigError("reduced_points", "required when reducer = external");
  }

  if (auto v = get("batch_size")) c.batch_size = to_positive("batch_size", *v);
  if (auto v = get("start_size")) c.start_size = to_positive("start_size", *v);
  if (auto v = get("seeds")) {
    c.seeds.clear();
    for (auto item : split_list(*v)) c.seeds.push_back(to_uint("seeds", item));
    if (c.seeds.empty()) throw ConfigError("seeds", "empty list");
    std::set<std::uint64_t> unique(c.seeds.begin(), c.seeds.end());
    if (unique.size() != c.seeds.size()) throw ConfigError("seeds", "duplicate seed");
  }
  if (auto v = get("budget")) c.budget = to_positive("budget", *v);
  if (auto v = get("max_epochs")) c.train.max_epochs = static_cast<int>(to_positive("max_epochs", *v));
  if (auto v = get("min_epochs")) c.train.min_epochs = static_cast<int>(to_positive("min_epochs", *v));
  if (auto v = get("patience")) c.train.patience = static_cast<int>(to_positive("patience", *v));
  if (auto v = get("minibatch")) c.train.minibatch = to_positive("minibatch", *v);
  if (auto v = get("learning_rate")) {
    c.train.adam.learning_rate = to_double("learning_rate", *v);
    if (!(c.train.adam.learning_rate > 0)) throw ConfigError("learning_rate", "must be positive");
  }
  if (auto v = get("dropout")) c.train.use_dropout = to_bool("dropout", *v);
  if (c.train.patience > c.train.max_epochs) throw ConfigError("patience", "exceeds max_epochs");
  if (c.train.min_epochs > c.train.max_epochs) throw ConfigError("min_epochs", "exceeds max_epochs");
  c.train.validate();
  if (auto v = get("baseline"); v && *v != "auto") {
    c.baseline = to_double("baseline", *v);
    if (!(*c.baseline > 0 && *c.baseline <= 1)) throw ConfigError("baseline", "must be in (0, 1]");
  }
  if (auto v = get("thresholds")) {
    c.thresholds = parse_number_list("thresholds", *v);
    for (double p : c.thresholds) {
      if (!(p > 0 && p <= 1)) throw ConfigError("thresholds", "percentages must be in (0, 1]");
    }
  }
  if (auto v = get("output")) c.output = resolve(base_dir, *v);
  if (auto v = get("checkpoints")) c.checkpoints = to_bool("checkpoints", *v);

  if (check_files) {
    auto need = [](const char* key, const std::filesystem::path& p) {
      if (!p.empty() && !std::filesystem::is_regular_file(p)) {
        throw ConfigError(key, "file not found: " + p.string());
      }
    };
    need("corpus", c.corpus);
    need("embeddings", c.embeddings);
    need("contextual", c.contextual);
    need("sentence_vectors", c.sentence_vectors);
    need("reduced_points", c.reduced_points);
  }
  return c;
}

RunConfig parse_run_config(std::string_view text, const std::filesystem::path& base_dir, bool check_files) {
  RunConfig c = make_run_config(parse_config_entries(text), base_dir, check_files);
  c.text = std::string(text);
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("config", "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), path.parent_path());
}

}  // namespace aal
