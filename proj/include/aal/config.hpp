#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "aal/clustering.hpp"
#include "aal/corpus.hpp"
#include "aal/strategies.hpp"
#include "aal/tagger.hpp"

namespace aal {

// Validation failure tied to one config key.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, const std::string& message)
      : std::runtime_error(key + ": " + message), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

enum class StartMode { cold, warm };

struct RunConfig {
  std::filesystem::path corpus;
  DomainMode mode = DomainMode::in_domain;
  std::set<std::string> held_out_topics;

  std::filesystem::path embeddings;        // static table
  std::filesystem::path contextual;        // ACTX1 token store
  std::filesystem::path sentence_vectors;  // optional ACTX1, T = 1

  BackboneKind model = BackboneKind::linear;
  std::size_t hidden = 200;
  StrategyId strategy;
  PosteriorMode posterior = PosteriorMode::softmax_emissions;
  std::size_t atlas_step = 8;

  StartMode start = StartMode::cold;
  ClusterAlgorithm cluster_algorithm = ClusterAlgorithm::kmeans;
  std::optional<double> cluster_param;  // unset: chosen by a sweep
  int cluster_min_pts = 5;
  int sweep_iterations = 20;
  std::vector<ClusterAlgorithm> sweep_algorithms{ClusterAlgorithm::kmeans, ClusterAlgorithm::dbscan,
                                                 ClusterAlgorithm::agglomerative};
  Reducer reducer = Reducer::pca;
  std::filesystem::path reduced_points;

  std::size_t batch_size = 64;
  std::size_t start_size = 64;
  std::vector<std::uint64_t> seeds{1};
  std::optional<std::size_t> budget;
  TrainConfig train;
  std::optional<double> baseline;  // unset: trained on the full pool
  std::vector<double> thresholds{0.90, 0.95, 0.99, 1.00};

  std::filesystem::path output;
  bool checkpoints = false;

  std::string text;  // verbatim source

  bool needs_clusters() const { return start == StartMode::warm || strategy.needs_clusters(); }
};

using ConfigEntries = std::vector<std::pair<std::string, std::string>>;

// `key = value` lines; `#` starts a comment line. Duplicate keys are errors.
ConfigEntries parse_config_entries(std::string_view text);

// Relative paths resolve against base_dir. With check_files, every referenced
// file must exist.
RunConfig make_run_config(const ConfigEntries& entries, const std::filesystem::path& base_dir,
                          bool check_files = true);
RunConfig parse_run_config(std::string_view text, const std::filesystem::path& base_dir,
                           bool check_files = true);
RunConfig load_run_config(const std::filesystem::path& path);

// Every key the parser accepts, for documentation and error messages.
const std::vector<std::string>& config_keys();

std::vector<double> parse_number_list(std::string_view key, std::string_view value);

}  // namespace aal
