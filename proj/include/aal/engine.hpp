#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "aal/clustering.hpp"
#include "aal/config.hpp"
#include "aal/corpus.hpp"
#include "aal/embeddings.hpp"
#include "aal/strategies.hpp"
#include "aal/tagger.hpp"

namespace aal {

class EngineError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The unlabeled training pool; position i is the same sentence everywhere.
struct PoolData {
  std::vector<std::string> ids;
  std::vector<std::string> topics;
  std::vector<std::vector<std::string>> tokens;
  std::vector<Matrix> inputs;
  std::vector<std::vector<int>> gold;  // read only by the gold oracle
  Matrix sentence_vectors;             // N x D
  std::size_t size() const { return ids.size(); }
};

struct ExperimentData {
  PoolData pool;
  std::vector<EncodedSentence> dev;
  std::vector<EncodedSentence> test;
  std::size_t input_dim = 0;
};

ExperimentData prepare_data(const Splits& splits, const InputEncoder& encoder);
ExperimentData load_experiment_data(const RunConfig& config);

class Oracle {
 public:
  virtual ~Oracle() = default;
  // One label sequence per queried pool position, each as long as the sentence.
  virtual std::vector<std::vector<int>> label(std::span<const std::size_t> positions) = 0;
};

class GoldOracle final : public Oracle {
 public:
  explicit GoldOracle(const PoolData& pool) : pool_(pool) {}
  std::vector<std::vector<int>> label(std::span<const std::size_t> positions) override;

 private:
  const PoolData& pool_;
};

struct CurvePoint {
  std::size_t labeled = 0;
  double dev_f1 = 0.0;
  double epoch_seconds_mean = 0.0;
};

struct EpisodeTiming {
  int episode = 0;
  std::size_t labeled = 0;
  int epochs = 0;
  double epoch_seconds_mean = 0.0;
  double train_seconds = 0.0;
  double query_seconds = 0.0;
};

struct ALState {
  std::uint64_t seed = 0;
  std::vector<std::size_t> labeled;      // pool positions in labeling order
  std::vector<std::size_t> unlabeled;    // ascending pool positions
  std::vector<std::vector<int>> labels;  // per pool position, empty until labeled
  int episode = 0;
  std::vector<CurvePoint> curve;
  std::vector<EpisodeTiming> timings;
};

struct LoopSettings {
  ModelSpec spec;
  TrainConfig train;
  StrategyId strategy;
  StartMode start = StartMode::cold;
  std::size_t batch_size = 64;
  std::size_t start_size = 64;
  std::optional<std::size_t> budget;
  PosteriorMode posterior = PosteriorMode::softmax_emissions;
  std::size_t atlas_step = 8;
  BinaryConfig binary;

  static LoopSettings from(const RunConfig& config, std::size_t input_dim);
};

// Reduced sentence vectors plus the clustering configuration chosen for them.
struct ClusterSetup {
  Matrix points;
  ClusterAlgorithm algorithm = ClusterAlgorithm::kmeans;
  ClusterParams params;
  std::optional<SweepResult> sweep;

  ClusterModel fit(std::uint64_t seed) const;
};

// 2-d points for the pool: PCA of the sentence vectors or the external file.
Matrix reduced_pool_points(const RunConfig& config, const ExperimentData& data);
std::uint64_t sweep_seed(const RunConfig& config);

// Reduces the pool's sentence vectors and, when the config leaves the cluster
// parameter open, picks it with a sweep.
ClusterSetup prepare_clusters(const RunConfig& config, const ExperimentData& data, std::uint64_t sweep_seed);

ALState initial_state(std::size_t pool_size, std::uint64_t seed);

// Both return pool positions drawn from state.unlabeled.
std::vector<std::size_t> cold_start(const ALState& state, std::size_t n, std::uint64_t seed);
std::vector<std::size_t> warm_start(const ALState& state, std::size_t n, const ClusterModel& clusters,
                                    const Matrix& points, std::uint64_t seed);
std::vector<std::size_t> start_batch(const ALState& state, const LoopSettings& settings,
                                     const ClusterModel* clusters, const Matrix* points);

// Moves positions U -> L with their labels. Validates membership and lengths.
void apply_labels(ALState& state, const PoolData& pool, std::span<const std::size_t> positions,
                  std::vector<std::vector<int>> labels);

bool finished(const ALState& state, const LoopSettings& settings);
std::size_t next_batch_size(const ALState& state, const LoopSettings& settings);

// Fresh model trained on L; appends the curve point and timing row.
TaggerModel train_on_labeled(ALState& state, const ExperimentData& data, const LoopSettings& settings);

std::vector<std::size_t> query_batch(const ALState& state, const TaggerModel& model, const ExperimentData& data,
                                     const LoopSettings& settings, const ClusterModel* clusters,
                                     const Matrix* points, AtlasTrace* trace = nullptr);

using ModelHook = std::function<void(const ALState&, const TaggerModel&)>;

// Train, evaluate, then (unless finished) query, label and apply one batch.
void run_episode(ALState& state, const ExperimentData& data, const LoopSettings& settings, Oracle& oracle,
                 const ClusterModel* clusters, const Matrix* points, const ModelHook& hook = {});

// One seed's loop driven one labeled batch at a time. Construction picks the
// start batch; every submit applies the labels of the pending batch, trains,
// evaluates and queries the next batch (or finishes). A gold-oracle run and a
// human-labeled session with the same labels follow the same trajectory.
class ALDriver {
 public:
  ALDriver(const ExperimentData& data, LoopSettings settings, const ClusterSetup* clusters, std::uint64_t seed);
  // Resumes a saved loop.
  ALDriver(const ExperimentData& data, LoopSettings settings, const ClusterSetup* clusters, ALState state,
           std::vector<std::size_t> pending, bool done);

  const ALState& state() const { return state_; }
  const LoopSettings& settings() const { return settings_; }
  const std::vector<std::size_t>& pending() const { return pending_; }
  bool done() const { return done_; }

  void submit(std::vector<std::vector<int>> labels, const ModelHook& hook = {});

 private:
  const ExperimentData* data_;
  LoopSettings settings_;
  const ClusterSetup* setup_;
  std::optional<ClusterModel> clusters_;
  ALState state_;
  std::vector<std::size_t> pending_;
  bool done_ = false;
};

// Cluster fit used by a seed's loop; nullopt when neither the start nor the
// strategy needs clusters.
std::optional<ClusterModel> seed_clusters(const ClusterSetup* setup, const LoopSettings& settings,
                                          std::uint64_t seed);

// Clusters for a whole experiment (reduction plus an optional sweep), or
// nullopt when the config does not need them.
std::optional<ClusterSetup> experiment_clusters(const RunConfig& config, const ExperimentData& data);

// A full gold-oracle run for one seed: start batch, then episodes until the
// pool or the budget is exhausted.
ALState run_seed(const ExperimentData& data, const LoopSettings& settings, const ClusterSetup* clusters,
                 std::uint64_t seed, const ModelHook& hook = {});

std::vector<CurvePoint> mean_curve(std::span<const ALState> runs);

// Mean over seeds of the best dev F1 reached on the whole pool.
struct BaselineResult {
  double mean = 0.0;
  std::vector<double> per_seed;
};
BaselineResult baseline_f1(const ExperimentData& data, const LoopSettings& settings,
                           std::span<const std::uint64_t> seeds);

// Smallest labeled count whose F1 reaches p * baseline, per percentage.
std::vector<std::optional<std::size_t>> thresholds(std::span<const CurvePoint> curve, double baseline,
                                                   std::span<const double> percentages);

struct ExperimentResult {
  std::vector<std::uint64_t> seeds;
  std::vector<ALState> runs;
  std::vector<CurvePoint> mean;
  double baseline = 0.0;
  std::vector<double> baseline_per_seed;  // empty when the baseline was given
  std::optional<ClusterSetup> clusters;
};

struct ExperimentOptions {
  std::filesystem::path checkpoint_dir;  // empty: no checkpoints
};

ExperimentResult run_experiment(const RunConfig& config, const ExperimentData& data,
                                const ExperimentOptions& options = {});

double evaluate_split(const TaggerModel& model, std::span<const EncodedSentence> sentences);

}  // namespace aal
