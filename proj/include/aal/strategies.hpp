#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "aal/clustering.hpp"
#include "aal/params.hpp"
#include "aal/rng.hpp"
#include "aal/tagger.hpp"

namespace aal {

class StrategyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Criterion { least_confidence, margin, entropy };

// Token-averaged score; higher means more uncertain.
//   LC      1 - p1
//   margin  1 - (p1 - p2)
//   entropy -sum p ln p
double sequence_uncertainty(const Matrix& posteriors, Criterion criterion);

enum class StrategyKind {
  random,
  uncertainty,
  cluster_random,
  cluster_uncertainty,
  cluster_representative,
  cluster_diversity,
  atlas,
};

struct StrategyId {
  StrategyKind kind = StrategyKind::random;
  Criterion criterion = Criterion::entropy;  // uncertainty kinds only

  std::string name() const;
  bool needs_model() const;
  bool needs_clusters() const;
  friend bool operator==(const StrategyId&, const StrategyId&) = default;
};

std::optional<StrategyId> parse_strategy(std::string_view s);
const std::vector<std::string>& strategy_names();

struct QueryBatch {
  std::vector<std::string> ids;
  std::string strategy;
  int episode = 0;
};

// Cluster structure restricted to the current pool: row i describes pool
// position i. Clusters with no remaining members simply get no quota.
struct ClusterView {
  std::vector<int> assignments;
  Matrix points;   // pool size x 2
  Matrix centers;  // C x 2

  int clusters() const { return static_cast<int>(centers.rows()); }
  static ClusterView restrict(const ClusterModel& model, const Matrix& points,
                              std::span<const std::size_t> rows);
};

// Splits `budget` over clusters: equal shares, remainder round-robin by
// decreasing size (ties to the lower index), shortfalls of small clusters
// redistributed until the budget or the clusters are exhausted.
std::vector<std::size_t> allocate_quotas(std::span<const std::size_t> sizes, std::size_t budget);

// All selectors return distinct pool positions, min(B, |U|) of them.
std::vector<std::size_t> select_random(std::size_t pool_size, std::size_t B, Rng& rng);
std::vector<std::size_t> select_uncertainty(std::span<const std::string> ids, std::span<const double> scores,
                                            std::size_t B);
std::vector<std::size_t> select_cluster_random(const ClusterView& clusters, std::size_t B, Rng& rng);
std::vector<std::size_t> select_cluster_uncertainty(std::span<const std::string> ids,
                                                    std::span<const double> scores,
                                                    const ClusterView& clusters, std::size_t B, Rng& rng);
std::vector<std::size_t> select_cluster_representative(std::span<const std::string> ids,
                                                       const ClusterView& clusters, std::size_t B, Rng& rng);
std::vector<std::size_t> select_cluster_diversity(std::span<const std::string> ids,
                                                  const ClusterView& clusters, std::size_t B, Rng& rng);

// ---- ATLAS ---------------------------------------------------------------

struct Buckets {
  std::vector<std::size_t> correct;
  std::vector<std::size_t> incorrect;
};

// Sentence goes to `correct` when more than half of its tokens are right.
Buckets bucket_predictions(std::span<const std::vector<int>> predicted,
                           std::span<const std::vector<int>> gold);
Buckets bucket_predictions(const TaggerModel& model, std::span<const EncodedSentence> validation);

struct BinaryConfig {
  std::size_t hidden = 128;
  int epochs = 10;
  std::size_t minibatch = 64;
  AdamConfig adam;
};

// Two stacked linear maps to a single logit; logit > 0 predicts "incorrect".
class BinaryCorrectnessModel {
 public:
  static BinaryCorrectnessModel create(std::size_t input_dim, std::size_t hidden, std::uint64_t seed);

  double logit(const Vector& x) const;
  bool predicts_incorrect(const Vector& x) const { return logit(x) > 0.0; }
  std::size_t input_dim() const { return input_dim_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  // BCE-with-logits mean loss and its gradient over the given rows.
  double loss_and_gradient(const Matrix& x, const std::vector<double>& target,
                           std::span<const std::size_t> rows, ParamStore& grad) const;

 private:
  std::size_t input_dim_ = 0;
  std::size_t hidden_ = 0;
  ParamStore params_;
};

class DegenerateTraining : public StrategyError {
 public:
  using StrategyError::StrategyError;
};

// Rows of `correct`/`incorrect` are sentence representations. Throws
// DegenerateTraining when either side is empty.
BinaryCorrectnessModel train_binary(const Matrix& correct, const Matrix& incorrect, const BinaryConfig& config,
                                    std::uint64_t seed);

struct AtlasRound {
  std::size_t binary_train_size = 0;
  std::size_t predicted_incorrect = 0;
  std::vector<std::size_t> picked;
};

struct AtlasTrace {
  bool fell_back = false;
  std::vector<AtlasRound> rounds;
  // bucket, then train / classify / select / flip per round
  std::vector<std::string> steps;
};

// pool: |U| x D representations; validation: |V| x D with buckets over its rows.
std::vector<std::size_t> atlas_select(const Matrix& pool, const Matrix& validation, const Buckets& buckets,
                                      std::size_t B, std::size_t step, const BinaryConfig& config,
                                      std::uint64_t seed, AtlasTrace* trace = nullptr);

// ---- dispatch ------------------------------------------------------------

struct SelectionContext {
  std::span<const std::string> ids;
  std::span<const Matrix* const> inputs;  // token inputs per pool item
  const TaggerModel* model = nullptr;
  const ClusterView* clusters = nullptr;
  std::span<const EncodedSentence> validation;  // ATLAS only
  PosteriorMode posterior_mode = PosteriorMode::softmax_emissions;
  std::size_t atlas_step = 8;
  BinaryConfig binary;
  AtlasTrace* atlas_trace = nullptr;
};

std::vector<double> score_pool(const TaggerModel& model, std::span<const Matrix* const> inputs,
                               Criterion criterion, PosteriorMode mode, Exec exec = Exec::parallel);

std::vector<std::size_t> select_positions(const StrategyId& strategy, const SelectionContext& ctx, std::size_t B,
                                          std::uint64_t seed);

QueryBatch select(const StrategyId& strategy, const SelectionContext& ctx, std::size_t B, std::uint64_t seed,
                  int episode = 0);

}  // namespace aal
