#include "aal/strategies.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>

#include "aal/log.hpp"

namespace aal {

double sequence_uncertainty(const Matrix& posteriors, Criterion criterion) {
  const auto t = posteriors.rows();
  if (t == 0 || posteriors.cols() == 0) throw StrategyError("empty posterior matrix");
  double total = 0.0;
  for (Eigen::Index i = 0; i < t; ++i) {
    double p1 = -1.0, p2 = -1.0;
    double h = 0.0;
    for (Eigen::Index j = 0; j < posteriors.cols(); ++j) {
      const double p = posteriors(i, j);
      if (p > p1) {
        p2 = p1;
        p1 = p;
      } else if (p > p2) {
        p2 = p;
      }
      if (p > 0.0) h -= p * std::log(p);
    }
    if (p2 < 0.0) p2 = 0.0;
    switch (criterion) {
      case Criterion::least_confidence: total += 1.0 - p1; break;
      case Criterion::margin: total += 1.0 - (p1 - p2); break;
      case Criterion::entropy: total += h; break;
    }
  }
  return total / static_cast<double>(t);
}

// ---- identifiers ---------------------------------------------------------

namespace {

std::string_view criterion_suffix(Criterion c) {
  switch (c) {
    case Criterion::least_confidence: return "lc";
    case Criterion::margin: return "margin";
    case Criterion::entropy: return "entropy";
  }
  return "?";
}

std::optional<Criterion> parse_criterion(std::string_view s) {
  if (s == "lc") return Criterion::least_confidence;
  if (s == "margin") return Criterion::margin;
  if (s == "entropy") return Criterion::entropy;
  return std::nullopt;
}

}  // namespace

std::string StrategyId::name() const {
  switch (kind) {
    case StrategyKind::random: return "random";
    case StrategyKind::uncertainty: return "uncertainty-" + std::string(criterion_suffix(criterion));
    case StrategyKind::cluster_random: return "cluster-random";
    case StrategyKind::cluster_uncertainty: return "cluster-uncertainty-" + std::string(criterion_suffix(criterion));
    case StrategyKind::cluster_representative: return "cluster-representative";
    case StrategyKind::cluster_diversity: return "cluster-diversity";
    case StrategyKind::atlas: return "atlas";
  }
  return "?";
}

bool StrategyId::needs_model() const {
  return kind == StrategyKind::uncertainty || kind == StrategyKind::cluster_uncertainty ||
         kind == StrategyKind::atlas;
}

bool StrategyId::needs_clusters() const {
  return kind == StrategyKind::cluster_random || kind == StrategyKind::cluster_uncertainty ||
         kind == StrategyKind::cluster_representative || kind == StrategyKind::cluster_diversity;
}

std::optional<StrategyId> parse_strategy(std::string_view s) {
  if (s == "random") return StrategyId{StrategyKind::random};
  if (s == "cluster-random") return StrategyId{StrategyKind::cluster_random};
  if (s == "cluster-representative") return StrategyId{StrategyKind::cluster_representative};
  if (s == "cluster-diversity") return StrategyId{StrategyKind::cluster_diversity};
  if (s == "atlas") return StrategyId{StrategyKind::atlas};
  for (auto [prefix, kind] : {std::pair{std::string_view("uncertainty-"), StrategyKind::uncertainty},
                              std::pair{std::string_view("cluster-uncertainty-"), StrategyKind::cluster_uncertainty}}) {
    if (s.starts_with(prefix)) {
      if (auto c = parse_criterion(s.substr(prefix.size()))) return StrategyId{kind, *c};
    }
  }
  return std::nullopt;
}

const std::vector<std::string>& strategy_names() {
  static const std::vector<std::string> names{
      "random",
      "uncertainty-lc",
      "uncertainty-margin",
      "uncertainty-entropy",
      "cluster-random",
      "cluster-uncertainty-lc",
      "cluster-uncertainty-margin",
      "cluster-uncertainty-entropy",
      "cluster-representative",
      "cluster-diversity",
      "atlas",
  };
  return names;
}

// ---- cluster quotas ------------------------------------------------------

ClusterView ClusterView::restrict(const ClusterModel& model, const Matrix& points,
                                  std::span<const std::size_t> rows) {
  ClusterView v;
  v.centers = model.centers;
  v.points.resize(static_cast<Eigen::Index>(rows.size()), 2);
  v.assignments.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    v.points.row(static_cast<Eigen::Index>(i)) = points.row(static_cast<Eigen::Index>(rows[i]));
    v.assignments.push_back(model.assignments.at(rows[i]));
  }
  return v;
}

std::vector<std::size_t> allocate_quotas(std::span<const std::size_t> sizes, std::size_t budget) {
  const std::size_t c = sizes.size();
  std::vector<std::size_t> quota(c, 0);
  std::size_t remaining = std::min(budget, std::accumulate(sizes.begin(), sizes.end(), std::size_t{0}));

  std::vector<std::size_t> order(c);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sizes[a] > sizes[b]; });

  while (remaining > 0) {
    std::vector<std::size_t> active;
    for (std::size_t k : order) {
      if (quota[k] < sizes[k]) active.push_back(k);
    }
    if (active.empty()) break;
    const std::size_t share = remaining / active.size();
    const std::size_t extra = remaining % active.size();
    for (std::size_t r = 0; r < active.size(); ++r) {
      const std::size_t k = active[r];
      const std::size_t want = share + (r < extra ? 1 : 0);
      const std::size_t give = std::min(want, sizes[k] - quota[k]);
      quota[k] += give;
      remaining -= give;
    }
  }
  return quota;
}

// ---- plain selectors -----------------------------------------------------

std::vector<std::size_t> select_random(std::size_t pool_size, std::size_t B, Rng& rng) {
  if (pool_size == 0) throw StrategyError("cannot select from an empty pool");
  return rng.sample_positions(pool_size, B);
}

namespace {

// Positions sorted by key (descending when `descending`), ties by id ascending.
void rank(std::vector<std::size_t>& pos, std::span<const double> key, std::span<const std::string> ids,
          bool descending) {
  std::sort(pos.begin(), pos.end(), [&](std::size_t a, std::size_t b) {
    if (key[a] != key[b]) return descending ? key[a] > key[b] : key[a] < key[b];
    return ids[a] < ids[b];
  });
}

void check_pool(std::span<const std::string> ids, std::size_t n) {
  if (n == 0) throw StrategyError("cannot select from an empty pool");
  if (ids.size() != n) throw StrategyError("pool ids and pool data differ in length");
}

}  // namespace

std::vector<std::size_t> select_uncertainty(std::span<const std::string> ids, std::span<const double> scores,
                                            std::size_t B) {
  check_pool(ids, scores.size());
  std::vector<std::size_t> pos(scores.size());
  std::iota(pos.begin(), pos.end(), 0);
  rank(pos, scores, ids, true);
  pos.resize(std::min(B, pos.size()));
  return pos;
}

namespace {

struct Groups {
  std::vector<std::vector<std::size_t>> members;  // per cluster, pool order
  std::vector<std::size_t> noise;
};

Groups group(const ClusterView& v) {
  Groups g;
  g.members.resize(v.clusters());
  for (std::size_t i = 0; i < v.assignments.size(); ++i) {
    const int c = v.assignments[i];
    if (c < 0) {
      g.noise.push_back(i);
    } else {
      if (c >= v.clusters()) throw StrategyError("cluster assignment out of range");
      g.members[c].push_back(i);
    }
  }
  return g;
}

std::vector<double> center_distance(const ClusterView& v) {
  std::vector<double> d(v.assignments.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    const int c = v.assignments[i];
    if (c >= 0) {
      d[i] = (v.points.row(row) - v.centers.row(c)).norm();
    } else {
      double best = std::numeric_limits<double>::infinity();
      for (Eigen::Index k = 0; k < v.centers.rows(); ++k) best = std::min(best, (v.points.row(row) - v.centers.row(k)).norm());
      d[i] = best;
    }
  }
  return d;
}

// Orders a member list in preference order (best first).
using Ranker = std::function<void(std::vector<std::size_t>&)>;

// Quota split over clusters, then noise as a last-resort fill.
std::vector<std::size_t> quota_select(const ClusterView& v, std::size_t B, const Ranker& ranker,
                                      const char* strategy, Rng& rng) {
  const std::size_t n = v.assignments.size();
  if (n == 0) throw StrategyError("cannot select from an empty pool");
  if (static_cast<std::size_t>(v.points.rows()) != n) throw StrategyError("cluster view is inconsistent");
  Groups g = group(v);
  std::size_t clustered = 0;
  for (auto& m : g.members) clustered += m.size();
  if (v.clusters() == 0 || clustered == 0) {
    log::warn(std::string(strategy) + ": no clusters in the pool, falling back to random selection");
    return select_random(n, B, rng);
  }
  std::vector<std::size_t> sizes;
  for (auto& m : g.members) sizes.push_back(m.size());
  const auto quota = allocate_quotas(sizes, B);
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < g.members.size(); ++k) {
    if (quota[k] == 0) continue;
    ranker(g.members[k]);
    out.insert(out.end(), g.members[k].begin(), g.members[k].begin() + static_cast<long>(quota[k]));
  }
  const std::size_t target = std::min(B, n);
  if (out.size() < target && !g.noise.empty()) {
    ranker(g.noise);
    const std::size_t more = std::min(target - out.size(), g.noise.size());
    out.insert(out.end(), g.noise.begin(), g.noise.begin() + static_cast<long>(more));
  }
  return out;
}

}  // namespace

std::vector<std::size_t> select_cluster_random(const ClusterView& clusters, std::size_t B, Rng& rng) {
  return quota_select(
      clusters, B,
      [&](std::vector<std::size_t>& m) {
        rng.shuffle(m);
      },
      "cluster-random", rng);
}

std::vector<std::size_t> select_cluster_uncertainty(std::span<const std::string> ids, std::span<const double> scores,
                                                    const ClusterView& clusters, std::size_t B, Rng& rng) {
  check_pool(ids, clusters.assignments.size());
  if (scores.size() != ids.size()) throw StrategyError("pool ids and scores differ in length");
  return quota_select(
      clusters, B, [&](std::vector<std::size_t>& m) { rank(m, scores, ids, true); }, "cluster-uncertainty", rng);
}

std::vector<std::size_t> select_cluster_representative(std::span<const std::string> ids,
                                                       const ClusterView& clusters, std::size_t B, Rng& rng) {
  check_pool(ids, clusters.assignments.size());
  const auto d = center_distance(clusters);
  return quota_select(
      clusters, B, [&](std::vector<std::size_t>& m) { rank(m, d, ids, false); }, "cluster-representative", rng);
}

std::vector<std::size_t> select_cluster_diversity(std::span<const std::string> ids, const ClusterView& clusters,
                                                  std::size_t B, Rng& rng) {
  check_pool(ids, clusters.assignments.size());
  const auto d = center_distance(clusters);
  Ranker far_first = [&](std::vector<std::size_t>& m) { rank(m, d, ids, true); };
  if (clusters.clusters() == 0) return quota_select(clusters, B, far_first, "cluster-diversity", rng);

  // noise first, then the quota split over real clusters for what is left
  Groups g = group(clusters);
  far_first(g.noise);
  const std::size_t from_noise = std::min(B, g.noise.size());
  std::vector<std::size_t> out(g.noise.begin(), g.noise.begin() + static_cast<long>(from_noise));
  if (out.size() == B) return out;
  std::vector<std::size_t> sizes;
  for (auto& m : g.members) sizes.push_back(m.size());
  const auto quota = allocate_quotas(sizes, B - out.size());
  for (std::size_t k = 0; k < g.members.size(); ++k) {
    if (quota[k] == 0) continue;
    far_first(g.members[k]);
    out.insert(out.end(), g.members[k].begin(), g.members[k].begin() + static_cast<long>(quota[k]));
  }
  return out;
}

// ---- ATLAS ---------------------------------------------------------------

Buckets bucket_predictions(std::span<const std::vector<int>> predicted, std::span<const std::vector<int>> gold) {
  if (predicted.empty()) throw StrategyError("bucket_predictions needs a nonempty validation set");
  if (predicted.size() != gold.size()) throw StrategyError("prediction and gold counts differ");
  Buckets b;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const auto& p = predicted[i];
    const auto& g = gold[i];
    if (p.size() != g.size() || p.empty()) throw StrategyError("prediction and gold lengths differ");
    std::size_t right = 0;
    for (std::size_t t = 0; t < p.size(); ++t) right += p[t] == g[t];
    (2 * right > p.size() ? b.correct : b.incorrect).push_back(i);
  }
  return b;
}

Buckets bucket_predictions(const TaggerModel& model, std::span<const EncodedSentence> validation) {
  if (validation.empty()) throw StrategyError("bucket_predictions needs a nonempty validation set");
  const auto predicted = predict(model, validation);
  std::vector<std::vector<int>> gold;
  gold.reserve(validation.size());
  for (const auto& s : validation) gold.push_back(s.gold);
  return bucket_predictions(predicted, gold);
}

BinaryCorrectnessModel BinaryCorrectnessModel::create(std::size_t input_dim, std::size_t hidden,
                                                      std::uint64_t seed) {
  if (input_dim == 0 || hidden == 0) throw StrategyError("binary model needs positive dimensions");
  BinaryCorrectnessModel m;
  m.input_dim_ = input_dim;
  m.hidden_ = hidden;
  const auto h = static_cast<Eigen::Index>(hidden);
  const auto d = static_cast<Eigen::Index>(input_dim);
  m.params_.add("w1", h, d);
  m.params_.add("b1", h, 1);
  m.params_.add("w2", 1, h);
  m.params_.add("b2", 1, 1);
  Rng rng(seed);
  for (std::size_t i : {std::size_t{0}, std::size_t{2}}) {
    auto w = m.params_.mat(i);
    const double bound = std::sqrt(1.0 / static_cast<double>(w.cols()));
    for (Eigen::Index c = 0; c < w.cols(); ++c)
      for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = rng.uniform(-bound, bound);
  }
  return m;
}

double BinaryCorrectnessModel::logit(const Vector& x) const {
  const Vector h = params_.mat(0) * x + params_.mat(1);
  return (params_.mat(2) * h)(0) + params_.mat(3)(0, 0);
}

double BinaryCorrectnessModel::loss_and_gradient(const Matrix& x, const std::vector<double>& target,
                                                 std::span<const std::size_t> rows, ParamStore& grad) const {
  const auto n = static_cast<Eigen::Index>(rows.size());
  Matrix xb(n, x.cols());
  Vector t(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    xb.row(i) = x.row(static_cast<Eigen::Index>(rows[i]));
    t(i) = target[rows[i]];
  }
  const Matrix h = (xb * params_.mat(0).transpose()).rowwise() + params_.mat(1).col(0).transpose();
  const Vector z = (h * params_.mat(2).transpose()).col(0).array() + params_.mat(3)(0, 0);
  double loss = 0.0;
  Vector dz(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double zi = z(i);
    loss += std::max(zi, 0.0) - zi * t(i) + std::log1p(std::exp(-std::abs(zi)));
    dz(i) = (1.0 / (1.0 + std::exp(-zi)) - t(i)) / static_cast<double>(n);
  }
  const Matrix dh = dz * params_.mat(2);  // n x H
  grad.mat(0) += dh.transpose() * xb;
  grad.mat(1) += dh.colwise().sum().transpose();
  grad.mat(2) += dz.transpose() * h;
  grad.mat(3)(0, 0) += dz.sum();
  return loss / static_cast<double>(n);
}

BinaryCorrectnessModel train_binary(const Matrix& correct, const Matrix& incorrect, const BinaryConfig& config,
                                    std::uint64_t seed) {
  if (correct.rows() == 0 || incorrect.rows() == 0) {
    throw DegenerateTraining("binary model needs both correct and incorrect examples");
  }
  if (correct.cols() != incorrect.cols()) throw StrategyError("representation widths differ");
  if (config.epochs < 1 || config.minibatch == 0) throw StrategyError("invalid binary training config");
  Matrix x(correct.rows() + incorrect.rows(), correct.cols());
  x << correct, incorrect;
  std::vector<double> target(static_cast<std::size_t>(x.rows()), 0.0);
  std::fill(target.begin() + correct.rows(), target.end(), 1.0);

  auto model = BinaryCorrectnessModel::create(static_cast<std::size_t>(x.cols()), config.hidden,
                                              derive_seed(seed, 0));
  Adam adam(model.params().size(), config.adam);
  ParamStore grad = model.params().zeros_like();
  Rng rng(derive_seed(seed, 1));
  std::vector<std::size_t> order(target.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t lo = 0; lo < order.size(); lo += config.minibatch) {
      const std::size_t hi = std::min(order.size(), lo + config.minibatch);
      grad.set_zero();
      model.loss_and_gradient(x, target, std::span(order).subspan(lo, hi - lo), grad);
      adam.step(model.params().flat(), grad.flat());
    }
  }
  return model;
}

std::vector<std::size_t> atlas_select(const Matrix& pool, const Matrix& validation, const Buckets& buckets,
                                      std::size_t B, std::size_t step, const BinaryConfig& config,
                                      std::uint64_t seed, AtlasTrace* trace) {
  const auto n = static_cast<std::size_t>(pool.rows());
  if (n == 0) throw StrategyError("cannot select from an empty pool");
  if (step == 0) throw StrategyError("atlas step must be positive");
  Rng rng(derive_seed(seed, 0));
  if (trace) *trace = {};
  if (buckets.correct.empty() || buckets.incorrect.empty()) {
    log::warn("atlas: one validation bucket is empty, falling back to random selection");
    if (trace) trace->fell_back = true;
    return select_random(n, B, rng);
  }
  if (pool.cols() != validation.cols()) throw StrategyError("pool and validation representations differ in width");

  auto step_log = [&](const char* s) {
    if (trace) trace->steps.emplace_back(s);
  };
  step_log("bucket");
  std::vector<Eigen::RowVectorXd> vc, vi;
  for (auto i : buckets.correct) vc.push_back(validation.row(static_cast<Eigen::Index>(i)));
  for (auto i : buckets.incorrect) vi.push_back(validation.row(static_cast<Eigen::Index>(i)));
  auto stack = [&](const std::vector<Eigen::RowVectorXd>& rows) {
    Matrix m(static_cast<Eigen::Index>(rows.size()), pool.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = rows[i];
    return m;
  };

  std::vector<std::size_t> remaining(n);
  std::iota(remaining.begin(), remaining.end(), 0);
  std::vector<std::size_t> out;
  const std::size_t target = std::min(B, n);
  for (std::size_t round = 0; out.size() < target; ++round) {
    const std::size_t take = std::min(step, target - out.size());
    const auto model = train_binary(stack(vc), stack(vi), config, derive_seed(seed, round + 1));
    step_log("train");
    std::vector<std::size_t> flagged, clean;  // positions into `remaining`
    for (std::size_t r = 0; r < remaining.size(); ++r) {
      (model.predicts_incorrect(pool.row(static_cast<Eigen::Index>(remaining[r])).transpose()) ? flagged : clean)
          .push_back(r);
    }
    step_log("classify");
    std::vector<std::size_t> chosen;
    for (auto p : rng.sample_positions(flagged.size(), take)) chosen.push_back(flagged[p]);
    if (chosen.size() < take) {
      for (auto p : rng.sample_positions(clean.size(), take - chosen.size())) chosen.push_back(clean[p]);
    }
    step_log("select");
    if (trace) {
      AtlasRound info;
      info.binary_train_size = vc.size() + vi.size();
      info.predicted_incorrect = flagged.size();
      for (auto r : chosen) info.picked.push_back(remaining[r]);
      trace->rounds.push_back(std::move(info));
    }
    std::vector<std::size_t> picked;
    for (auto r : chosen) picked.push_back(remaining[r]);
    std::sort(chosen.begin(), chosen.end(), std::greater<>());
    for (auto r : chosen) remaining.erase(remaining.begin() + static_cast<long>(r));
    for (auto p : picked) {
      vc.push_back(pool.row(static_cast<Eigen::Index>(p)));
      out.push_back(p);
    }
    step_log("flip");
  }
  return out;
}

// ---- dispatch ------------------------------------------------------------

std::vector<double> score_pool(const TaggerModel& model, std::span<const Matrix* const> inputs,
                               Criterion criterion, PosteriorMode mode, Exec exec) {
  const auto n = static_cast<long>(inputs.size());
  std::vector<double> scores(inputs.size());
  auto one = [&](long i) { scores[i] = sequence_uncertainty(token_posteriors(model, *inputs[i], mode), criterion); };
  if (exec == Exec::parallel) {
#pragma omp parallel for schedule(dynamic, 16)
    for (long i = 0; i < n; ++i) one(i);
  } else {
    for (long i = 0; i < n; ++i) one(i);
  }
  return scores;
}

namespace {

Matrix representations(const TaggerModel& model, std::span<const Matrix* const> inputs) {
  const auto n = static_cast<long>(inputs.size());
  std::vector<Vector> reps(inputs.size());
#pragma omp parallel for schedule(dynamic, 16)
  for (long i = 0; i < n; ++i) reps[i] = model.sentence_representation(*inputs[i]);
  Matrix out(n, n > 0 ? reps[0].size() : 0);
  for (long i = 0; i < n; ++i) out.row(i) = reps[i].transpose();
  return out;
}

}  // namespace

std::vector<std::size_t> select_positions(const StrategyId& strategy, const SelectionContext& ctx, std::size_t B,
                                          std::uint64_t seed) {
  const std::size_t n = ctx.ids.size();
  if (n == 0) throw StrategyError("cannot select from an empty pool");
  if (strategy.needs_model() && (!ctx.model || ctx.inputs.size() != n)) {
    throw StrategyError(strategy.name() + " needs a trained model and pool inputs");
  }
  if (strategy.needs_clusters() && !ctx.clusters) throw StrategyError(strategy.name() + " needs a cluster model");
  Rng rng(seed);
  switch (strategy.kind) {
    case StrategyKind::random: return select_random(n, B, rng);
    case StrategyKind::uncertainty:
      return select_uncertainty(ctx.ids, score_pool(*ctx.model, ctx.inputs, strategy.criterion, ctx.posterior_mode), B);
    case StrategyKind::cluster_random: return select_cluster_random(*ctx.clusters, B, rng);
    case StrategyKind::cluster_uncertainty:
      return select_cluster_uncertainty(
          ctx.ids, score_pool(*ctx.model, ctx.inputs, strategy.criterion, ctx.posterior_mode), *ctx.clusters, B, rng);
    case StrategyKind::cluster_representative: return select_cluster_representative(ctx.ids, *ctx.clusters, B, rng);
    case StrategyKind::cluster_diversity: return select_cluster_diversity(ctx.ids, *ctx.clusters, B, rng);
    case StrategyKind::atlas: {
      if (ctx.validation.empty()) throw StrategyError("atlas needs a nonempty validation set");
      const Buckets buckets = bucket_predictions(*ctx.model, ctx.validation);
      std::vector<const Matrix*> vin;
      for (const auto& s : ctx.validation) vin.push_back(&s.x);
      return atlas_select(representations(*ctx.model, ctx.inputs), representations(*ctx.model, vin), buckets, B,
                          ctx.atlas_step, ctx.binary, rng.next(), ctx.atlas_trace);
    }
  }
  return {};
}

QueryBatch select(const StrategyId& strategy, const SelectionContext& ctx, std::size_t B, std::uint64_t seed,
                  int episode) {
  QueryBatch q;
  q.strategy = strategy.name();
  q.episode = episode;
  for (auto p : select_positions(strategy, ctx, B, seed)) q.ids.push_back(ctx.ids[p]);
  return q;
}

}  // namespace aal
