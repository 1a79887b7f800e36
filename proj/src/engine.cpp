#include "aal/engine.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <exception>
#include <fstream>
#include <map>
#include <numeric>

#include "aal/log.hpp"

namespace aal {

namespace {

// Seed streams. Episode e of a run draws from derive_seed(seed, kEpisodeBase + e).
constexpr std::uint64_t kClusterStream = 1;
constexpr std::uint64_t kStartStream = 2;
constexpr std::uint64_t kBaselineInit = 5;
constexpr std::uint64_t kBaselineTrain = 6;
constexpr std::uint64_t kSweepStream = 7;
constexpr std::uint64_t kEpisodeBase = 100;

enum class Role : std::uint64_t { init = 0, train = 1, query = 2 };

std::uint64_t episode_seed(std::uint64_t seed, int episode, Role role) {
  return derive_seed(derive_seed(seed, kEpisodeBase + static_cast<std::uint64_t>(episode)),
                     static_cast<std::uint64_t>(role));
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<int> label_indices(const std::vector<Label>& gold) {
  std::vector<int> out;
  out.reserve(gold.size());
  for (Label l : gold) out.push_back(label_index(l));
  return out;
}

std::vector<EncodedSentence> encode(const std::vector<Sentence>& sentences, const InputEncoder& encoder) {
  std::vector<EncodedSentence> out(sentences.size());
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    out[i].x = encoder.tokens(sentences[i]);
    out[i].gold = label_indices(sentences[i].gold);
  }
  return out;
}

std::vector<std::size_t> map_rows(std::span<const std::size_t> rows, const std::vector<std::size_t>& picked) {
  std::vector<std::size_t> out;
  out.reserve(picked.size());
  for (std::size_t p : picked) out.push_back(rows[p]);
  return out;
}

}  // namespace

ExperimentData prepare_data(const Splits& splits, const InputEncoder& encoder) {
  ExperimentData d;
  d.input_dim = encoder.dim();
  const auto& train = splits.train;
  auto& pool = d.pool;
  const std::size_t n = train.size();
  pool.ids.reserve(n);
  pool.topics.reserve(n);
  pool.tokens.reserve(n);
  pool.inputs.reserve(n);
  pool.gold.reserve(n);
  pool.sentence_vectors.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d.input_dim));
  for (std::size_t i = 0; i < n; ++i) {
    const Sentence& s = train[i];
    pool.ids.push_back(s.id);
    pool.topics.push_back(s.topic);
    pool.tokens.push_back(s.tokens);
    pool.inputs.push_back(encoder.tokens(s));
    pool.gold.push_back(label_indices(s.gold));
    const SentenceVector sv = encoder.sentence(s);
    if (pool.sentence_vectors.cols() != sv.values.size()) {
      pool.sentence_vectors.conservativeResize(Eigen::NoChange, sv.values.size());
    }
    pool.sentence_vectors.row(static_cast<Eigen::Index>(i)) = sv.values.transpose();
  }
  d.dev = encode(splits.dev, encoder);
  d.test = encode(splits.test, encoder);
  if (pool.size() == 0) throw EngineError("training pool is empty");
  if (d.dev.empty()) throw EngineError("dev split is empty");
  return d;
}

ExperimentData load_experiment_data(const RunConfig& config) {
  const Corpus corpus = load_corpus(config.corpus);
  const Splits splits = make_splits(corpus, config.mode, config.held_out_topics);
  InputEncoder encoder;
  if (!config.embeddings.empty()) {
    encoder = InputEncoder(std::make_shared<const EmbeddingTable>(load_embedding_table(config.embeddings)));
  } else {
    encoder = InputEncoder(std::make_shared<const ContextualStore>(load_contextual_store(config.contextual)));
  }
  if (!config.sentence_vectors.empty()) {
    encoder.set_sentence_vectors(
        std::make_shared<const ContextualStore>(load_contextual_store(config.sentence_vectors)));
  }
  return prepare_data(splits, encoder);
}

std::vector<std::vector<int>> GoldOracle::label(std::span<const std::size_t> positions) {
  std::vector<std::vector<int>> out;
  out.reserve(positions.size());
  for (std::size_t p : positions) out.push_back(pool_.gold.at(p));
  return out;
}

LoopSettings LoopSettings::from(const RunConfig& config, std::size_t input_dim) {
  LoopSettings s;
  s.spec.kind = config.model;
  s.spec.input_dim = input_dim;
  s.spec.hidden = config.hidden;
  s.train = config.train;
  s.strategy = config.strategy;
  s.start = config.start;
  s.batch_size = config.batch_size;
  s.start_size = config.start_size;
  s.budget = config.budget;
  s.posterior = config.posterior;
  s.atlas_step = config.atlas_step;
  return s;
}

ClusterModel ClusterSetup::fit(std::uint64_t seed) const { return fit_clusters(points, algorithm, params, seed); }

Matrix reduced_pool_points(const RunConfig& config, const ExperimentData& data) {
  if (config.reducer == Reducer::external) {
    Matrix points = load_reduced_points(config.reduced_points).points;
    if (static_cast<std::size_t>(points.rows()) != data.pool.size()) {
      throw ConfigError("reduced_points", "has " + std::to_string(points.rows()) + " rows, pool has " +
                                              std::to_string(data.pool.size()));
    }
    return points;
  }
  return reduce_pca(data.pool.sentence_vectors).points;
}

std::uint64_t sweep_seed(const RunConfig& config) {
  if (config.seeds.empty()) throw ConfigError("seeds", "empty list");
  return derive_seed(config.seeds.front(), kSweepStream);
}

ClusterSetup prepare_clusters(const RunConfig& config, const ExperimentData& data, std::uint64_t sweep_seed) {
  ClusterSetup setup;
  setup.points = reduced_pool_points(config, data);
  setup.algorithm = config.cluster_algorithm;
  setup.params.min_pts = config.cluster_min_pts;
  if (config.cluster_param) {
    setup.params.set_tuned(setup.algorithm, *config.cluster_param);
  } else {
    setup.sweep = sweep_optimize(setup.points, setup.algorithm, sweep_seed, config.sweep_iterations, std::nullopt,
                                 config.cluster_min_pts);
    setup.params.set_tuned(setup.algorithm, setup.sweep->final_value);
  }
  return setup;
}

ALState initial_state(std::size_t pool_size, std::uint64_t seed) {
  ALState s;
  s.seed = seed;
  s.unlabeled.resize(pool_size);
  std::iota(s.unlabeled.begin(), s.unlabeled.end(), std::size_t{0});
  s.labels.resize(pool_size);
  return s;
}

std::vector<std::size_t> cold_start(const ALState& state, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  return map_rows(state.unlabeled, select_random(state.unlabeled.size(), n, rng));
}

std::vector<std::size_t> warm_start(const ALState& state, std::size_t n, const ClusterModel& clusters,
                                    const Matrix& points, std::uint64_t seed) {
  Rng rng(seed);
  const ClusterView view = ClusterView::restrict(clusters, points, state.unlabeled);
  return map_rows(state.unlabeled, select_cluster_random(view, n, rng));
}

std::vector<std::size_t> start_batch(const ALState& state, const LoopSettings& settings,
                                     const ClusterModel* clusters, const Matrix* points) {
  std::size_t n = std::min(settings.start_size, state.unlabeled.size());
  if (settings.budget) n = std::min(n, *settings.budget);
  const std::uint64_t seed = derive_seed(state.seed, kStartStream);
  if (settings.start == StartMode::warm) {
    if (!clusters || !points) throw EngineError("warm start needs a cluster model");
    return warm_start(state, n, *clusters, *points, seed);
  }
  return cold_start(state, n, seed);
}

void apply_labels(ALState& state, const PoolData& pool, std::span<const std::size_t> positions,
                  std::vector<std::vector<int>> labels) {
  if (labels.size() != positions.size()) throw EngineError("oracle returned the wrong number of label lists");
  std::vector<std::size_t> sorted(positions.begin(), positions.end());
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw EngineError("batch contains a position twice");
  }
  for (std::size_t i = 0; i < positions.size(); ++i) {
    const std::size_t p = positions[i];
    if (!std::binary_search(state.unlabeled.begin(), state.unlabeled.end(), p)) {
      throw EngineError("position " + std::to_string(p) + " is not in the unlabeled pool");
    }
    if (labels[i].size() != pool.tokens.at(p).size()) {
      throw EngineError("labels for " + pool.ids[p] + " do not cover every token");
    }
    for (int l : labels[i]) {
      if (l < 0 || l >= kNumLabels) throw EngineError("invalid label index for " + pool.ids[p]);
    }
  }
  std::vector<std::size_t> rest;
  rest.reserve(state.unlabeled.size() - sorted.size());
  std::set_difference(state.unlabeled.begin(), state.unlabeled.end(), sorted.begin(), sorted.end(),
                      std::back_inserter(rest));
  state.unlabeled = std::move(rest);
  for (std::size_t i = 0; i < positions.size(); ++i) {
    state.labeled.push_back(positions[i]);
    state.labels[positions[i]] = std::move(labels[i]);
  }
}

bool finished(const ALState& state, const LoopSettings& settings) {
  if (state.unlabeled.empty()) return true;
  return settings.budget && state.labeled.size() >= *settings.budget;
}

std::size_t next_batch_size(const ALState& state, const LoopSettings& settings) {
  std::size_t n = std::min(settings.batch_size, state.unlabeled.size());
  if (settings.budget) n = std::min(n, *settings.budget - std::min(*settings.budget, state.labeled.size()));
  return n;
}

TaggerModel train_on_labeled(ALState& state, const ExperimentData& data, const LoopSettings& settings) {
  if (state.labeled.empty()) throw EngineError("no labeled sentences to train on");
  std::vector<EncodedSentence> train_set(state.labeled.size());
  for (std::size_t i = 0; i < state.labeled.size(); ++i) {
    const std::size_t p = state.labeled[i];
    train_set[i].x = data.pool.inputs[p];
    train_set[i].gold = state.labels[p];
  }
  const auto t0 = std::chrono::steady_clock::now();
  TaggerModel model = TaggerModel::create(settings.spec, episode_seed(state.seed, state.episode, Role::init));
  const TrainResult r =
      train(model, train_set, data.dev, settings.train, episode_seed(state.seed, state.episode, Role::train));
  const double train_seconds = seconds_since(t0);

  double epoch_mean = 0.0;
  if (!r.epoch_seconds.empty()) {
    epoch_mean = std::accumulate(r.epoch_seconds.begin(), r.epoch_seconds.end(), 0.0) /
                 static_cast<double>(r.epoch_seconds.size());
  }
  state.curve.push_back({state.labeled.size(), r.best_dev_f1, epoch_mean});
  state.timings.push_back({state.episode, state.labeled.size(), r.epochs_run, epoch_mean, train_seconds, 0.0});
  return model;
}

std::vector<std::size_t> query_batch(const ALState& state, const TaggerModel& model, const ExperimentData& data,
                                     const LoopSettings& settings, const ClusterModel* clusters,
                                     const Matrix* points, AtlasTrace* trace) {
  const std::size_t n = next_batch_size(state, settings);
  if (n == 0) return {};
  std::vector<std::string> ids;
  std::vector<const Matrix*> inputs;
  ids.reserve(state.unlabeled.size());
  inputs.reserve(state.unlabeled.size());
  for (std::size_t p : state.unlabeled) {
    ids.push_back(data.pool.ids[p]);
    inputs.push_back(&data.pool.inputs[p]);
  }
  std::optional<ClusterView> view;
  if (settings.strategy.needs_clusters()) {
    if (!clusters || !points) throw EngineError(settings.strategy.name() + " needs a cluster model");
    view = ClusterView::restrict(*clusters, *points, state.unlabeled);
  }
  SelectionContext ctx;
  ctx.ids = ids;
  ctx.inputs = inputs;
  ctx.model = &model;
  ctx.clusters = view ? &*view : nullptr;
  ctx.validation = data.dev;
  ctx.posterior_mode = settings.posterior;
  ctx.atlas_step = settings.atlas_step;
  ctx.binary = settings.binary;
  ctx.atlas_trace = trace;
  const auto picked = select_positions(settings.strategy, ctx, n, episode_seed(state.seed, state.episode, Role::query));
  return map_rows(state.unlabeled, picked);
}

void run_episode(ALState& state, const ExperimentData& data, const LoopSettings& settings, Oracle& oracle,
                 const ClusterModel* clusters, const Matrix* points, const ModelHook& hook) {
  if (state.labeled.empty()) throw EngineError("run_episode needs a start batch");
  const TaggerModel model = train_on_labeled(state, data, settings);
  if (hook) hook(state, model);
  if (!finished(state, settings)) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto batch = query_batch(state, model, data, settings, clusters, points);
    state.timings.back().query_seconds = seconds_since(t0);
    apply_labels(state, data.pool, batch, oracle.label(batch));
  }
  ++state.episode;
}

std::optional<ClusterModel> seed_clusters(const ClusterSetup* setup, const LoopSettings& settings,
                                          std::uint64_t seed) {
  if (!setup || !(settings.start == StartMode::warm || settings.strategy.needs_clusters())) return std::nullopt;
  return setup->fit(derive_seed(seed, kClusterStream));
}

std::optional<ClusterSetup> experiment_clusters(const RunConfig& config, const ExperimentData& data) {
  if (!config.needs_clusters()) return std::nullopt;
  return prepare_clusters(config, data, sweep_seed(config));
}

ALDriver::ALDriver(const ExperimentData& data, LoopSettings settings, const ClusterSetup* clusters,
                   std::uint64_t seed)
    : data_(&data), settings_(std::move(settings)), setup_(clusters), state_(initial_state(data.pool.size(), seed)) {
  clusters_ = seed_clusters(setup_, settings_, seed);
  pending_ = start_batch(state_, settings_, clusters_ ? &*clusters_ : nullptr, setup_ ? &setup_->points : nullptr);
  if (pending_.empty()) throw EngineError("start batch is empty");
}

ALDriver::ALDriver(const ExperimentData& data, LoopSettings settings, const ClusterSetup* clusters, ALState state,
                   std::vector<std::size_t> pending, bool done)
    : data_(&data),
      settings_(std::move(settings)),
      setup_(clusters),
      state_(std::move(state)),
      pending_(std::move(pending)),
      done_(done) {
  clusters_ = seed_clusters(setup_, settings_, state_.seed);
}

void ALDriver::submit(std::vector<std::vector<int>> labels, const ModelHook& hook) {
  if (done_) throw EngineError("the loop has finished");
  apply_labels(state_, data_->pool, pending_, std::move(labels));
  pending_.clear();
  const bool last = finished(state_, settings_);
  const TaggerModel model = train_on_labeled(state_, *data_, settings_);
  if (hook) hook(state_, model);
  if (!last) {
    const auto t0 = std::chrono::steady_clock::now();
    pending_ = query_batch(state_, model, *data_, settings_, clusters_ ? &*clusters_ : nullptr,
                           setup_ ? &setup_->points : nullptr);
    state_.timings.back().query_seconds = seconds_since(t0);
  }
  ++state_.episode;
  done_ = last;
}

ALState run_seed(const ExperimentData& data, const LoopSettings& settings, const ClusterSetup* clusters,
                 std::uint64_t seed, const ModelHook& hook) {
  ALDriver driver(data, settings, clusters, seed);
  GoldOracle oracle(data.pool);
  while (!driver.done()) driver.submit(oracle.label(driver.pending()), hook);
  return driver.state();
}

std::vector<CurvePoint> mean_curve(std::span<const ALState> runs) {
  struct Acc {
    double f1 = 0.0, seconds = 0.0;
    std::size_t n = 0;
  };
  std::map<std::size_t, Acc> acc;
  for (const ALState& r : runs) {
    for (const CurvePoint& p : r.curve) {
      Acc& a = acc[p.labeled];
      a.f1 += p.dev_f1;
      a.seconds += p.epoch_seconds_mean;
      ++a.n;
    }
  }
  std::vector<CurvePoint> out;
  out.reserve(acc.size());
  for (const auto& [labeled, a] : acc) {
    const double n = static_cast<double>(a.n);
    out.push_back({labeled, a.f1 / n, a.seconds / n});
  }
  return out;
}

BaselineResult baseline_f1(const ExperimentData& data, const LoopSettings& settings,
                           std::span<const std::uint64_t> seeds) {
  if (seeds.empty()) throw EngineError("baseline needs at least one seed");
  std::vector<EncodedSentence> full(data.pool.size());
  for (std::size_t i = 0; i < full.size(); ++i) {
    full[i].x = data.pool.inputs[i];
    full[i].gold = data.pool.gold[i];
  }
  BaselineResult r;
  r.per_seed.assign(seeds.size(), 0.0);
  std::vector<std::exception_ptr> errors(seeds.size());
  const int n = static_cast<int>(seeds.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (int i = 0; i < n; ++i) {
    try {
      TaggerModel model = TaggerModel::create(settings.spec, derive_seed(seeds[i], kBaselineInit));
      r.per_seed[i] = train(model, full, data.dev, settings.train, derive_seed(seeds[i], kBaselineTrain)).best_dev_f1;
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  for (double v : r.per_seed) r.mean += v;
  r.mean /= static_cast<double>(seeds.size());
  return r;
}

std::vector<std::optional<std::size_t>> thresholds(std::span<const CurvePoint> curve, double baseline,
                                                   std::span<const double> percentages) {
  if (curve.empty()) throw EngineError("thresholds need a nonempty curve");
  std::vector<CurvePoint> sorted(curve.begin(), curve.end());
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const CurvePoint& a, const CurvePoint& b) { return a.labeled < b.labeled; });
  std::vector<std::optional<std::size_t>> out;
  out.reserve(percentages.size());
  for (double p : percentages) {
    std::optional<std::size_t> hit;
    for (const CurvePoint& c : sorted) {
      if (c.dev_f1 >= p * baseline) {
        hit = c.labeled;
        break;
      }
    }
    out.push_back(hit);
  }
  return out;
}

ExperimentResult run_experiment(const RunConfig& config, const ExperimentData& data,
                                const ExperimentOptions& options) {
  if (config.seeds.empty()) throw ConfigError("seeds", "empty list");
  ExperimentResult result;
  result.seeds = config.seeds;
  const LoopSettings settings = LoopSettings::from(config, data.input_dim);
  result.clusters = experiment_clusters(config, data);
  if (!options.checkpoint_dir.empty()) std::filesystem::create_directories(options.checkpoint_dir);

  const int n = static_cast<int>(config.seeds.size());
  result.runs.resize(config.seeds.size());
  std::vector<std::exception_ptr> errors(config.seeds.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (int i = 0; i < n; ++i) {
    const std::uint64_t seed = config.seeds[i];
    ModelHook hook;
    if (!options.checkpoint_dir.empty()) {
      hook = [&options, seed](const ALState& s, const TaggerModel& m) {
        const auto path = options.checkpoint_dir / ("seed-" + std::to_string(seed) + ".episode-" +
                                                    std::to_string(s.episode) + ".acrf");
        std::ofstream out(path, std::ios::binary);
        const std::string bytes = m.serialize();
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw EngineError("cannot write checkpoint " + path.string());
      };
    }
    try {
      result.runs[i] = run_seed(data, settings, result.clusters ? &*result.clusters : nullptr, seed, hook);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  result.mean = mean_curve(result.runs);
  if (config.baseline) {
    result.baseline = *config.baseline;
  } else {
    const BaselineResult b = baseline_f1(data, settings, config.seeds);
    result.baseline = b.mean;
    result.baseline_per_seed = b.per_seed;
  }
  return result;
}

double evaluate_split(const TaggerModel& model, std::span<const EncodedSentence> sentences) {
  return evaluate(model, sentences);
}

}  // namespace aal
