#include "aal/tagger.hpp"

#include <chrono>
#include <cmath>

#include "aal/binary_io.hpp"
#include "aal/metrics.hpp"

namespace aal {

namespace {

constexpr std::string_view kCheckpointMagic = "ACRF1";
constexpr std::size_t kGradientChunk = 8;

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Inverted dropout; returns the mask (entries 0 or 1/(1-p)).
Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, Rng& rng) {
  Matrix mask(rows, cols);
  const double keep = 1.0 / (1.0 - p);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) mask(i, j) = rng.uniform() < p ? 0.0 : keep;
  }
  return mask;
}

}  // namespace

std::string_view model_name(BackboneKind k) {
  return k == BackboneKind::linear ? "lincrf" : "bilstm-crf";
}

std::optional<BackboneKind> parse_model_name(std::string_view s) {
  if (s == "lincrf") return BackboneKind::linear;
  if (s == "bilstm-crf") return BackboneKind::bilstm;
  return std::nullopt;
}

void TrainConfig::validate() const {
  if (!(adam.learning_rate > 0) || !(adam.beta1 > 0) || !(adam.beta2 > 0) || !(adam.eps > 0)) {
    throw std::invalid_argument("optimizer settings must be positive");
  }
  if (minibatch == 0 || max_epochs <= 0 || min_epochs <= 0 || patience <= 0) {
    throw std::invalid_argument("minibatch and epoch settings must be positive");
  }
  if (patience > max_epochs) throw std::invalid_argument("patience exceeds max_epochs");
}

void TaggerModel::register_params() {
  const auto L = static_cast<Eigen::Index>(spec_.labels);
  const auto D = static_cast<Eigen::Index>(spec_.input_dim);
  const auto H = static_cast<Eigen::Index>(spec_.hidden);
  if (spec_.kind == BackboneKind::bilstm) {
    const char* names[2] = {"fw", "bw"};
    for (int d = 0; d < 2; ++d) {
      w_ih_[d] = params_.add(std::string(names[d]) + ".w_ih", 4 * H, D);
      w_hh_[d] = params_.add(std::string(names[d]) + ".w_hh", 4 * H, H);
      b_lstm_[d] = params_.add(std::string(names[d]) + ".b", 4 * H, 1);
    }
    emit_w_ = params_.add("emit.w", L, 2 * H);
  } else {
    emit_w_ = params_.add("emit.w", L, D);
  }
  emit_b_ = params_.add("emit.b", L, 1);
  trans_ = params_.add("crf.transitions", L, L);
  start_ = params_.add("crf.start", L, 1);
  end_ = params_.add("crf.end", L, 1);
}

TaggerModel TaggerModel::create(const ModelSpec& spec, std::uint64_t seed) {
  if (spec.input_dim == 0) throw std::invalid_argument("model input dimension must be positive");
  if (spec.labels < 1) throw std::invalid_argument("model needs at least one label");
  if (spec.kind == BackboneKind::bilstm && spec.hidden == 0) {
    throw std::invalid_argument("BiLSTM hidden size must be positive");
  }
  TaggerModel m;
  m.spec_ = spec;
  m.register_params();
  Rng rng(seed);
  for (std::size_t i = 0; i < m.params_.entries().size(); ++i) {
    const auto& e = m.params_.entries()[i];
    const bool is_weight = e.cols > 1 && e.name.rfind("crf.", 0) != 0;
    if (!is_weight) continue;
    const double bound = std::sqrt(1.0 / static_cast<double>(e.cols));
    auto w = m.params_.mat(i);
    for (Eigen::Index c = 0; c < w.cols(); ++c) {
      for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = rng.uniform(-bound, bound);
    }
  }
  return m;
}

crf::CrfLayer TaggerModel::crf() const {
  return {params_.mat(trans_), params_.mat(start_), params_.mat(end_)};
}

Matrix TaggerModel::lstm_direction(const Matrix& input, int dir, EmissionTape::Direction* tape) const {
  const auto T = input.rows();
  const auto H = static_cast<Eigen::Index>(spec_.hidden);
  const auto w_ih = params_.mat(w_ih_[dir]);
  const auto w_hh = params_.mat(w_hh_[dir]);
  const auto b = params_.mat(b_lstm_[dir]);

  Matrix pre_x = input * w_ih.transpose();
  pre_x.rowwise() += b.col(0).transpose();

  Matrix in_g(T, H), forget_g(T, H), cell_in(T, H), out_g(T, H), cell(T, H), hidden(T, H);
  Vector h = Vector::Zero(H);
  Vector c = Vector::Zero(H);
  Vector z(4 * H);
  for (Eigen::Index k = 0; k < T; ++k) {
    const Eigen::Index t = dir == 0 ? k : T - 1 - k;
    z.noalias() = pre_x.row(t).transpose();
    z.noalias() += w_hh * h;
    for (Eigen::Index j = 0; j < H; ++j) {
      const double ig = sigmoid(z(j));
      const double fg = sigmoid(z(H + j));
      const double gg = std::tanh(z(2 * H + j));
      const double og = sigmoid(z(3 * H + j));
      c(j) = fg * c(j) + ig * gg;
      h(j) = og * std::tanh(c(j));
      in_g(t, j) = ig;
      forget_g(t, j) = fg;
      cell_in(t, j) = gg;
      out_g(t, j) = og;
    }
    cell.row(t) = c.transpose();
    hidden.row(t) = h.transpose();
  }
  if (tape) {
    tape->in_gate = std::move(in_g);
    tape->forget_gate = std::move(forget_g);
    tape->cell_input = std::move(cell_in);
    tape->out_gate = std::move(out_g);
    tape->cell = std::move(cell);
    tape->pre_x = std::move(pre_x);
    tape->hidden = hidden;
  }
  return hidden;
}

Matrix TaggerModel::emissions(const Matrix& x, bool training, Rng* rng, EmissionTape* tape) const {
  if (static_cast<std::size_t>(x.cols()) != spec_.input_dim) {
    throw std::invalid_argument("input width " + std::to_string(x.cols()) + " does not match model width " +
                                std::to_string(spec_.input_dim));
  }
  if (x.rows() == 0) throw std::invalid_argument("empty input sequence");
  const bool drop_in = training && spec_.input_dropout > 0.0;
  if (training && !rng) throw std::invalid_argument("training mode needs an rng");

  Matrix input = drop_in ? Matrix(x.cwiseProduct(dropout_mask(x.rows(), x.cols(), spec_.input_dropout, *rng))) : x;

  Matrix features;
  Matrix mask;
  if (spec_.kind == BackboneKind::linear) {
    features = input;
  } else {
    const auto H = static_cast<Eigen::Index>(spec_.hidden);
    features.resize(x.rows(), 2 * H);
    for (int d = 0; d < 2; ++d) {
      features.middleCols(d * H, H) = lstm_direction(input, d, tape ? &tape->dirs[d] : nullptr);
    }
    if (training && spec_.output_dropout > 0.0) {
      mask = dropout_mask(features.rows(), features.cols(), spec_.output_dropout, *rng);
      features = features.cwiseProduct(mask);
    }
  }
  Matrix e = features * params_.mat(emit_w_).transpose();
  e.rowwise() += params_.mat(emit_b_).col(0).transpose();
  if (tape) {
    tape->input = std::move(input);
    tape->features = std::move(features);
    tape->feature_mask = std::move(mask);
  }
  return e;
}

void TaggerModel::emissions_backward(const EmissionTape& tape, const Matrix& d_e, ParamStore& grad) const {
  grad.mat(emit_w_).noalias() += d_e.transpose() * tape.features;
  grad.mat(emit_b_).col(0) += d_e.colwise().sum().transpose();
  if (spec_.kind == BackboneKind::linear) return;

  const auto T = d_e.rows();
  const auto H = static_cast<Eigen::Index>(spec_.hidden);
  Matrix d_features = d_e * params_.mat(emit_w_);
  if (tape.feature_mask.size() > 0) d_features = d_features.cwiseProduct(tape.feature_mask);

  for (int dir = 0; dir < 2; ++dir) {
    const auto& tp = tape.dirs[dir];
    const auto w_hh = params_.mat(w_hh_[dir]);
    Matrix d_pre(T, 4 * H);
    Vector dh_next = Vector::Zero(H);
    Vector dc_next = Vector::Zero(H);
    Vector dz(4 * H);
    auto g_hh = grad.mat(w_hh_[dir]);
    for (Eigen::Index k = T - 1; k >= 0; --k) {
      const Eigen::Index t = dir == 0 ? k : T - 1 - k;
      const Eigen::Index prev = dir == 0 ? t - 1 : t + 1;
      const bool has_prev = k > 0;
      for (Eigen::Index j = 0; j < H; ++j) {
        const double dh = d_features(t, dir * H + j) + dh_next(j);
        const double ig = tp.in_gate(t, j);
        const double fg = tp.forget_gate(t, j);
        const double gg = tp.cell_input(t, j);
        const double og = tp.out_gate(t, j);
        const double tc = std::tanh(tp.cell(t, j));
        const double c_prev = has_prev ? tp.cell(prev, j) : 0.0;
        const double dc = dh * og * (1.0 - tc * tc) + dc_next(j);
        dz(j) = dc * gg * ig * (1.0 - ig);
        dz(H + j) = dc * c_prev * fg * (1.0 - fg);
        dz(2 * H + j) = dc * ig * (1.0 - gg * gg);
        dz(3 * H + j) = dh * tc * og * (1.0 - og);
        dc_next(j) = dc * fg;
      }
      d_pre.row(t) = dz.transpose();
      if (has_prev) g_hh.noalias() += dz * tp.hidden.row(prev);
      dh_next.noalias() = w_hh.transpose() * dz;
    }
    grad.mat(w_ih_[dir]).noalias() += d_pre.transpose() * tape.input;
    grad.mat(b_lstm_[dir]).col(0) += d_pre.colwise().sum().transpose();
  }
}

void TaggerModel::crf_backward(const crf::NllGradient& g, ParamStore& grad) const {
  grad.mat(trans_) += g.d_transitions;
  grad.mat(start_).col(0) += g.d_start;
  grad.mat(end_).col(0) += g.d_end;
}

Vector TaggerModel::sentence_representation(const Matrix& x) const {
  if (spec_.kind == BackboneKind::linear) return x.colwise().mean().transpose();
  const auto H = static_cast<Eigen::Index>(spec_.hidden);
  const auto T = x.rows();
  Vector rep(2 * H);
  rep.head(H) = lstm_direction(x, 0, nullptr).row(T - 1).transpose();
  rep.tail(H) = lstm_direction(x, 1, nullptr).row(0).transpose();
  return rep;
}

std::string TaggerModel::serialize() const {
  io::Writer w;
  w.bytes(kCheckpointMagic);
  w.u32(spec_.kind == BackboneKind::linear ? 0u : 1u);
  w.u32(static_cast<std::uint32_t>(spec_.input_dim));
  w.u32(static_cast<std::uint32_t>(spec_.hidden));
  w.u32(static_cast<std::uint32_t>(spec_.labels));
  w.f64(spec_.input_dropout);
  w.f64(spec_.output_dropout);
  w.u32(static_cast<std::uint32_t>(params_.entries().size()));
  for (std::size_t i = 0; i < params_.entries().size(); ++i) {
    const auto& e = params_.entries()[i];
    w.str(e.name);
    w.u32(static_cast<std::uint32_t>(e.rows));
    w.u32(static_cast<std::uint32_t>(e.cols));
    const auto m = params_.mat(i);
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      for (Eigen::Index r = 0; r < m.rows(); ++r) w.f32(static_cast<float>(m(r, c)));
    }
  }
  return w.data();
}

TaggerModel TaggerModel::deserialize(std::string_view bytes) {
  io::Reader r(bytes);
  if (r.bytes(kCheckpointMagic.size()) != kCheckpointMagic) {
    throw std::runtime_error("not a tagger checkpoint (missing ACRF1 header)");
  }
  ModelSpec spec;
  const auto kind = r.u32();
  if (kind > 1) throw std::runtime_error("unknown backbone kind in checkpoint");
  spec.kind = kind == 0 ? BackboneKind::linear : BackboneKind::bilstm;
  spec.input_dim = r.u32();
  spec.hidden = r.u32();
  spec.labels = static_cast<int>(r.u32());
  spec.input_dropout = r.f64();
  spec.output_dropout = r.f64();
  TaggerModel m;
  m.spec_ = spec;
  m.register_params();
  const auto count = r.u32();
  if (count != m.params_.entries().size()) throw std::runtime_error("checkpoint tensor count mismatch");
  for (std::size_t i = 0; i < count; ++i) {
    const auto& e = m.params_.entries()[i];
    const auto name = r.str();
    const auto rows = r.u32();
    const auto cols = r.u32();
    if (name != e.name || rows != e.rows || cols != e.cols) {
      throw std::runtime_error("checkpoint tensor '" + name + "' does not match model layout");
    }
    auto mat = m.params_.mat(i);
    for (Eigen::Index c = 0; c < mat.cols(); ++c) {
      for (Eigen::Index rr = 0; rr < mat.rows(); ++rr) mat(rr, c) = r.f32();
    }
  }
  if (!r.done()) throw std::runtime_error("trailing bytes in checkpoint");
  return m;
}

namespace {

double accumulate_item(const TaggerModel& model, const crf::CrfLayer& layer, const EncodedSentence& s,
                       bool training, std::uint64_t seed, ParamStore& grad) {
  Rng rng(seed);
  EmissionTape tape;
  const Matrix e = model.emissions(s.x, training, &rng, &tape);
  const auto g = crf::nll_gradient(e, layer, s.gold);
  model.emissions_backward(tape, g.d_emissions, grad);
  model.crf_backward(g, grad);
  return g.loss;
}

}  // namespace

BatchGradient nll_and_gradient(const TaggerModel& model, std::span<const EncodedSentence* const> batch,
                               bool training, std::uint64_t dropout_seed, Exec exec) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  const auto layer = model.crf();
  BatchGradient out;
  out.grad = model.params().zeros_like();
  const auto n = batch.size();

  if (exec == Exec::serial) {
    for (std::size_t i = 0; i < n; ++i) {
      out.loss += accumulate_item(model, layer, *batch[i], training, derive_seed(dropout_seed, i), out.grad);
    }
  } else {
    // Fixed-size chunks summed in chunk order keep the result independent of
    // the number of threads.
    const std::size_t chunks = (n + kGradientChunk - 1) / kGradientChunk;
    std::vector<ParamStore> partial(chunks);
    std::vector<double> losses(chunks, 0.0);
    std::vector<std::string> errors(chunks);
#pragma omp parallel for schedule(dynamic)
    for (std::size_t c = 0; c < chunks; ++c) {
      try {
        partial[c] = model.params().zeros_like();
        const std::size_t hi = std::min(n, (c + 1) * kGradientChunk);
        for (std::size_t i = c * kGradientChunk; i < hi; ++i) {
          losses[c] += accumulate_item(model, layer, *batch[i], training, derive_seed(dropout_seed, i), partial[c]);
        }
      } catch (const std::exception& e) {
        errors[c] = e.what();
      }
    }
    for (const auto& e : errors) {
      if (!e.empty()) throw std::runtime_error(e);
    }
    for (std::size_t c = 0; c < chunks; ++c) {
      out.loss += losses[c];
      out.grad.add_scaled(partial[c], 1.0);
    }
  }
  const double inv = 1.0 / static_cast<double>(n);
  out.loss *= inv;
  for (double& g : out.grad.flat()) g *= inv;
  return out;
}

std::vector<int> predict(const TaggerModel& model, const Matrix& x) {
  return crf::viterbi(model.emissions(x, false, nullptr), model.crf()).path;
}

std::vector<std::vector<int>> predict(const TaggerModel& model, std::span<const EncodedSentence> sentences,
                                      Exec exec) {
  std::vector<std::vector<int>> out(sentences.size());
  const auto layer = model.crf();
  const auto n = static_cast<long>(sentences.size());
  if (exec == Exec::serial) {
    for (long i = 0; i < n; ++i) {
      out[static_cast<std::size_t>(i)] =
          crf::viterbi(model.emissions(sentences[static_cast<std::size_t>(i)].x, false, nullptr), layer).path;
    }
    return out;
  }
#pragma omp parallel for schedule(dynamic, 16)
  for (long i = 0; i < n; ++i) {
    out[static_cast<std::size_t>(i)] =
        crf::viterbi(model.emissions(sentences[static_cast<std::size_t>(i)].x, false, nullptr), layer).path;
  }
  return out;
}

Matrix token_posteriors(const TaggerModel& model, const Matrix& x, PosteriorMode mode) {
  const Matrix e = model.emissions(x, false, nullptr);
  if (mode == PosteriorMode::crf_marginals) return crf::marginals(e, model.crf());
  return crf::softmax_rows(e);
}

double evaluate(const TaggerModel& model, std::span<const EncodedSentence> sentences, Exec exec) {
  if (sentences.empty()) throw std::invalid_argument("cannot evaluate an empty sentence list");
  const auto pred = predict(model, sentences, exec);
  std::vector<std::vector<int>> gold;
  gold.reserve(sentences.size());
  for (const auto& s : sentences) gold.push_back(s.gold);
  return dataset_macro_f1(gold, pred, model.spec().labels);
}

TrainResult train(TaggerModel& model, std::span<const EncodedSentence> train_set,
                  std::span<const EncodedSentence> dev_set, const TrainConfig& config, std::uint64_t seed) {
  config.validate();
  if (train_set.empty()) throw TrainingError("empty training set");
  if (dev_set.empty()) throw TrainingError("empty dev set");

  using Clock = std::chrono::steady_clock;
  Rng rng(seed);
  Adam adam(model.params().size(), config.adam);
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  TrainResult result;
  result.best_dev_f1 = -1.0;
  std::vector<double> best_params(model.params().flat().begin(), model.params().flat().end());
  int since_best = 0;
  std::vector<const EncodedSentence*> batch;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto t0 = Clock::now();
    rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t lo = 0; lo < order.size(); lo += config.minibatch) {
      const std::size_t hi = std::min(order.size(), lo + config.minibatch);
      batch.clear();
      for (std::size_t i = lo; i < hi; ++i) batch.push_back(&train_set[order[i]]);
      auto bg = nll_and_gradient(model, batch, config.use_dropout, rng.next());
      if (!std::isfinite(bg.loss)) {
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch starting at " +
                            std::to_string(lo));
      }
      adam.step(model.params().flat(), bg.grad.flat());
      epoch_loss += bg.loss * static_cast<double>(hi - lo);
    }
    const double f1 = evaluate(model, dev_set);
    result.epoch_seconds.push_back(std::chrono::duration<double>(Clock::now() - t0).count());
    result.epoch_losses.push_back(epoch_loss / static_cast<double>(order.size()));
    result.dev_f1.push_back(f1);
    result.epochs_run = epoch;

    if (f1 > result.best_dev_f1) {
      result.best_dev_f1 = f1;
      std::copy(model.params().flat().begin(), model.params().flat().end(), best_params.begin());
      since_best = 0;
    } else {
      ++since_best;
    }
    if (epoch >= config.min_epochs && since_best >= config.patience) break;
  }
  std::copy(best_params.begin(), best_params.end(), model.params().flat().begin());
  return result;
}

}  // namespace aal
