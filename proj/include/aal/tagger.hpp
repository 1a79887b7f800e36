#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "aal/corpus.hpp"
#include "aal/crf.hpp"
#include "aal/exec.hpp"
#include "aal/params.hpp"
#include "aal/rng.hpp"

namespace aal {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class BackboneKind { linear, bilstm };

std::string_view model_name(BackboneKind k);              // "lincrf" | "bilstm-crf"
std::optional<BackboneKind> parse_model_name(std::string_view s);

struct ModelSpec {
  BackboneKind kind = BackboneKind::linear;
  std::size_t input_dim = 0;
  std::size_t hidden = 200;     // per direction, bilstm only
  double input_dropout = 0.3;
  double output_dropout = 0.5;  // between BiLSTM and the output map
  int labels = kNumLabels;
};

struct TrainConfig {
  AdamConfig adam;
  std::size_t minibatch = 64;
  int max_epochs = 100;
  int min_epochs = 10;
  int patience = 10;
  bool use_dropout = true;

  void validate() const;
};

enum class PosteriorMode { softmax_emissions, crf_marginals };

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A frozen-input sentence ready for the tagger; gold may be empty at inference.
struct EncodedSentence {
  Matrix x;
  std::vector<int> gold;
};

// Intermediate values of one emission pass, kept for the backward pass.
struct EmissionTape {
  Matrix input;                 // input after dropout
  struct Direction {
    Matrix in_gate, forget_gate, cell_input, out_gate, cell, hidden;  // T x H each
    Matrix pre_x;               // T x 4H
  };
  Direction dirs[2];
  Matrix features;              // linear: input; bilstm: concatenated states after dropout
  Matrix feature_mask;          // bilstm output-dropout mask (empty when inactive)
};

class TaggerModel {
 public:
  // Weights uniform in +-sqrt(1/fan_in); biases and CRF tables zero.
  static TaggerModel create(const ModelSpec& spec, std::uint64_t seed);

  const ModelSpec& spec() const { return spec_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  crf::CrfLayer crf() const;

  // Unnormalized per-token label scores, T x L. rng is required when training.
  Matrix emissions(const Matrix& x, bool training, Rng* rng, EmissionTape* tape = nullptr) const;
  // Accumulates parameter gradients for the emission network and nothing else.
  void emissions_backward(const EmissionTape& tape, const Matrix& d_emissions, ParamStore& grad) const;
  // Adds the CRF-table part of a gradient.
  void crf_backward(const crf::NllGradient& g, ParamStore& grad) const;

  // Linear backbone: the mean input row. BiLSTM: last forward state
  // concatenated with last backward state.
  Vector sentence_representation(const Matrix& x) const;

  std::string serialize() const;
  static TaggerModel deserialize(std::string_view bytes);

 private:
  ModelSpec spec_;
  ParamStore params_;
  std::size_t emit_w_ = 0, emit_b_ = 0, trans_ = 0, start_ = 0, end_ = 0;
  std::size_t w_ih_[2]{}, w_hh_[2]{}, b_lstm_[2]{};

  void register_params();
  Matrix lstm_direction(const Matrix& input, int dir, EmissionTape::Direction* tape) const;
};

struct BatchGradient {
  double loss = 0.0;  // mean over the batch
  ParamStore grad;    // gradient of the mean loss
};

// Mean CRF negative log-likelihood and exact gradient. In training mode the
// dropout masks of batch item i come from derive_seed(dropout_seed, i).
BatchGradient nll_and_gradient(const TaggerModel& model,
                               std::span<const EncodedSentence* const> batch, bool training,
                               std::uint64_t dropout_seed, Exec exec = Exec::parallel);

std::vector<int> predict(const TaggerModel& model, const Matrix& x);
std::vector<std::vector<int>> predict(const TaggerModel& model,
                                      std::span<const EncodedSentence> sentences,
                                      Exec exec = Exec::parallel);

Matrix token_posteriors(const TaggerModel& model, const Matrix& x,
                        PosteriorMode mode = PosteriorMode::softmax_emissions);

double evaluate(const TaggerModel& model, std::span<const EncodedSentence> sentences,
                Exec exec = Exec::parallel);

struct TrainResult {
  int epochs_run = 0;
  double best_dev_f1 = 0.0;
  std::vector<double> epoch_seconds;
  std::vector<double> epoch_losses;
  std::vector<double> dev_f1;
};

// Minibatch Adam with early stopping on dev macro-F1; the model ends holding
// the best-dev parameters.
TrainResult train(TaggerModel& model, std::span<const EncodedSentence> train_set,
                  std::span<const EncodedSentence> dev_set, const TrainConfig& config,
                  std::uint64_t seed);

}  // namespace aal
