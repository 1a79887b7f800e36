#pragma once

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace aal::crf {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Linear-chain CRF scores over L labels. transitions(i, j) scores label j
// following label i. A path y scores
//   start(y_0) + sum_t E(t, y_t) + sum_t transitions(y_t, y_t+1) + end(y_T-1).
struct CrfLayer {
  Matrix transitions;
  Vector start;
  Vector end;

  static CrfLayer zeros(Eigen::Index labels) {
    return {Matrix::Zero(labels, labels), Vector::Zero(labels), Vector::Zero(labels)};
  }
  Eigen::Index labels() const { return start.size(); }
};

struct ViterbiResult {
  std::vector<int> path;
  double score = 0.0;
};

struct NllGradient {
  double loss = 0.0;      // logZ - score(gold)
  Matrix d_emissions;     // T x L
  Matrix d_transitions;   // L x L
  Vector d_start;
  Vector d_end;
};

double log_sum_exp(std::span<const double> v);

double path_score(const Matrix& emissions, const CrfLayer& crf, std::span<const int> path);
double log_partition(const Matrix& emissions, const CrfLayer& crf);
// Ties resolve toward the lower label index.
ViterbiResult viterbi(const Matrix& emissions, const CrfLayer& crf);
// Per-token marginals p(y_t = j | x), T x L.
Matrix marginals(const Matrix& emissions, const CrfLayer& crf);
NllGradient nll_gradient(const Matrix& emissions, const CrfLayer& crf, std::span<const int> gold);

// Row-wise softmax.
Matrix softmax_rows(const Matrix& scores);

}  // namespace aal::crf
