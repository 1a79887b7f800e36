#include "aal/crf.hpp"

#include <cmath>
#include <limits>

namespace aal::crf {

namespace {

// alpha(t, j): log-sum of all prefixes ending in label j at t (emission of t included).
Matrix forward(const Matrix& e, const CrfLayer& crf) {
  const auto T = e.rows();
  const auto L = e.cols();
  Matrix alpha(T, L);
  alpha.row(0) = crf.start.transpose() + e.row(0);
  std::vector<double> buf(static_cast<std::size_t>(L));
  for (Eigen::Index t = 1; t < T; ++t) {
    for (Eigen::Index j = 0; j < L; ++j) {
      for (Eigen::Index i = 0; i < L; ++i) buf[static_cast<std::size_t>(i)] = alpha(t - 1, i) + crf.transitions(i, j);
      alpha(t, j) = log_sum_exp(buf) + e(t, j);
    }
  }
  return alpha;
}

// beta(t, i): log-sum of all suffixes after t given label i at t (end score included).
Matrix backward(const Matrix& e, const CrfLayer& crf) {
  const auto T = e.rows();
  const auto L = e.cols();
  Matrix beta(T, L);
  beta.row(T - 1) = crf.end.transpose();
  std::vector<double> buf(static_cast<std::size_t>(L));
  for (Eigen::Index t = T - 2; t >= 0; --t) {
    for (Eigen::Index i = 0; i < L; ++i) {
      for (Eigen::Index j = 0; j < L; ++j) {
        buf[static_cast<std::size_t>(j)] = crf.transitions(i, j) + e(t + 1, j) + beta(t + 1, j);
      }
      beta(t, i) = log_sum_exp(buf);
    }
  }
  return beta;
}

double final_log_z(const Matrix& alpha, const CrfLayer& crf) {
  const auto L = alpha.cols();
  std::vector<double> buf(static_cast<std::size_t>(L));
  for (Eigen::Index j = 0; j < L; ++j) buf[static_cast<std::size_t>(j)] = alpha(alpha.rows() - 1, j) + crf.end(j);
  return log_sum_exp(buf);
}

}  // namespace

double log_sum_exp(std::span<const double> v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

double path_score(const Matrix& e, const CrfLayer& crf, std::span<const int> path) {
  double s = crf.start(path[0]) + crf.end(path.back());
  for (std::size_t t = 0; t < path.size(); ++t) {
    s += e(static_cast<Eigen::Index>(t), path[t]);
    if (t > 0) s += crf.transitions(path[t - 1], path[t]);
  }
  return s;
}

double log_partition(const Matrix& e, const CrfLayer& crf) {
  return final_log_z(forward(e, crf), crf);
}

ViterbiResult viterbi(const Matrix& e, const CrfLayer& crf) {
  const auto T = e.rows();
  const auto L = e.cols();
  Matrix delta(T, L);
  Eigen::MatrixXi back(T, L);
  delta.row(0) = crf.start.transpose() + e.row(0);
  for (Eigen::Index t = 1; t < T; ++t) {
    for (Eigen::Index j = 0; j < L; ++j) {
      Eigen::Index best = 0;
      double best_score = delta(t - 1, 0) + crf.transitions(0, j);
      for (Eigen::Index i = 1; i < L; ++i) {
        const double s = delta(t - 1, i) + crf.transitions(i, j);
        if (s > best_score) {
          best_score = s;
          best = i;
        }
      }
      delta(t, j) = best_score + e(t, j);
      back(t, j) = static_cast<int>(best);
    }
  }
  Eigen::Index last = 0;
  double best_score = delta(T - 1, 0) + crf.end(0);
  for (Eigen::Index j = 1; j < L; ++j) {
    const double s = delta(T - 1, j) + crf.end(j);
    if (s > best_score) {
      best_score = s;
      last = j;
    }
  }
  ViterbiResult r;
  r.score = best_score;
  r.path.assign(static_cast<std::size_t>(T), 0);
  r.path[static_cast<std::size_t>(T - 1)] = static_cast<int>(last);
  for (Eigen::Index t = T - 1; t > 0; --t) {
    r.path[static_cast<std::size_t>(t - 1)] = back(t, r.path[static_cast<std::size_t>(t)]);
  }
  return r;
}

Matrix marginals(const Matrix& e, const CrfLayer& crf) {
  const Matrix alpha = forward(e, crf);
  const Matrix beta = backward(e, crf);
  const double log_z = final_log_z(alpha, crf);
  Matrix p = (alpha + beta).array() - log_z;
  p = p.array().exp();
  // Renormalize rows against rounding drift.
  for (Eigen::Index t = 0; t < p.rows(); ++t) p.row(t) /= p.row(t).sum();
  return p;
}

NllGradient nll_gradient(const Matrix& e, const CrfLayer& crf, std::span<const int> gold) {
  const auto T = e.rows();
  const auto L = e.cols();
  const Matrix alpha = forward(e, crf);
  const Matrix beta = backward(e, crf);
  const double log_z = final_log_z(alpha, crf);

  NllGradient g;
  g.loss = log_z - path_score(e, crf, gold);

  g.d_emissions = ((alpha + beta).array() - log_z).exp().matrix();
  g.d_start = g.d_emissions.row(0).transpose();
  g.d_end = g.d_emissions.row(T - 1).transpose();
  g.d_transitions = Matrix::Zero(L, L);
  for (Eigen::Index t = 0; t + 1 < T; ++t) {
    for (Eigen::Index i = 0; i < L; ++i) {
      for (Eigen::Index j = 0; j < L; ++j) {
        g.d_transitions(i, j) +=
            std::exp(alpha(t, i) + crf.transitions(i, j) + e(t + 1, j) + beta(t + 1, j) - log_z);
      }
    }
  }
  for (Eigen::Index t = 0; t < T; ++t) g.d_emissions(t, gold[static_cast<std::size_t>(t)]) -= 1.0;
  g.d_start(gold.front()) -= 1.0;
  g.d_end(gold.back()) -= 1.0;
  for (std::size_t t = 0; t + 1 < gold.size(); ++t) g.d_transitions(gold[t], gold[t + 1]) -= 1.0;
  return g;
}

Matrix softmax_rows(const Matrix& scores) {
  Matrix p(scores.rows(), scores.cols());
  for (Eigen::Index t = 0; t < scores.rows(); ++t) {
    const double m = scores.row(t).maxCoeff();
    p.row(t) = (scores.row(t).array() - m).exp();
    p.row(t) /= p.row(t).sum();
  }
  return p;
}

}  // namespace aal::crf
