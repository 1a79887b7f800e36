#pragma once

// Independent reference computations used only by tests. Nothing here calls
// into the code paths it is used to check.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "aal/params.hpp"
#include "aal/rng.hpp"

namespace oracle {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline std::vector<std::vector<int>> all_paths(int labels, int length) {
  std::vector<std::vector<int>> out;
  std::vector<int> p(static_cast<std::size_t>(length), 0);
  while (true) {
    out.push_back(p);
    int i = length - 1;
    while (i >= 0 && p[static_cast<std::size_t>(i)] == labels - 1) p[static_cast<std::size_t>(i--)] = 0;
    if (i < 0) break;
    ++p[static_cast<std::size_t>(i)];
  }
  return out;
}

struct Tables {
  Matrix transitions;
  Vector start, end;
};

inline double score(const Matrix& e, const Tables& c, const std::vector<int>& p) {
  double s = c.start(p.front()) + c.end(p.back());
  for (std::size_t t = 0; t < p.size(); ++t) {
    s += e(static_cast<long>(t), p[t]);
    if (t) s += c.transitions(p[t - 1], p[t]);
  }
  return s;
}

struct Enumeration {
  double log_z = 0.0;
  std::vector<int> best;
  double best_score = -std::numeric_limits<double>::infinity();
  Matrix marginals;
};

inline Enumeration enumerate(const Matrix& e, const Tables& c) {
  Enumeration r;
  const auto paths = all_paths(static_cast<int>(e.cols()), static_cast<int>(e.rows()));
  std::vector<double> scores;
  double m = -std::numeric_limits<double>::infinity();
  for (const auto& p : paths) {
    const double s = score(e, c, p);
    scores.push_back(s);
    m = std::max(m, s);
    if (s > r.best_score) {
      r.best_score = s;
      r.best = p;
    }
  }
  double z = 0.0;
  for (double s : scores) z += std::exp(s - m);
  r.log_z = m + std::log(z);
  r.marginals = Matrix::Zero(e.rows(), e.cols());
  for (std::size_t k = 0; k < paths.size(); ++k) {
    const double w = std::exp(scores[k] - r.log_z);
    for (std::size_t t = 0; t < paths[k].size(); ++t) r.marginals(static_cast<long>(t), paths[k][t]) += w;
  }
  return r;
}

inline Matrix random_matrix(long rows, long cols, aal::Rng& rng, double scale = 1.0) {
  Matrix m(rows, cols);
  for (long i = 0; i < rows; ++i)
    for (long j = 0; j < cols; ++j) m(i, j) = rng.uniform(-scale, scale);
  return m;
}

// Central differences of f over every coordinate of a flat parameter buffer.
inline std::vector<double> finite_difference(std::span<double> params, const std::function<double()>& f,
                                             double h = 1e-4) {
  std::vector<double> g(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = params[i];
    params[i] = saved + h;
    const double up = f();
    params[i] = saved - h;
    const double down = f();
    params[i] = saved;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

inline double sig(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Scalar-loop BiLSTM + output map, reading weights by name from the store.
inline Matrix bilstm_emissions(const aal::ParamStore& p, const Matrix& x, int hidden) {
  const long T = x.rows();
  const long D = x.cols();
  const int H = hidden;
  std::vector<std::vector<double>> states[2];
  const char* names[2] = {"fw", "bw"};
  for (int d = 0; d < 2; ++d) {
    const auto wih = p.mat(p.find(std::string(names[d]) + ".w_ih"));
    const auto whh = p.mat(p.find(std::string(names[d]) + ".w_hh"));
    const auto b = p.mat(p.find(std::string(names[d]) + ".b"));
    std::vector<double> h(static_cast<std::size_t>(H), 0.0), c(h);
    states[d].assign(static_cast<std::size_t>(T), {});
    for (long step = 0; step < T; ++step) {
      const long t = d == 0 ? step : T - 1 - step;
      std::vector<double> z(static_cast<std::size_t>(4 * H));
      for (int r = 0; r < 4 * H; ++r) {
        double acc = b(r, 0);
        for (long k = 0; k < D; ++k) acc += wih(r, k) * x(t, k);
        for (int k = 0; k < H; ++k) acc += whh(r, k) * h[static_cast<std::size_t>(k)];
        z[static_cast<std::size_t>(r)] = acc;
      }
      std::vector<double> nh(h.size());
      for (int j = 0; j < H; ++j) {
        const double i = sig(z[static_cast<std::size_t>(j)]);
        const double f = sig(z[static_cast<std::size_t>(H + j)]);
        const double g = std::tanh(z[static_cast<std::size_t>(2 * H + j)]);
        const double o = sig(z[static_cast<std::size_t>(3 * H + j)]);
        c[static_cast<std::size_t>(j)] = f * c[static_cast<std::size_t>(j)] + i * g;
        nh[static_cast<std::size_t>(j)] = o * std::tanh(c[static_cast<std::size_t>(j)]);
      }
      h = nh;
      states[d][static_cast<std::size_t>(t)] = h;
    }
  }
  const auto w = p.mat(p.find("emit.w"));
  const auto b = p.mat(p.find("emit.b"));
  Matrix e(T, w.rows());
  for (long t = 0; t < T; ++t) {
    for (long l = 0; l < w.rows(); ++l) {
      double acc = b(l, 0);
      for (int j = 0; j < H; ++j) {
        acc += w(l, j) * states[0][static_cast<std::size_t>(t)][static_cast<std::size_t>(j)];
        acc += w(l, H + j) * states[1][static_cast<std::size_t>(t)][static_cast<std::size_t>(j)];
      }
      e(t, l) = acc;
    }
  }
  return e;
}

}  // namespace oracle
