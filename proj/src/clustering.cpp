#include "aal/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <tuple>

#include "aal/binary_io.hpp"
#include "aal/log.hpp"
#include "aal/rng.hpp"

namespace aal {

namespace {

constexpr std::string_view kReducedMagic = "ARED1";
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

inline double sq_dist(const Matrix& p, Eigen::Index i, Eigen::Index j) {
  const double dx = p(i, 0) - p(j, 0);
  const double dy = p(i, 1) - p(j, 1);
  return dx * dx + dy * dy;
}

void require_2d(const Matrix& points) {
  if (points.cols() != 2) throw ClusterError("points must have exactly 2 columns");
  if (!points.allFinite()) throw ClusterError("points contain non-finite values");
}

}  // namespace

ReducedPoints reduce_pca(const Matrix& vectors) {
  const auto n = vectors.rows();
  const auto d = vectors.cols();
  if (n < 2 || d < 2) throw ClusterError("reduce_2d needs at least 2 rows and 2 columns");
  if (!vectors.allFinite()) throw ClusterError("input vectors contain non-finite values");

  const Eigen::RowVectorXd mean = vectors.colwise().mean();
  const Matrix centred = vectors.rowwise() - mean;
  const Matrix cov = (centred.transpose() * centred) / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  if (eig.info() != Eigen::Success) throw ClusterError("eigen-decomposition failed");

  ReducedPoints out;
  out.reducer = Reducer::pca;
  out.points = Matrix::Zero(n, 2);

  const auto& values = eig.eigenvalues();
  const double top = values(d - 1);
  const double tol = 1e-12 * std::max(1.0, std::abs(top));
  if (top <= tol) {
    log::warn("reduce_2d: zero-variance input, using zero points");
    return out;
  }

  Matrix basis(d, 2);
  basis.col(0) = eig.eigenvectors().col(d - 1);
  basis.col(1) = eig.eigenvectors().col(d - 2);
  for (int c = 0; c < 2; ++c) {
    for (Eigen::Index r = 0; r < d; ++r) {
      if (std::abs(basis(r, c)) > 1e-12) {
        if (basis(r, c) < 0) basis.col(c) *= -1.0;
        break;
      }
    }
  }
  out.points = centred * basis;
  if (values(d - 2) <= tol) {
    log::warn("reduce_2d: input has rank 1, second coordinate zero-padded");
    out.points.col(1).setZero();
  }
  return out;
}

std::string serialize_reduced_points(const Matrix& points) {
  require_2d(points);
  io::Writer w;
  w.bytes(kReducedMagic);
  w.u32(static_cast<std::uint32_t>(points.rows()));
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    w.f32(static_cast<float>(points(i, 0)));
    w.f32(static_cast<float>(points(i, 1)));
  }
  return w.data();
}

ReducedPoints deserialize_reduced_points(std::string_view bytes) {
  io::Reader r(bytes);
  try {
    if (r.bytes(kReducedMagic.size()) != kReducedMagic) throw ClusterError("not an ARED1 reduced-points file");
    const auto n = r.u32();
    if (r.remaining() != static_cast<std::size_t>(n) * 8) {
      throw ClusterError("reduced-points file size does not match its point count");
    }
    ReducedPoints out;
    out.reducer = Reducer::external;
    out.points.resize(n, 2);
    for (std::uint32_t i = 0; i < n; ++i) {
      out.points(i, 0) = r.f32();
      out.points(i, 1) = r.f32();
    }
    if (!out.points.allFinite()) throw ClusterError("reduced-points file contains non-finite values");
    return out;
  } catch (const ClusterError&) {
    throw;
  } catch (const std::exception& e) {
    throw ClusterError(std::string("reduced-points file: ") + e.what());
  }
}

ReducedPoints load_reduced_points(const std::filesystem::path& path) {
  return deserialize_reduced_points(io::read_file(path.string()));
}

void save_reduced_points(const std::filesystem::path& path, const Matrix& points) {
  io::write_file(path.string(), serialize_reduced_points(points));
}

std::string_view algorithm_name(ClusterAlgorithm a) {
  switch (a) {
    case ClusterAlgorithm::kmeans: return "kmeans";
    case ClusterAlgorithm::dbscan: return "dbscan";
    case ClusterAlgorithm::agglomerative: return "agglomerative";
  }
  return "?";
}

std::optional<ClusterAlgorithm> parse_algorithm(std::string_view s) {
  if (s == "kmeans") return ClusterAlgorithm::kmeans;
  if (s == "dbscan") return ClusterAlgorithm::dbscan;
  if (s == "agglomerative") return ClusterAlgorithm::agglomerative;
  return std::nullopt;
}

void ClusterParams::set_tuned(ClusterAlgorithm a, double value) {
  switch (a) {
    case ClusterAlgorithm::kmeans: k = static_cast<int>(std::lround(value)); break;
    case ClusterAlgorithm::dbscan: eps = value; break;
    case ClusterAlgorithm::agglomerative: distance_threshold = value; break;
  }
}

double ClusterParams::tuned(ClusterAlgorithm a) const {
  switch (a) {
    case ClusterAlgorithm::kmeans: return k;
    case ClusterAlgorithm::dbscan: return eps;
    case ClusterAlgorithm::agglomerative: return distance_threshold;
  }
  return 0.0;
}

Matrix cluster_centroids(const Matrix& points, const std::vector<int>& assignments, int clusters) {
  Matrix sums = Matrix::Zero(clusters, 2);
  std::vector<int> counts(clusters, 0);
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    const int c = assignments[i];
    if (c < 0) continue;
    sums.row(c) += points.row(static_cast<Eigen::Index>(i));
    ++counts[c];
  }
  for (int c = 0; c < clusters; ++c) {
    if (counts[c] > 0) sums.row(c) /= counts[c];
  }
  return sums;
}

// ---- k-means -------------------------------------------------------------

namespace {

double assign_nearest(const Matrix& points, const Matrix& centers, std::vector<int>& out) {
  double cost = 0.0;
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    int best = 0;
    double best_d = kInf;
    for (Eigen::Index c = 0; c < centers.rows(); ++c) {
      const double d = (points.row(i) - centers.row(c)).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(c);
      }
    }
    out[i] = best;
    cost += best_d;
  }
  return cost;
}

Matrix kmeanspp_seed(const Matrix& points, int k, Rng& rng) {
  const auto n = points.rows();
  Matrix centers(k, 2);
  centers.row(0) = points.row(static_cast<Eigen::Index>(rng.below(n)));
  std::vector<double> d2(n);
  for (Eigen::Index i = 0; i < n; ++i) d2[i] = (points.row(i) - centers.row(0)).squaredNorm();
  for (int c = 1; c < k; ++c) {
    const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    Eigen::Index pick = n - 1;
    if (total > 0.0) {
      const double r = rng.uniform() * total;
      double acc = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += d2[i];
        if (acc > r) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<Eigen::Index>(rng.below(n));
    }
    centers.row(c) = points.row(pick);
    for (Eigen::Index i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], (points.row(i) - centers.row(c)).squaredNorm());
    }
  }
  return centers;
}

}  // namespace

ClusterModel fit_kmeans(const Matrix& points, int k, std::uint64_t seed, int max_iterations) {
  require_2d(points);
  if (k < 1) throw ClusterError("kmeans: k must be at least 1");
  if (k > points.rows()) {
    throw ClusterError("kmeans: k = " + std::to_string(k) + " exceeds the number of points (" +
                       std::to_string(points.rows()) + ")");
  }
  Rng rng(seed);
  ClusterModel model;
  model.algorithm = ClusterAlgorithm::kmeans;
  model.params.k = k;
  model.centers = kmeanspp_seed(points, k, rng);
  model.assignments.assign(points.rows(), 0);
  model.lloyd_costs.push_back(assign_nearest(points, model.centers, model.assignments));

  std::vector<int> next(points.rows());
  for (int it = 0; it < max_iterations; ++it) {
    Matrix sums = Matrix::Zero(k, 2);
    std::vector<int> counts(k, 0);
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
      sums.row(model.assignments[i]) += points.row(i);
      ++counts[model.assignments[i]];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) model.centers.row(c) = sums.row(c) / counts[c];
    }
    model.lloyd_costs.push_back(assign_nearest(points, model.centers, next));
    if (next == model.assignments) break;
    model.assignments.swap(next);
  }
  return model;
}

// ---- DBSCAN --------------------------------------------------------------

ClusterModel fit_dbscan(const Matrix& points, double eps, int min_pts, Exec exec) {
  require_2d(points);
  if (!(eps > 0.0)) throw ClusterError("dbscan: eps must be positive");
  if (min_pts < 1) throw ClusterError("dbscan: min_pts must be at least 1");
  const auto n = static_cast<long>(points.rows());
  const double eps2 = eps * eps;

  // neighbourhoods include the point itself
  std::vector<std::vector<int>> nbrs(n);
  auto fill = [&](long i) {
    for (long j = 0; j < n; ++j) {
      if (sq_dist(points, i, j) <= eps2) nbrs[i].push_back(static_cast<int>(j));
    }
  };
  if (exec == Exec::parallel) {
#pragma omp parallel for schedule(dynamic, 64)
    for (long i = 0; i < n; ++i) fill(i);
  } else {
    for (long i = 0; i < n; ++i) fill(i);
  }

  std::vector<char> core(n, 0);
  for (long i = 0; i < n; ++i) core[i] = static_cast<long>(nbrs[i].size()) >= min_pts;

  std::vector<int> label(n, kNoise);
  int clusters = 0;
  std::vector<int> stack;
  for (long i = 0; i < n; ++i) {
    if (!core[i] || label[i] != kNoise) continue;
    label[i] = clusters;
    stack.assign(1, static_cast<int>(i));
    while (!stack.empty()) {
      const int p = stack.back();
      stack.pop_back();
      for (int q : nbrs[p]) {
        if (core[q] && label[q] == kNoise) {
          label[q] = clusters;
          stack.push_back(q);
        }
      }
    }
    ++clusters;
  }

  // Border points join the nearest core point; equidistant cores are ordered
  // by coordinates so the outcome does not depend on input order.
  auto coord_less = [&](int a, int b) {
    return std::tie(points(a, 0), points(a, 1)) < std::tie(points(b, 0), points(b, 1));
  };
  for (long i = 0; i < n; ++i) {
    if (core[i]) continue;
    int best = -1;
    double best_d = kInf;
    for (int q : nbrs[i]) {
      if (!core[q]) continue;
      const double d = sq_dist(points, i, q);
      if (best < 0 || d < best_d || (d == best_d && coord_less(q, best))) {
        best = q;
        best_d = d;
      }
    }
    if (best >= 0) label[i] = label[best];
  }

  // Number clusters by their lexicographically smallest member.
  std::vector<int> first(clusters, -1);
  for (long i = 0; i < n; ++i) {
    const int c = label[i];
    if (c >= 0 && (first[c] < 0 || coord_less(static_cast<int>(i), first[c]))) first[c] = static_cast<int>(i);
  }
  std::vector<int> order(clusters);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) { return coord_less(first[a], first[b]); });
  std::vector<int> remap(clusters);
  for (int r = 0; r < clusters; ++r) remap[order[r]] = r;
  for (auto& c : label) {
    if (c >= 0) c = remap[c];
  }

  ClusterModel model;
  model.algorithm = ClusterAlgorithm::dbscan;
  model.params.eps = eps;
  model.params.min_pts = min_pts;
  model.assignments = std::move(label);
  model.centers = cluster_centroids(points, model.assignments, clusters);
  return model;
}

// ---- Ward agglomerative --------------------------------------------------

Dendrogram ward_dendrogram(const Matrix& points) {
  require_2d(points);
  const auto n = static_cast<int>(points.rows());
  Dendrogram tree;
  tree.leaves = static_cast<std::size_t>(n);
  if (n < 2) return tree;

  const int total = 2 * n - 1;
  std::vector<double> size(total, 0.0);
  Matrix centroid(total, 2);
  for (int i = 0; i < n; ++i) {
    size[i] = 1.0;
    centroid.row(i) = points.row(i);
  }
  auto ward = [&](int a, int b) {
    const double f = 2.0 * size[a] * size[b] / (size[a] + size[b]);
    return std::sqrt(f * (centroid.row(a) - centroid.row(b)).squaredNorm());
  };

  // nearest-neighbour chain; Ward is reducible so chain merges are exact
  std::vector<int> active(n);
  std::iota(active.begin(), active.end(), 0);
  std::vector<int> chain;
  while (active.size() > 1) {
    if (chain.empty()) chain.push_back(active.front());
    const int a = chain.back();
    const int prev = chain.size() >= 2 ? chain[chain.size() - 2] : -1;
    int best = prev;
    double best_d = prev >= 0 ? ward(a, prev) : kInf;
    for (int c : active) {
      if (c == a) continue;
      const double d = ward(a, c);
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    if (best != prev) {
      chain.push_back(best);
      continue;
    }
    chain.pop_back();
    chain.pop_back();
    const int id = n + static_cast<int>(tree.merges.size());
    size[id] = size[a] + size[prev];
    centroid.row(id) = (size[a] * centroid.row(a) + size[prev] * centroid.row(prev)) / size[id];
    tree.merges.push_back({std::min(a, prev), std::max(a, prev), best_d});
    std::erase_if(active, [&](int c) { return c == a || c == prev; });
    active.push_back(id);
  }
  return tree;
}

std::vector<int> cut_dendrogram(const Dendrogram& tree, double threshold) {
  const auto n = static_cast<int>(tree.leaves);
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  std::vector<int> rep(n + tree.merges.size());
  std::iota(rep.begin(), rep.begin() + n, 0);
  for (std::size_t m = 0; m < tree.merges.size(); ++m) {
    const auto& mg = tree.merges[m];
    rep[n + m] = rep[mg.left];
    if (mg.distance < threshold) {
      const int a = find(rep[mg.left]);
      const int b = find(rep[mg.right]);
      if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
  }
  std::vector<int> label(n, -1);
  std::vector<int> root_label(n, -1);
  int next = 0;
  for (int i = 0; i < n; ++i) {
    const int r = find(i);
    if (root_label[r] < 0) root_label[r] = next++;
    label[i] = root_label[r];
  }
  return label;
}

ClusterModel fit_agglomerative(const Matrix& points, double distance_threshold) {
  if (!(distance_threshold > 0.0)) throw ClusterError("agglomerative: distance_threshold must be positive");
  ClusterModel model;
  model.algorithm = ClusterAlgorithm::agglomerative;
  model.params.distance_threshold = distance_threshold;
  model.assignments = cut_dendrogram(ward_dendrogram(points), distance_threshold);
  const int c = model.assignments.empty() ? 0 : *std::max_element(model.assignments.begin(), model.assignments.end()) + 1;
  model.centers = cluster_centroids(points, model.assignments, c);
  return model;
}

ClusterModel fit_clusters(const Matrix& points, ClusterAlgorithm algorithm, const ClusterParams& params,
                          std::uint64_t seed) {
  ClusterModel model;
  switch (algorithm) {
    case ClusterAlgorithm::kmeans: model = fit_kmeans(points, params.k, seed); break;
    case ClusterAlgorithm::dbscan: model = fit_dbscan(points, params.eps, params.min_pts); break;
    case ClusterAlgorithm::agglomerative: model = fit_agglomerative(points, params.distance_threshold); break;
  }
  ClusterParams merged = params;
  merged.set_tuned(algorithm, model.params.tuned(algorithm));
  model.params = merged;
  return model;
}

// ---- quality -------------------------------------------------------------

std::string_view metric_name(QualityMetric m) {
  switch (m) {
    case QualityMetric::silhouette: return "silhouette";
    case QualityMetric::calinski_harabasz: return "calinski_harabasz";
    case QualityMetric::davies_bouldin: return "davies_bouldin";
  }
  return "?";
}

namespace {

struct Scored {
  Matrix points;
  std::vector<int> labels;
  int clusters = 0;
};

Scored scored_subset(const Matrix& points, const std::vector<int>& assignments) {
  require_2d(points);
  if (assignments.size() != static_cast<std::size_t>(points.rows())) {
    throw ClusterError("assignments and points differ in length");
  }
  Scored s;
  std::vector<int> keep;
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    if (assignments[i] >= 0) keep.push_back(static_cast<int>(i));
  }
  s.points.resize(static_cast<Eigen::Index>(keep.size()), 2);
  // relabel to a dense range, skipping empty cluster ids
  std::vector<int> dense;
  for (std::size_t r = 0; r < keep.size(); ++r) {
    s.points.row(static_cast<Eigen::Index>(r)) = points.row(keep[r]);
    const int c = assignments[keep[r]];
    if (c >= static_cast<int>(dense.size())) dense.resize(c + 1, -1);
    if (dense[c] < 0) dense[c] = s.clusters++;
    s.labels.push_back(dense[c]);
  }
  const auto n = static_cast<int>(keep.size());
  if (s.clusters < 2 || s.clusters > n - 1) {
    throw ClusterError("cluster quality undefined for " + std::to_string(s.clusters) + " clusters over " +
                       std::to_string(n) + " points");
  }
  return s;
}

double silhouette(const Scored& s, Exec exec) {
  const auto n = static_cast<long>(s.points.rows());
  std::vector<int> counts(s.clusters, 0);
  for (int c : s.labels) ++counts[c];
  std::vector<double> per_point(n);

  auto point = [&](long i) {
    std::vector<double> sums(s.clusters, 0.0);
    for (long j = 0; j < n; ++j) {
      if (j != i) sums[s.labels[j]] += std::sqrt(sq_dist(s.points, i, j));
    }
    const int own = s.labels[i];
    if (counts[own] == 1) {
      per_point[i] = 0.0;
      return;
    }
    const double a = sums[own] / (counts[own] - 1);
    double b = kInf;
    for (int c = 0; c < s.clusters; ++c) {
      if (c != own && counts[c] > 0) b = std::min(b, sums[c] / counts[c]);
    }
    const double m = std::max(a, b);
    per_point[i] = m > 0.0 ? (b - a) / m : 0.0;
  };
  if (exec == Exec::parallel) {
#pragma omp parallel for schedule(dynamic, 32)
    for (long i = 0; i < n; ++i) point(i);
  } else {
    for (long i = 0; i < n; ++i) point(i);
  }
  double total = 0.0;
  for (double v : per_point) total += v;
  return total / static_cast<double>(n);
}

double calinski_harabasz(const Scored& s) {
  const auto n = s.points.rows();
  const Matrix centers = cluster_centroids(s.points, s.labels, s.clusters);
  const Eigen::RowVector2d mean = s.points.colwise().mean();
  std::vector<int> counts(s.clusters, 0);
  for (int c : s.labels) ++counts[c];
  double between = 0.0;
  for (int c = 0; c < s.clusters; ++c) between += counts[c] * (centers.row(c) - mean).squaredNorm();
  double within = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) within += (s.points.row(i) - centers.row(s.labels[i])).squaredNorm();
  if (within == 0.0) return 1.0;
  return between * static_cast<double>(n - s.clusters) / (within * (s.clusters - 1));
}

double davies_bouldin(const Scored& s) {
  const Matrix centers = cluster_centroids(s.points, s.labels, s.clusters);
  std::vector<double> spread(s.clusters, 0.0);
  std::vector<int> counts(s.clusters, 0);
  for (Eigen::Index i = 0; i < s.points.rows(); ++i) {
    const int c = s.labels[i];
    spread[c] += (s.points.row(i) - centers.row(c)).norm();
    ++counts[c];
  }
  for (int c = 0; c < s.clusters; ++c) spread[c] /= counts[c];
  double total = 0.0;
  for (int i = 0; i < s.clusters; ++i) {
    double worst = 0.0;
    for (int j = 0; j < s.clusters; ++j) {
      if (j == i) continue;
      const double d = (centers.row(i) - centers.row(j)).norm();
      if (d > 0.0) worst = std::max(worst, (spread[i] + spread[j]) / d);
    }
    total += worst;
  }
  return total / s.clusters;
}

}  // namespace

double cluster_quality(const Matrix& points, const std::vector<int>& assignments, QualityMetric metric,
                       Exec exec) {
  const Scored s = scored_subset(points, assignments);
  switch (metric) {
    case QualityMetric::silhouette: return silhouette(s, exec);
    case QualityMetric::calinski_harabasz: return calinski_harabasz(s);
    case QualityMetric::davies_bouldin: return davies_bouldin(s);
  }
  return kNaN;
}

// ---- sweep ---------------------------------------------------------------

SweepGrid SweepGrid::defaults(ClusterAlgorithm a) {
  SweepGrid g;
  switch (a) {
    case ClusterAlgorithm::kmeans:
      for (int k = 2; k <= 16; ++k) g.values.push_back(k);
      break;
    case ClusterAlgorithm::dbscan:
      for (int e = 10; e <= 50; ++e) g.values.push_back(e / 100.0);
      break;
    case ClusterAlgorithm::agglomerative:
      for (int t = 10; t <= 150; t += 5) g.values.push_back(t);
      break;
  }
  return g;
}

namespace {

// Scores for one fit, or nullopt when the metrics are undefined.
std::optional<std::array<double, 3>> score_fit(const Matrix& points, const std::vector<int>& assignments) {
  std::array<double, 3> out{};
  try {
    const Scored s = scored_subset(points, assignments);
    out[0] = silhouette(s, Exec::serial);
    out[1] = calinski_harabasz(s);
    out[2] = davies_bouldin(s);
  } catch (const ClusterError&) {
    return std::nullopt;
  }
  return out;
}

}  // namespace

SweepResult sweep_optimize(const Matrix& points, ClusterAlgorithm algorithm, std::uint64_t seed, int iterations,
                           const std::optional<SweepGrid>& grid, int min_pts) {
  require_2d(points);
  if (iterations < 1) throw ClusterError("sweep needs at least one iteration");
  SweepResult result;
  result.algorithm = algorithm;
  result.grid = grid ? *grid : SweepGrid::defaults(algorithm);
  result.iterations = iterations;
  const auto& values = result.grid.values;
  if (values.empty()) throw ClusterError("sweep grid is empty");
  const long g = static_cast<long>(values.size());

  // Only k-means depends on the seed; the other fits are computed once and
  // reused for every iteration.
  const bool seeded = algorithm == ClusterAlgorithm::kmeans;
  const int distinct = seeded ? iterations : 1;
  std::optional<Dendrogram> tree;
  if (algorithm == ClusterAlgorithm::agglomerative) tree = ward_dendrogram(points);

  std::vector<std::vector<std::optional<std::array<double, 3>>>> scores(
      distinct, std::vector<std::optional<std::array<double, 3>>>(g));
  const long cells = distinct * g;
#pragma omp parallel for schedule(dynamic, 1)
  for (long cell = 0; cell < cells; ++cell) {
    const int it = static_cast<int>(cell / g);
    const long gi = cell % g;
    std::vector<int> labels;
    switch (algorithm) {
      case ClusterAlgorithm::kmeans: {
        const int k = static_cast<int>(std::lround(values[gi]));
        if (k < 1 || k > points.rows()) continue;
        labels = fit_kmeans(points, k, derive_seed(seed, static_cast<std::uint64_t>(it))).assignments;
        break;
      }
      case ClusterAlgorithm::dbscan:
        labels = fit_dbscan(points, values[gi], min_pts, Exec::serial).assignments;
        break;
      case ClusterAlgorithm::agglomerative:
        labels = cut_dendrogram(*tree, values[gi]);
        break;
    }
    scores[it][gi] = score_fit(points, labels);
  }

  for (int m = 0; m < 3; ++m) {
    result.iteration_optima[m].assign(iterations, kNaN);
    result.mean_scores[m].assign(g, 0.0);
  }
  result.valid_iterations.assign(g, 0);

  for (int it = 0; it < iterations; ++it) {
    const auto& row = scores[seeded ? it : 0];
    for (long gi = 0; gi < g; ++gi) {
      if (!row[gi]) continue;
      ++result.valid_iterations[gi];
      for (int m = 0; m < 3; ++m) result.mean_scores[m][gi] += (*row[gi])[m];
    }
    for (int m = 0; m < 3; ++m) {
      const bool maximize = higher_is_better(kAllMetrics[m]);
      long best = -1;
      for (long gi = 0; gi < g; ++gi) {
        if (!row[gi]) continue;
        const double v = (*row[gi])[m];
        if (best < 0 || (maximize ? v > (*row[best])[m] : v < (*row[best])[m])) best = gi;
      }
      if (best >= 0) result.iteration_optima[m][it] = values[best];
    }
  }
  for (long gi = 0; gi < g; ++gi) {
    for (int m = 0; m < 3; ++m) {
      result.mean_scores[m][gi] =
          result.valid_iterations[gi] > 0 ? result.mean_scores[m][gi] / result.valid_iterations[gi] : kNaN;
    }
  }

  for (int m = 0; m < 3; ++m) {
    double sum = 0.0;
    int count = 0;
    for (double v : result.iteration_optima[m]) {
      if (!std::isnan(v)) {
        sum += v;
        ++count;
      }
    }
    if (count == 0) {
      throw SweepFailed("sweep failed for " + std::string(algorithm_name(algorithm)) +
                        ": no grid value produced a scorable clustering");
    }
    result.metric_optimum[m] = sum / count;
  }
  const double mean = (result.metric_optimum[0] + result.metric_optimum[1] + result.metric_optimum[2]) / 3.0;
  double snapped = values.front();
  for (double v : values) {
    if (std::abs(v - mean) < std::abs(snapped - mean)) snapped = v;
  }
  result.final_value = snapped;
  return result;
}

}  // namespace aal
