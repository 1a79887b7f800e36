#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "aal/exec.hpp"

namespace aal {

using Matrix = Eigen::MatrixXd;

class ClusterError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SweepFailed : public ClusterError {
 public:
  using ClusterError::ClusterError;
};

enum class Reducer { pca, external };

struct ReducedPoints {
  Matrix points;  // N x 2
  Reducer reducer = Reducer::pca;
};

// Projects centred rows onto the two leading principal directions; each
// direction's first nonzero loading is made positive.
ReducedPoints reduce_pca(const Matrix& vectors);

// `ARED1` + N (u32 LE) + N x 2 float32 LE.
std::string serialize_reduced_points(const Matrix& points);
ReducedPoints deserialize_reduced_points(std::string_view bytes);
ReducedPoints load_reduced_points(const std::filesystem::path& path);
void save_reduced_points(const std::filesystem::path& path, const Matrix& points);

enum class ClusterAlgorithm { kmeans, dbscan, agglomerative };
std::string_view algorithm_name(ClusterAlgorithm a);
std::optional<ClusterAlgorithm> parse_algorithm(std::string_view s);

struct ClusterParams {
  int k = 8;
  double eps = 0.5;
  int min_pts = 5;
  double distance_threshold = 50.0;

  // Sets the parameter the sweep tunes for this algorithm.
  void set_tuned(ClusterAlgorithm a, double value);
  double tuned(ClusterAlgorithm a) const;
};

inline constexpr int kNoise = -1;

struct ClusterModel {
  ClusterAlgorithm algorithm = ClusterAlgorithm::kmeans;
  ClusterParams params;
  std::vector<int> assignments;  // kNoise for DBSCAN noise
  Matrix centers;                // C x 2; centroids for DBSCAN/agglomerative
  std::vector<double> lloyd_costs;

  int clusters() const { return static_cast<int>(centers.rows()); }
};

ClusterModel fit_kmeans(const Matrix& points, int k, std::uint64_t seed, int max_iterations = 300);
ClusterModel fit_dbscan(const Matrix& points, double eps, int min_pts, Exec exec = Exec::parallel);

// Ward-linkage merge tree. Merge distances follow scipy/sklearn:
// sqrt(2 |A| |B| / (|A| + |B|)) * ||c_A - c_B||.
struct Dendrogram {
  struct Merge {
    int left = 0;
    int right = 0;
    double distance = 0.0;
  };
  std::size_t leaves = 0;
  std::vector<Merge> merges;  // ids >= leaves refer to merges[id - leaves]
};

Dendrogram ward_dendrogram(const Matrix& points);
// Applies every merge whose distance is below the threshold.
std::vector<int> cut_dendrogram(const Dendrogram& tree, double threshold);
ClusterModel fit_agglomerative(const Matrix& points, double distance_threshold);

ClusterModel fit_clusters(const Matrix& points, ClusterAlgorithm algorithm, const ClusterParams& params,
                          std::uint64_t seed);

// Per-cluster means of the assigned (non-noise) points.
Matrix cluster_centroids(const Matrix& points, const std::vector<int>& assignments, int clusters);

enum class QualityMetric { silhouette, calinski_harabasz, davies_bouldin };
inline constexpr std::array<QualityMetric, 3> kAllMetrics{
    QualityMetric::silhouette, QualityMetric::calinski_harabasz, QualityMetric::davies_bouldin};
std::string_view metric_name(QualityMetric m);
inline bool higher_is_better(QualityMetric m) { return m != QualityMetric::davies_bouldin; }

// Noise points are excluded. Throws ClusterError unless 2 <= C <= n - 1 for
// the n scored points.
double cluster_quality(const Matrix& points, const std::vector<int>& assignments, QualityMetric metric,
                       Exec exec = Exec::parallel);

struct SweepGrid {
  std::vector<double> values;
  static SweepGrid defaults(ClusterAlgorithm a);
};

struct SweepResult {
  ClusterAlgorithm algorithm = ClusterAlgorithm::kmeans;
  SweepGrid grid;
  int iterations = 20;
  // [metric][iteration] -> optimal grid value (NaN when no grid value was scorable)
  std::array<std::vector<double>, 3> iteration_optima;
  std::array<double, 3> metric_optimum{};  // mean over iterations
  double final_value = 0.0;                // mean of the three, snapped to the grid
  // [metric][grid index] -> score averaged over iterations (NaN when never scorable)
  std::array<std::vector<double>, 3> mean_scores;
  std::vector<int> valid_iterations;       // per grid index
};

SweepResult sweep_optimize(const Matrix& points, ClusterAlgorithm algorithm, std::uint64_t seed,
                           int iterations = 20, const std::optional<SweepGrid>& grid = std::nullopt,
                           int min_pts = 5);

}  // namespace aal
