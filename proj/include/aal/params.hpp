#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace aal {

// Named parameter tensors laid out contiguously in one buffer. Gradients use
// an identically shaped store, so optimizers and finite-difference checks can
// work on the flat view.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    std::size_t offset = 0;
  };

  using MatMap = Eigen::Map<Eigen::MatrixXd>;
  using ConstMatMap = Eigen::Map<const Eigen::MatrixXd>;

  std::size_t add(std::string name, Eigen::Index rows, Eigen::Index cols);

  MatMap mat(std::size_t i) {
    const auto& e = entries_[i];
    return {data_.data() + e.offset, e.rows, e.cols};
  }
  ConstMatMap mat(std::size_t i) const {
    const auto& e = entries_[i];
    return {data_.data() + e.offset, e.rows, e.cols};
  }

  std::size_t find(std::string_view name) const;

  const std::vector<Entry>& entries() const { return entries_; }
  std::span<double> flat() { return data_; }
  std::span<const double> flat() const { return data_; }
  std::size_t size() const { return data_.size(); }

  ParamStore zeros_like() const;
  void set_zero();
  void add_scaled(const ParamStore& other, double scale);

 private:
  std::vector<Entry> entries_;
  std::vector<double> data_;
};

struct AdamConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(std::size_t size, AdamConfig cfg) : cfg_(cfg), m_(size, 0.0), v_(size, 0.0) {}

  void step(std::span<double> params, std::span<const double> grad);
  long steps() const { return t_; }

 private:
  AdamConfig cfg_;
  std::vector<double> m_;
  std::vector<double> v_;
  long t_ = 0;
};

}  // namespace aal
