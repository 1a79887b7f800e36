#include "aal/params.hpp"

#include <cmath>
#include <stdexcept>

namespace aal {

std::size_t ParamStore::add(std::string name, Eigen::Index rows, Eigen::Index cols) {
  Entry e{std::move(name), rows, cols, data_.size()};
  data_.resize(data_.size() + static_cast<std::size_t>(rows * cols), 0.0);
  entries_.push_back(std::move(e));
  return entries_.size() - 1;
}

std::size_t ParamStore::find(std::string_view name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name == name) return i;
  }
  throw std::out_of_range("no parameter named " + std::string(name));
}

ParamStore ParamStore::zeros_like() const {
  ParamStore z;
  z.entries_ = entries_;
  z.data_.assign(data_.size(), 0.0);
  return z;
}

void ParamStore::set_zero() { std::fill(data_.begin(), data_.end(), 0.0); }

void ParamStore::add_scaled(const ParamStore& other, double scale) {
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += scale * other.data_[i];
}

void Adam::step(std::span<double> params, std::span<const double> grad) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grad[i];
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
    const double m_hat = m_[i] / bc1;
    const double v_hat = v_[i] / bc2;
    params[i] -= cfg_.learning_rate * m_hat / (std::sqrt(v_hat) + cfg_.eps);
  }
}

}  // namespace aal
