#include "fbsde/adam.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace fbsde {

Adam::Adam(OptimConfig cfg) : cfg_(cfg) {
  if (cfg_.lr <= 0.0) throw std::invalid_argument("adam: learning rate must be positive");
  if (cfg_.beta1 <= 0.0 || cfg_.beta1 >= 1.0 || cfg_.beta2 <= 0.0 || cfg_.beta2 >= 1.0)
    throw std::invalid_argument("adam: betas must lie in (0,1)");
  if (cfg_.eps <= 0.0) throw std::invalid_argument("adam: eps must be positive");
}

void Adam::apply(std::vector<Tensor>& params, std::vector<Tensor> grads) {
  if (grads.size() != params.size())
    throw std::invalid_argument("adam: got " + std::to_string(grads.size()) +
                                " gradients for " + std::to_string(params.size()) +
                                " parameters");
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (!grads[k].same_shape(params[k]))
      throw std::invalid_argument("adam: gradient shape " + grads[k].shape_str() +
                                  " does not match parameter " + std::to_string(k) +
                                  " shape " + params[k].shape_str());
    if (!grads[k].all_finite())
      throw std::runtime_error("adam: non-finite gradient for parameter " +
                               std::to_string(k));
  }

  if (cfg_.clip_norm > 0.0) {
    double sq = 0.0;
    for (const auto& g : grads)
      for (double v : g) sq += v * v;
    const double norm = std::sqrt(sq);
    if (norm > cfg_.clip_norm) {
      const double s = cfg_.clip_norm / norm;
      for (auto& g : grads)
        for (double& v : g) v *= s;
    }
  }

  ++t_;

  if (cfg_.plain_sgd) {
    for (std::size_t k = 0; k < params.size(); ++k)
      for (std::size_t e = 0; e < params[k].size(); ++e)
        params[k][e] -= cfg_.lr * grads[k][e];
    return;
  }

  if (m_.empty()) {
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const auto& p : params) {
      m_.emplace_back(p.shape());
      v_.emplace_back(p.shape());
    }
  }
  if (m_.size() != params.size())
    throw std::invalid_argument("adam: parameter count changed between steps");

  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = params[k];
    Tensor& m = m_[k];
    Tensor& v = v_[k];
    const Tensor& g = grads[k];
    for (std::size_t e = 0; e < p.size(); ++e) {
      m[e] = cfg_.beta1 * m[e] + (1.0 - cfg_.beta1) * g[e];
      v[e] = cfg_.beta2 * v[e] + (1.0 - cfg_.beta2) * g[e] * g[e];
      const double mhat = m[e] / bc1;
      const double vhat = v[e] / bc2;
      p[e] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

}  // namespace fbsde
