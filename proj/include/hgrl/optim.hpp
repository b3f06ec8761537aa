#pragma once

#include <map>
#include <string>

#include "hgrl/params.hpp"

namespace hgrl {

// Adam with bias correction, weight decay 0. Moment tensors are keyed by
// parameter name so checkpoints can round-trip optimizer state exactly.
struct Adam {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step = 0;
  std::map<std::string, Mat> m;
  std::map<std::string, Mat> v;

  void update(ParamStore& params, const LeafMap& leafs) {
    ++step;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    for (const auto& name : params.names()) {
      if (!params.trainable(name)) continue;
      const Mat& grad = leafs.at(name).grad();
      Mat& value = params.at(name);
      check_shape(grad.rows() == value.rows() && grad.cols() == value.cols(),
                  "adam: gradient shape mismatch for " + name);
      if (!grad.allFinite()) throw NumericError("adam: non-finite gradient for " + name);
      auto [mi, fresh_m] = m.emplace(name, Mat::Zero(value.rows(), value.cols()));
      auto [vi, fresh_v] = v.emplace(name, Mat::Zero(value.rows(), value.cols()));
      (void)fresh_m;
      (void)fresh_v;
      mi->second = beta1 * mi->second + (1.0 - beta1) * grad;
      vi->second = beta2 * vi->second + (1.0 - beta2) * grad.cwiseProduct(grad);
      for (Eigen::Index r = 0; r < value.rows(); ++r)
        for (Eigen::Index c = 0; c < value.cols(); ++c) {
          const double mhat = mi->second(r, c) / bc1;
          const double vhat = vi->second(r, c) / bc2;
          value(r, c) -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
  }
};

}  // namespace hgrl
