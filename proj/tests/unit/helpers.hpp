#pragma once

#include <cmath>

#include "amg/attacks.hpp"
#include "amg/datasets.hpp"
#include "amg/network.hpp"

namespace amg::testing {

/// Two-class linear network whose logit difference is normal . x + offset.
inline Network linear_two_class(const Tensor& normal, double offset) {
  Layer l;
  l.kind = LayerKind::dense;
  l.in_dim = normal.size();
  l.out_dim = 2;
  l.weight.assign(2 * normal.size(), 0.0);
  for (std::size_t i = 0; i < normal.size(); ++i) l.weight[normal.size() + i] = normal[i];
  l.bias = {0.0, offset};
  return Network({normal.size()}, {l});
}

/// Network whose softmax output is `probs` for every input of dimension `dim`.
inline Network constant_probs(std::size_t dim, const std::vector<double>& probs) {
  Layer l;
  l.kind = LayerKind::dense;
  l.in_dim = dim;
  l.out_dim = probs.size();
  l.weight.assign(dim * probs.size(), 0.0);
  for (double p : probs) l.bias.push_back(std::log(p));
  return Network({dim}, {l});
}

/// Hard-label hyperplane responder: class 1 iff normal . x + offset > 0.
struct Hyperplane {
  Tensor normal;
  double offset = 0.0;
  int operator()(const Tensor& x) const { return dot(normal, x) + offset > 0.0 ? 1 : 0; }
  double distance(const Tensor& x) const { return std::abs(dot(normal, x) + offset) / l2_norm(normal); }
};

}  // namespace amg::testing
