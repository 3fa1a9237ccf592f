// Copyright Contributors to the fvsplat project
// SPDX-License-Identifier: Apache-2.0
#include "fvs/scene/prune.hpp"

#include "fvs/error.hpp"

namespace fvs {
namespace {

void check_threshold(float threshold) {
  if (!(threshold >= 0.0f && threshold <= 1.0f)) throw ContractViolation("prune threshold must lie in [0, 1]");
}

} // namespace

GaussianSet prune_by_opacity(const GaussianSet& set, float threshold) {
  check_threshold(threshold);
  GaussianSet out;
  out.sh_degree = set.sh_degree;
  for (const Gaussian& g : set.gaussians)
    if (g.opacity >= threshold) out.gaussians.push_back(g);
  return out;
}

NeuralPointCloud prune_by_opacity(const NeuralPointCloud& cloud, float threshold) {
  check_threshold(threshold);
  NeuralPointCloud out(cloud.feature_dim());
  for (std::size_t i = 0; i < cloud.size(); ++i)
    if (cloud.opacity(i) >= threshold) out.push_back(cloud.at(i));
  return out;
}

} // namespace fvs
