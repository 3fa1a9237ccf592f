// Copyright Contributors to the fvsplat project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "fvs/scene/types.hpp"

namespace fvs {

/// Opacity threshold used for pruning after optimization.
inline constexpr float kDefaultPruneThreshold = 0.005f;

/// Keeps primitives with opacity >= threshold, preserving order.
GaussianSet prune_by_opacity(const GaussianSet& set, float threshold);
NeuralPointCloud prune_by_opacity(const NeuralPointCloud& cloud, float threshold);

} // namespace fvs
