// Copyright Contributors to the fvsplat project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "fvs/scene/types.hpp"

#include <filesystem>

namespace fvs {

/// Reads a binary little-endian 3DGS-layout PLY (x,y,z, f_dc_0..2, optional
/// f_rest_*, opacity, scale_0..2, rot_0..3). Extra properties such as normals
/// are ignored. Opacity is passed through a sigmoid; quaternions are normalized.
///
/// Throws ParseError for structural problems (the message names the missing
/// field) and DataError for non-finite values (carrying the record index).
GaussianSet load_gaussians(const std::filesystem::path& path);

/// Writes the same layout back, with opacity stored pre-activation.
/// load_gaussians(write_gaussians(s)) reproduces `s` bit for bit whenever every
/// opacity is representable (see quantize_opacity), which holds for any set
/// that was itself loaded from a file.
void write_gaussians(const std::filesystem::path& path, const GaussianSet& set);

/// Reads x,y,z, size, opacity, feat_0..feat_{D-1}. D is taken from the file.
NeuralPointCloud load_points(const std::filesystem::path& path);
void write_points(const std::filesystem::path& path, const NeuralPointCloud& cloud);

/// Pre-activation opacity whose float sigmoid reproduces `opacity` exactly
/// whenever such a value exists.
float opacity_to_logit(float opacity);
/// Correctly rounded logistic function.
float sigmoid(float x);
/// Nearest opacity that survives the pre-activation file encoding exactly.
/// Not every float in (0, 1) is a sigmoid output, so in-memory opacities are
/// snapped with this before they are meant to round-trip.
float quantize_opacity(float opacity);

} // namespace fvs
