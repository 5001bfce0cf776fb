// Copyright 2026 The carimirror Authors.
// SPDX-License-Identifier: Apache-2.0

// Bundles that need no trainer: a closed-form toy model fitted on the synthetic family, and
// random-weight bundles for timing at arbitrary topologies.

#pragma once

#include <carimirror/style/bundle.hpp>
#include <carimirror/synthetic.hpp>

#include <cstdint>

namespace carimirror {

struct StyleArchitecture
{
    int regularDim = 200;
    int caricatureDim = 350;
    int chebOrder = 6;
    int convLayers = 4;
    int generatorBlocks = 3;
    int generatorHidden = 64;
};

struct ToyBundleOptions
{
    StyleArchitecture architecture;
    int trainingPairs = 600;
    std::uint64_t seed = 20260101;
    /// Relative ridge strength for the generator fits.
    double ridge = 1e-6;
};

/// Linear coders (PCA basis folded through invertible random graph convolutions) and
/// generators fitted by ridge regression on paired regular/exaggerated samples, with
/// random-feature residual blocks fitted to the remaining residual.
WeightsBundle build_toy_style_bundle(const SyntheticFaceModel& model, const ToyBundleOptions& options = {});

/// Architecture-conformant bundle with small random weights for the given topology.
WeightsBundle random_style_bundle(const TriMesh& topology, const StyleArchitecture& architecture, std::uint64_t seed,
                                  int channels = 3);

} // namespace carimirror
