#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "volsr/autodiff.hpp"

namespace volsr::losses {

/// Training objective selector. The perceptual extractor is a fixed seeded
/// random network (not a pretrained classifier; see README).
struct LossSpec {
    std::string kind = "mse";  // "mse" | "ssim" | "perceptual"
    int ssim_window = 7;
    std::uint64_t perceptual_seed = 0;
    std::array<double, 3> layer_weights = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};

    void validate() const;
};

/// Mean over all elements of (pred - target)^2.
ad::Tensor mse_loss(ad::Graph& g, ad::Tensor pred, ad::Tensor target);

/// 1 - mean windowed SSIM, same kernel formula and valid-window alignment as
/// quality::ssim, built from autodiff ops (uniform-window means via
/// convolution with a constant kernel). The dynamic range L is the target
/// batch's range treated as a constant (floored at 1e-8 for degenerate
/// patches); no gradient flows through L.
ad::Tensor ssim_loss(ad::Graph& g, ad::Tensor pred, ad::Tensor target, int window = 7);

/// Fixed (non-trainable) 3-layer 3D conv feature stack: channels 1->8->16->16,
/// 3^3 kernels, relu, stride-2 spatial reduction per layer. Deterministically
/// initialized from a seed.
struct PerceptualExtractor {
    static constexpr int kLayers = 3;
    std::uint64_t seed = 0;
    std::vector<std::vector<double>> weights;  // w0,b0,w1,b1,w2,b2
    std::vector<ad::Shape> shapes;

    static PerceptualExtractor make(std::uint64_t seed);
};

/// Sum over layers of w_l * mean((phi_l(pred) - phi_l(target))^2) on
/// channel-unit-normalized feature maps. Gradients flow to pred only.
/// Requires at least 8 voxels per spatial axis (three stride-2 stages).
ad::Tensor perceptual_loss(ad::Graph& g, ad::Tensor pred, ad::Tensor target,
                           const PerceptualExtractor& extractor,
                           std::array<double, 3> layer_weights = {1.0 / 3.0, 1.0 / 3.0,
                                                                  1.0 / 3.0});

}  // namespace volsr::losses
