#include "volsr/losses.hpp"

#include <algorithm>
#include <cmath>

#include "volsr/errors.hpp"
#include "volsr/rng.hpp"

namespace volsr::losses {

void LossSpec::validate() const {
    if (kind != "mse" && kind != "ssim" && kind != "perceptual")
        throw ValidationError("unknown loss kind: " + kind);
    if (ssim_window < 1 || ssim_window % 2 == 0)
        throw ValidationError("ssim window must be odd and positive");
}

ad::Tensor mse_loss(ad::Graph& g, ad::Tensor pred, ad::Tensor target) {
    if (pred.shape() != target.shape()) throw ShapeError("mse_loss requires equal shapes");
    return g.mean(g.square(g.sub(pred, target)));
}

ad::Tensor ssim_loss(ad::Graph& g, ad::Tensor pred, ad::Tensor target, int window) {
    if (pred.shape() != target.shape()) throw ShapeError("ssim_loss requires equal shapes");
    const ad::Shape& s = pred.shape();
    if (s.size() != 5) throw ShapeError("ssim_loss requires [N,C,D,H,W] tensors");
    if (window < 1 || window % 2 == 0)
        throw ValidationError("ssim window must be odd and positive");
    if (s[2] < window || s[3] < window || s[4] < window)
        throw ShapeError("ssim_loss spatial dims must be >= window");
    if (s[1] != 1) throw ShapeError("ssim_loss expects single-channel tensors");

    auto tv = target.value();
    auto [lo, hi] = std::minmax_element(tv.begin(), tv.end());
    const double range = std::max(*hi - *lo, 1e-8);
    const double c1 = (0.01 * range) * (0.01 * range);
    const double c2 = (0.03 * range) * (0.03 * range);

    // Uniform window means via convolution with a constant kernel.
    const double inv = 1.0 / (static_cast<double>(window) * window * window);
    std::vector<double> kernel(static_cast<std::size_t>(window) * window * window, inv);
    ad::Tensor k = g.constant(ad::Shape{1, 1, window, window, window}, kernel);
    const std::array<int, 3> pad0{0, 0, 0};
    ad::Tensor none;

    auto box = [&](ad::Tensor t) { return g.conv3d(t, k, none, pad0); };

    ad::Tensor mu_x = box(pred);
    ad::Tensor mu_y = box(target);
    ad::Tensor mu_xx = g.mul(mu_x, mu_x);
    ad::Tensor mu_yy = g.mul(mu_y, mu_y);
    ad::Tensor mu_xy = g.mul(mu_x, mu_y);
    ad::Tensor var_x = g.sub(box(g.square(pred)), mu_xx);
    ad::Tensor var_y = g.sub(box(g.square(target)), mu_yy);
    ad::Tensor cov = g.sub(box(g.mul(pred, target)), mu_xy);

    ad::Tensor c1t = g.scalar(c1);
    ad::Tensor c2t = g.scalar(c2);
    ad::Tensor num = g.mul(g.add(g.scale(mu_xy, 2.0), c1t), g.add(g.scale(cov, 2.0), c2t));
    ad::Tensor den = g.mul(g.add(g.add(mu_xx, mu_yy), c1t), g.add(g.add(var_x, var_y), c2t));
    ad::Tensor ssim_map = g.div(num, den);
    return g.sub(g.scalar(1.0), g.mean(ssim_map));
}

PerceptualExtractor PerceptualExtractor::make(std::uint64_t seed) {
    PerceptualExtractor e;
    e.seed = seed;
    const int chans[kLayers + 1] = {1, 8, 16, 16};
    Rng rng(seed);
    for (int l = 0; l < kLayers; ++l) {
        ad::Shape ws{chans[l + 1], chans[l], 3, 3, 3};
        std::vector<double> w(ad::numel(ws));
        const double stddev = std::sqrt(2.0 / (static_cast<double>(chans[l]) * 27.0));
        for (double& x : w) x = stddev * rng.normal();
        e.shapes.push_back(ws);
        e.weights.push_back(std::move(w));
        e.shapes.push_back(ad::Shape{chans[l + 1]});
        e.weights.emplace_back(static_cast<std::size_t>(chans[l + 1]), 0.0);
    }
    return e;
}

ad::Tensor perceptual_loss(ad::Graph& g, ad::Tensor pred, ad::Tensor target,
                           const PerceptualExtractor& extractor,
                           std::array<double, 3> layer_weights) {
    if (pred.shape() != target.shape()) throw ShapeError("perceptual_loss requires equal shapes");
    const ad::Shape& s = pred.shape();
    if (s.size() != 5 || s[1] != 1)
        throw ShapeError("perceptual_loss expects [N,1,D,H,W] tensors");
    if (s[2] < 8 || s[3] < 8 || s[4] < 8)
        throw ValidationError("perceptual_loss input too small for 3 stride-2 stages "
                              "(needs >= 8 voxels per axis)");
    // Gradients flow to pred only.
    if (g.requires_grad(target.id))
        throw ValidationError("perceptual_loss target must not require gradients");

    const std::array<int, 3> pad1{1, 1, 1};
    std::array<ad::Tensor, PerceptualExtractor::kLayers * 2> params;
    for (std::size_t i = 0; i < extractor.weights.size(); ++i)
        params[i] = g.constant(extractor.shapes[i], extractor.weights[i]);

    ad::Tensor loss = g.scalar(0.0);
    ad::Tensor xp = pred, xt = target;
    for (int l = 0; l < PerceptualExtractor::kLayers; ++l) {
        xp = g.stride2_subsample(g.relu(g.conv3d(xp, params[2 * l], params[2 * l + 1], pad1)));
        xt = g.stride2_subsample(g.relu(g.conv3d(xt, params[2 * l], params[2 * l + 1], pad1)));
        ad::Tensor dp = g.channel_unit_normalize(xp);
        ad::Tensor dt = g.channel_unit_normalize(xt);
        ad::Tensor layer = g.mean(g.square(g.sub(dp, dt)));
        loss = g.add(loss, g.scale(layer, layer_weights[static_cast<std::size_t>(l)]));
    }
    return loss;
}

}  // namespace volsr::losses
