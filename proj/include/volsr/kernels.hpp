#pragma once

#include <cstddef>

namespace volsr::kernels {

/// Stride-1 3D cross-correlation geometry. Input is [n, ci, d, h, w]
/// (w fastest), weights [co, ci, kd, kh, kw], optional bias [co].
struct Conv3dDims {
    int n = 1, ci = 1, d = 1, h = 1, w = 1;
    int co = 1, kd = 1, kh = 1, kw = 1;
    int pd = 0, ph = 0, pw = 0;

    int od() const { return d + 2 * pd - kd + 1; }
    int oh() const { return h + 2 * ph - kh + 1; }
    int ow() const { return w + 2 * pw - kw + 1; }
    std::size_t in_count() const { return static_cast<std::size_t>(n) * ci * d * h * w; }
    std::size_t out_count() const { return static_cast<std::size_t>(n) * co * od() * oh() * ow(); }
    std::size_t weight_count() const { return static_cast<std::size_t>(co) * ci * kd * kh * kw; }
    bool valid() const {
        return n > 0 && ci > 0 && d > 0 && h > 0 && w > 0 && co > 0 && kd > 0 && kh > 0 &&
               kw > 0 && pd >= 0 && ph >= 0 && pw >= 0 && od() > 0 && oh() > 0 && ow() > 0;
    }
};

// out = conv(in, weight) + bias; bias may be null.
void conv3d_forward(double* out, const double* in, const double* weight, const double* bias,
                    const Conv3dDims& c);

// Accumulates into gin (caller zeroes it).
void conv3d_backward_input(double* gin, const double* gout, const double* weight,
                           const Conv3dDims& c);

// Accumulates into gweight / gbias (caller zeroes them).
void conv3d_backward_weight(double* gweight, const double* gout, const double* in,
                            const Conv3dDims& c);
void conv3d_backward_bias(double* gbias, const double* gout, const Conv3dDims& c);

}  // namespace volsr::kernels
