#include "volsr/kernels.hpp"

#include <algorithm>
#include <vector>

namespace volsr::kernels {

// The x-innermost loops below run over contiguous rows so the compiler can
// vectorize them; all accumulation orders are fixed for determinism. The
// kw==3/pw==1 case (every resolution-preserving conv in the models) gets a
// fused three-tap row kernel to cut accumulator traffic.

namespace {

inline void row_taps_generic(double* __restrict acc, const double* __restrict row, const double* wrow, int kw, int pw,
                             int ow, int w_src) {
    for (int dx = 0; dx < kw; ++dx) {
        const double wv = wrow[dx];
        const int off = dx - pw;
        const int x0 = std::max(0, -off);
        const int x1 = std::min(ow, w_src - off);
        const double* r = row + off;
        for (int x = x0; x < x1; ++x) acc[x] += wv * r[x];
    }
}

// acc[x] += w0*row[x-1] + w1*row[x] + w2*row[x+1], zero-padded ends.
inline void row_taps3(double* __restrict acc, const double* __restrict row, const double* wrow, int ow) {
    const double w0 = wrow[0], w1 = wrow[1], w2 = wrow[2];
    if (ow == 1) {
        acc[0] += w1 * row[0];
        return;
    }
    acc[0] += w1 * row[0] + w2 * row[1];
    for (int x = 1; x < ow - 1; ++x) acc[x] += w0 * row[x - 1] + w1 * row[x] + w2 * row[x + 1];
    acc[ow - 1] += w0 * row[ow - 2] + w1 * row[ow - 1];
}

// Same taps applied to four output-channel accumulators sharing one source
// row pass.
inline void row_taps3_co4(double* __restrict a0, double* __restrict a1, double* __restrict a2,
                          double* __restrict a3, const double* __restrict row, const double* w0,
                          const double* w1, const double* w2, const double* w3, int ow) {
    if (ow == 1) {
        a0[0] += w0[1] * row[0];
        a1[0] += w1[1] * row[0];
        a2[0] += w2[1] * row[0];
        a3[0] += w3[1] * row[0];
        return;
    }
    a0[0] += w0[1] * row[0] + w0[2] * row[1];
    a1[0] += w1[1] * row[0] + w1[2] * row[1];
    a2[0] += w2[1] * row[0] + w2[2] * row[1];
    a3[0] += w3[1] * row[0] + w3[2] * row[1];
    for (int x = 1; x < ow - 1; ++x) {
        const double rm = row[x - 1], r0 = row[x], rp = row[x + 1];
        a0[x] += w0[0] * rm + w0[1] * r0 + w0[2] * rp;
        a1[x] += w1[0] * rm + w1[1] * r0 + w1[2] * rp;
        a2[x] += w2[0] * rm + w2[1] * r0 + w2[2] * rp;
        a3[x] += w3[0] * rm + w3[1] * r0 + w3[2] * rp;
    }
    const double rm = row[ow - 2], r0 = row[ow - 1];
    a0[ow - 1] += w0[0] * rm + w0[1] * r0;
    a1[ow - 1] += w1[0] * rm + w1[1] * r0;
    a2[ow - 1] += w2[0] * rm + w2[1] * r0;
    a3[ow - 1] += w3[0] * rm + w3[1] * r0;
}

}  // namespace

void conv3d_forward(double* out, const double* in, const double* weight, const double* bias,
                    const Conv3dDims& c) {
    const int od = c.od(), oh = c.oh(), ow = c.ow();
    const bool fused3 = c.kw == 3 && c.pw == 1;
    const std::size_t in_chan = static_cast<std::size_t>(c.d) * c.h * c.w;
    const std::size_t in_sample = in_chan * c.ci;
    const std::size_t w_chan = static_cast<std::size_t>(c.kd) * c.kh * c.kw;
    const std::size_t w_co_stride = w_chan * c.ci;
    const std::size_t out_chan = static_cast<std::size_t>(od) * oh * ow;
    std::vector<double> acc(static_cast<std::size_t>(ow) * 4);

    for (int n = 0; n < c.n; ++n) {
        const double* in_n = in + static_cast<std::size_t>(n) * in_sample;
        double* out_n = out + static_cast<std::size_t>(n) * c.co * out_chan;

        int co = 0;
        // Four output channels per pass share every source-row read.
        for (; fused3 && co + 4 <= c.co; co += 4) {
            const double* w_co = weight + co * w_co_stride;
            for (int z = 0; z < od; ++z) {
                for (int y = 0; y < oh; ++y) {
                    for (int k = 0; k < 4; ++k)
                        std::fill(acc.begin() + k * ow, acc.begin() + (k + 1) * ow,
                                  bias ? bias[co + k] : 0.0);
                    for (int ci = 0; ci < c.ci; ++ci) {
                        const double* in_c = in_n + static_cast<std::size_t>(ci) * in_chan;
                        const double* w_c = w_co + ci * w_chan;
                        for (int dz = 0; dz < c.kd; ++dz) {
                            const int sz = z + dz - c.pd;
                            if (sz < 0 || sz >= c.d) continue;
                            for (int dy = 0; dy < c.kh; ++dy) {
                                const int sy = y + dy - c.ph;
                                if (sy < 0 || sy >= c.h) continue;
                                const double* row =
                                    in_c + (static_cast<std::size_t>(sz) * c.h + sy) * c.w;
                                const std::size_t wo =
                                    (static_cast<std::size_t>(dz) * c.kh + dy) * c.kw;
                                row_taps3_co4(acc.data(), acc.data() + ow, acc.data() + 2 * ow,
                                              acc.data() + 3 * ow, row, w_c + wo,
                                              w_c + w_co_stride + wo, w_c + 2 * w_co_stride + wo,
                                              w_c + 3 * w_co_stride + wo, ow);
                            }
                        }
                    }
                    for (int k = 0; k < 4; ++k)
                        std::copy(acc.begin() + k * ow, acc.begin() + (k + 1) * ow,
                                  out_n + (co + k) * out_chan +
                                      (static_cast<std::size_t>(z) * oh + y) * ow);
                }
            }
        }

        for (; co < c.co; ++co) {
            double* out_co = out_n + co * out_chan;
            const double* w_co = weight + co * w_co_stride;
            for (int z = 0; z < od; ++z) {
                for (int y = 0; y < oh; ++y) {
                    std::fill(acc.begin(), acc.begin() + ow, bias ? bias[co] : 0.0);
                    for (int ci = 0; ci < c.ci; ++ci) {
                        const double* in_c = in_n + static_cast<std::size_t>(ci) * in_chan;
                        const double* w_c = w_co + ci * w_chan;
                        for (int dz = 0; dz < c.kd; ++dz) {
                            const int sz = z + dz - c.pd;
                            if (sz < 0 || sz >= c.d) continue;
                            for (int dy = 0; dy < c.kh; ++dy) {
                                const int sy = y + dy - c.ph;
                                if (sy < 0 || sy >= c.h) continue;
                                const double* row =
                                    in_c + (static_cast<std::size_t>(sz) * c.h + sy) * c.w;
                                const double* wrow =
                                    w_c + (static_cast<std::size_t>(dz) * c.kh + dy) * c.kw;
                                if (fused3)
                                    row_taps3(acc.data(), row, wrow, ow);
                                else
                                    row_taps_generic(acc.data(), row, wrow, c.kw, c.pw, ow, c.w);
                            }
                        }
                    }
                    double* orow = out_co + (static_cast<std::size_t>(z) * oh + y) * ow;
                    std::copy(acc.begin(), acc.begin() + ow, orow);
                }
            }
        }
    }
}

namespace {

// gin[s] += w0*g[s+1] + w1*g[s] + w2*g[s-1] over the valid ranges: the
// adjoint of row_taps3.
inline void scatter_taps3(double* __restrict gin_row, const double* __restrict grow, const double* wrow, int ow) {
    const double w0 = wrow[0], w1 = wrow[1], w2 = wrow[2];
    if (ow == 1) {
        gin_row[0] += w1 * grow[0];
        return;
    }
    gin_row[0] += w1 * grow[0] + w0 * grow[1];
    for (int s = 1; s < ow - 1; ++s)
        gin_row[s] += w0 * grow[s + 1] + w1 * grow[s] + w2 * grow[s - 1];
    gin_row[ow - 1] += w1 * grow[ow - 1] + w2 * grow[ow - 2];
}

inline void scatter_taps_generic(double* __restrict gin_row, const double* __restrict grow, const double* wrow, int kw,
                                 int pw, int ow, int w_src) {
    for (int dx = 0; dx < kw; ++dx) {
        const double wv = wrow[dx];
        const int off = dx - pw;
        const int x0 = std::max(0, -off);
        const int x1 = std::min(ow, w_src - off);
        double* t = gin_row + off;
        for (int x = x0; x < x1; ++x) t[x] += wv * grow[x];
    }
}

}  // namespace

void conv3d_backward_input(double* gin, const double* gout, const double* weight,
                           const Conv3dDims& c) {
    const int od = c.od(), oh = c.oh(), ow = c.ow();
    const bool fused3 = c.kw == 3 && c.pw == 1;
    const std::size_t in_chan = static_cast<std::size_t>(c.d) * c.h * c.w;
    const std::size_t in_sample = in_chan * c.ci;

    for (int n = 0; n < c.n; ++n) {
        double* gin_n = gin + static_cast<std::size_t>(n) * in_sample;
        for (int co = 0; co < c.co; ++co) {
            const double* gout_co = gout + ((static_cast<std::size_t>(n) * c.co + co) *
                                            static_cast<std::size_t>(od) * oh * ow);
            const double* w_co = weight + static_cast<std::size_t>(co) * c.ci * c.kd * c.kh * c.kw;
            for (int z = 0; z < od; ++z) {
                for (int y = 0; y < oh; ++y) {
                    const double* grow = gout_co + (static_cast<std::size_t>(z) * oh + y) * ow;
                    for (int ci = 0; ci < c.ci; ++ci) {
                        double* gin_c = gin_n + static_cast<std::size_t>(ci) * in_chan;
                        const double* w_c = w_co + static_cast<std::size_t>(ci) * c.kd * c.kh * c.kw;
                        for (int dz = 0; dz < c.kd; ++dz) {
                            const int sz = z + dz - c.pd;
                            if (sz < 0 || sz >= c.d) continue;
                            for (int dy = 0; dy < c.kh; ++dy) {
                                const int sy = y + dy - c.ph;
                                if (sy < 0 || sy >= c.h) continue;
                                double* grow_in =
                                    gin_c + (static_cast<std::size_t>(sz) * c.h + sy) * c.w;
                                const double* wrow =
                                    w_c + (static_cast<std::size_t>(dz) * c.kh + dy) * c.kw;
                                if (fused3)
                                    scatter_taps3(grow_in, grow, wrow, ow);
                                else
                                    scatter_taps_generic(grow_in, grow, wrow, c.kw, c.pw, ow, c.w);
                            }
                        }
                    }
                }
            }
        }
    }
}

namespace {

// Three shifted dot products sharing one pass: s[dx] += sum_x grow[x] *
// row[x+dx-1]. Explicit four-lane partial sums fix the accumulation order
// while still vectorizing without reassociation.
inline void dots_taps3(double* gwrow, const double* __restrict grow, const double* __restrict row, int ow) {
    double s0 = 0.0, s1 = 0.0, s2 = 0.0;
    if (ow == 1) {
        s1 = grow[0] * row[0];
    } else {
        s1 += grow[0] * row[0];
        s2 += grow[0] * row[1];
        const int x1 = ow - 1;
        double p0[4] = {0, 0, 0, 0}, p1[4] = {0, 0, 0, 0}, p2[4] = {0, 0, 0, 0};
        int x = 1;
        for (; x + 4 <= x1; x += 4) {
            const double g0 = grow[x], g1 = grow[x + 1], g2 = grow[x + 2], g3 = grow[x + 3];
            p0[0] += g0 * row[x - 1];
            p0[1] += g1 * row[x];
            p0[2] += g2 * row[x + 1];
            p0[3] += g3 * row[x + 2];
            p1[0] += g0 * row[x];
            p1[1] += g1 * row[x + 1];
            p1[2] += g2 * row[x + 2];
            p1[3] += g3 * row[x + 3];
            p2[0] += g0 * row[x + 1];
            p2[1] += g1 * row[x + 2];
            p2[2] += g2 * row[x + 3];
            p2[3] += g3 * row[x + 4];
        }
        for (; x < x1; ++x) {
            const double g = grow[x];
            s0 += g * row[x - 1];
            s1 += g * row[x];
            s2 += g * row[x + 1];
        }
        s0 += (p0[0] + p0[1]) + (p0[2] + p0[3]);
        s1 += (p1[0] + p1[1]) + (p1[2] + p1[3]);
        s2 += (p2[0] + p2[1]) + (p2[2] + p2[3]);
        const double g = grow[ow - 1];
        s0 += g * row[ow - 2];
        s1 += g * row[ow - 1];
    }
    gwrow[0] += s0;
    gwrow[1] += s1;
    gwrow[2] += s2;
}

inline void dots_taps_generic(double* gwrow, const double* __restrict grow, const double* __restrict row, int kw, int pw,
                              int ow, int w_src) {
    for (int dx = 0; dx < kw; ++dx) {
        const int off = dx - pw;
        const int x0 = std::max(0, -off);
        const int x1 = std::min(ow, w_src - off);
        const double* r = row + off;
        double s = 0.0;
        for (int x = x0; x < x1; ++x) s += grow[x] * r[x];
        gwrow[dx] += s;
    }
}

}  // namespace

void conv3d_backward_weight(double* gweight, const double* gout, const double* in,
                            const Conv3dDims& c) {
    const int od = c.od(), oh = c.oh(), ow = c.ow();
    const bool fused3 = c.kw == 3 && c.pw == 1;
    const std::size_t in_chan = static_cast<std::size_t>(c.d) * c.h * c.w;
    const std::size_t in_sample = in_chan * c.ci;

    for (int n = 0; n < c.n; ++n) {
        const double* in_n = in + static_cast<std::size_t>(n) * in_sample;
        for (int co = 0; co < c.co; ++co) {
            const double* gout_co = gout + ((static_cast<std::size_t>(n) * c.co + co) *
                                            static_cast<std::size_t>(od) * oh * ow);
            double* gw_co = gweight + static_cast<std::size_t>(co) * c.ci * c.kd * c.kh * c.kw;
            for (int z = 0; z < od; ++z) {
                for (int y = 0; y < oh; ++y) {
                    const double* grow = gout_co + (static_cast<std::size_t>(z) * oh + y) * ow;
                    for (int ci = 0; ci < c.ci; ++ci) {
                        const double* in_c = in_n + static_cast<std::size_t>(ci) * in_chan;
                        double* gw_c = gw_co + static_cast<std::size_t>(ci) * c.kd * c.kh * c.kw;
                        for (int dz = 0; dz < c.kd; ++dz) {
                            const int sz = z + dz - c.pd;
                            if (sz < 0 || sz >= c.d) continue;
                            for (int dy = 0; dy < c.kh; ++dy) {
                                const int sy = y + dy - c.ph;
                                if (sy < 0 || sy >= c.h) continue;
                                const double* row =
                                    in_c + (static_cast<std::size_t>(sz) * c.h + sy) * c.w;
                                double* gwrow =
                                    gw_c + (static_cast<std::size_t>(dz) * c.kh + dy) * c.kw;
                                if (fused3)
                                    dots_taps3(gwrow, grow, row, ow);
                                else
                                    dots_taps_generic(gwrow, grow, row, c.kw, c.pw, ow, c.w);
                            }
                        }
                    }
                }
            }
        }
    }
}

void conv3d_backward_bias(double* gbias, const double* gout, const Conv3dDims& c) {
    const std::size_t spatial = static_cast<std::size_t>(c.od()) * c.oh() * c.ow();
    for (int n = 0; n < c.n; ++n)
        for (int co = 0; co < c.co; ++co) {
            const double* g = gout + (static_cast<std::size_t>(n) * c.co + co) * spatial;
            double s = 0.0;
            for (std::size_t i = 0; i < spatial; ++i) s += g[i];
            gbias[co] += s;
        }
}

}  // namespace volsr::kernels
