#include "volsr/fourier.hpp"

#include <fftw3.h>

#include <cmath>
#include <mutex>
#include <numbers>

#include "volsr/errors.hpp"

namespace volsr::fourier {

namespace {

// FFTW planning is not thread-safe; execution is.
std::mutex& plan_mutex() {
    static std::mutex m;
    return m;
}

// Unnormalized c2c 3D FFT, x-fastest layout (x is FFTW's last dimension).
void fft3(const std::complex<double>* in, std::complex<double>* out, int nx, int ny, int nz,
          int sign) {
    fftw_plan plan;
    {
        std::lock_guard<std::mutex> lock(plan_mutex());
        plan = fftw_plan_dft_3d(nz, ny, nx,
                                reinterpret_cast<fftw_complex*>(const_cast<std::complex<double>*>(in)),
                                reinterpret_cast<fftw_complex*>(out), sign,
                                FFTW_ESTIMATE | FFTW_PRESERVE_INPUT);
    }
    fftw_execute(plan);
    {
        std::lock_guard<std::mutex> lock(plan_mutex());
        fftw_destroy_plan(plan);
    }
}

inline int centered_dc(int n) { return n / 2; }

// raw (DC at 0) index -> centered index
inline int raw_to_centered(int r, int n) { return (r + centered_dc(n)) % n; }
// centered index -> raw index
inline int centered_to_raw(int k, int n) { return (k + n - centered_dc(n)) % n; }

void validate_dims(int nx, int ny, int nz) {
    if (nx <= 0 || ny <= 0 || nz <= 0) throw ValidationError("dims must be positive");
}

}  // namespace

void KSpaceGrid::validate() const {
    validate_dims(kx, ky, kz);
    if (coeffs.size() != static_cast<std::size_t>(kx) * ky * kz)
        throw ValidationError("k-space coefficient count does not match dims");
}

VolumeD to_double(const Volume& v) {
    v.validate();
    VolumeD d{v.nx, v.ny, v.nz, v.sx, v.sy, v.sz, {}};
    d.data.assign(v.data.begin(), v.data.end());
    return d;
}

Volume to_volume(const VolumeD& d) {
    Volume v(d.nx, d.ny, d.nz, d.sx, d.sy, d.sz);
    for (std::size_t i = 0; i < d.data.size(); ++i) v.data[i] = static_cast<float>(d.data[i]);
    return v;
}

KSpaceGrid dft3_forward_d(const VolumeD& v) {
    validate_dims(v.nx, v.ny, v.nz);
    const std::size_t n = v.data.size();
    std::vector<std::complex<double>> in(n), raw(n);
    for (std::size_t i = 0; i < n; ++i) in[i] = {v.data[i], 0.0};
    fft3(in.data(), raw.data(), v.nx, v.ny, v.nz, FFTW_FORWARD);

    KSpaceGrid k;
    k.kx = v.nx;
    k.ky = v.ny;
    k.kz = v.nz;
    k.coeffs.resize(n);
    std::size_t r = 0;
    for (int z = 0; z < v.nz; ++z) {
        int cz = raw_to_centered(z, v.nz);
        for (int y = 0; y < v.ny; ++y) {
            int cy = raw_to_centered(y, v.ny);
            for (int x = 0; x < v.nx; ++x, ++r)
                k.coeffs[k.index(raw_to_centered(x, v.nx), cy, cz)] = raw[r];
        }
    }
    return k;
}

KSpaceGrid dft3_forward(const Volume& v) { return dft3_forward_d(to_double(v)); }

VolumeD dft3_inverse_d(const KSpaceGrid& k, double sx, double sy, double sz) {
    k.validate();
    const std::size_t n = k.coeffs.size();
    std::vector<std::complex<double>> raw(n), out(n);
    std::size_t r = 0;
    for (int z = 0; z < k.kz; ++z) {
        int cz = raw_to_centered(z, k.kz);
        for (int y = 0; y < k.ky; ++y) {
            int cy = raw_to_centered(y, k.ky);
            for (int x = 0; x < k.kx; ++x, ++r) raw[r] = k.coeffs[k.index(raw_to_centered(x, k.kx), cy, cz)];
        }
    }
    fft3(raw.data(), out.data(), k.kx, k.ky, k.kz, FFTW_BACKWARD);

    const double norm = 1.0 / static_cast<double>(n);
    double max_abs = 0.0, max_imag = 0.0;
    for (auto& c : out) {
        max_abs = std::max(max_abs, std::abs(c));
        max_imag = std::max(max_imag, std::abs(c.imag()));
    }
    if (max_abs > 0.0 && max_imag > 1e-6 * max_abs)
        throw ConsistencyError("inverse DFT of a non-Hermitian grid where a real image was expected "
                               "(imaginary residue " +
                               std::to_string(max_imag / max_abs) + " relative)");

    VolumeD v{k.kx, k.ky, k.kz, sx, sy, sz, {}};
    v.data.resize(n);
    for (std::size_t i = 0; i < n; ++i) v.data[i] = out[i].real() * norm;
    return v;
}

Volume dft3_inverse(const KSpaceGrid& k, double sx, double sy, double sz) {
    return to_volume(dft3_inverse_d(k, sx, sy, sz));
}

VolumeD kspace_truncate_downsample_d(const VolumeD& v, int factor) {
    if (factor != 2) throw ValidationError("only factor-2 downsampling is supported");
    validate_dims(v.nx, v.ny, v.nz);
    if (v.nx % 2 || v.ny % 2 || v.nz % 2)
        throw ValidationError("factor-2 k-space truncation requires even dims");

    KSpaceGrid k = dft3_forward_d(v);
    const int mx = v.nx / 2, my = v.ny / 2, mz = v.nz / 2;
    KSpaceGrid lr;
    lr.kx = mx;
    lr.ky = my;
    lr.kz = mz;
    lr.coeffs.assign(static_cast<std::size_t>(mx) * my * mz, {0.0, 0.0});

    // Retained band per axis: the frequencies representable on the half-size
    // grid, plus (for even m) the +m/2 boundary, which aliases onto -m/2.
    auto lr_bin = [](int f, int m) {
        if (m % 2 == 0 && f == m / 2) f = -m / 2;
        return f + m / 2;
    };
    const int cx = centered_dc(v.nx), cy = centered_dc(v.ny), cz = centered_dc(v.nz);
    for (int fz = -mz / 2; fz <= mz / 2; ++fz) {
        int jz = lr_bin(fz, mz);
        for (int fy = -my / 2; fy <= my / 2; ++fy) {
            int jy = lr_bin(fy, my);
            for (int fx = -mx / 2; fx <= mx / 2; ++fx) {
                lr.coeffs[lr.index(lr_bin(fx, mx), jy, jz)] +=
                    k.coeffs[k.index(fx + cx, fy + cy, fz + cz)];
            }
        }
    }

    VolumeD out = dft3_inverse_d(lr, v.sx * 2.0, v.sy * 2.0, v.sz * 2.0);
    const double scale = 1.0 / 8.0;  // keeps the volume mean unchanged
    for (double& d : out.data) d *= scale;
    return out;
}

Volume kspace_truncate_downsample(const Volume& v, int factor) {
    return to_volume(kspace_truncate_downsample_d(to_double(v), factor));
}

VolumeD kspace_zerofill_upsample_d(const VolumeD& v, int factor, int edge_taper_width) {
    if (factor != 2) throw ValidationError("only factor-2 upsampling is supported");
    validate_dims(v.nx, v.ny, v.nz);
    if (edge_taper_width < 0) throw ValidationError("edge taper width must be >= 0");
    const int w = edge_taper_width;
    if (w > 0 && (4 * w > v.nx || 4 * w > v.ny || 4 * w > v.nz))
        throw ValidationError("edge taper width may not exceed a quarter of any dimension");

    KSpaceGrid k = dft3_forward_d(v);

    if (w > 0) {
        // Distance from the band edge in |frequency| terms keeps the taper
        // conjugate-symmetric, so the result stays exactly Hermitian.
        auto taper = [w](int j, int m) {
            const int f = j - m / 2;
            const int e = m / 2 - std::abs(f);
            if (e >= w) return 1.0;
            return 0.5 * (1.0 - std::cos(std::numbers::pi * (e + 0.5) / w));
        };
        std::size_t i = 0;
        for (int z = 0; z < k.kz; ++z) {
            double tz = taper(z, k.kz);
            for (int y = 0; y < k.ky; ++y) {
                double tyz = tz * taper(y, k.ky);
                for (int x = 0; x < k.kx; ++x, ++i) k.coeffs[i] *= tyz * taper(x, k.kx);
            }
        }
    }

    const int nx = 2 * v.nx, ny = 2 * v.ny, nz = 2 * v.nz;
    KSpaceGrid hr;
    hr.kx = nx;
    hr.ky = ny;
    hr.kz = nz;
    hr.coeffs.assign(static_cast<std::size_t>(nx) * ny * nz, {0.0, 0.0});

    // Interior bins embed at the same frequency; the -m/2 boundary bin is a
    // shared +/- Nyquist in the source grid and splits evenly across the two
    // now-distinct positions (identical real part, exactly Hermitian result).
    struct Dest {
        int idx[2];
        double weight;
        int count;
    };
    auto destinations = [](int j, int m, int n) {
        Dest d{};
        int f = j - m / 2;
        if (m % 2 == 0 && f == -m / 2) {
            d.idx[0] = -m / 2 + n / 2;
            d.idx[1] = m / 2 + n / 2;
            d.weight = 0.5;
            d.count = 2;
        } else {
            d.idx[0] = f + n / 2;
            d.weight = 1.0;
            d.count = 1;
        }
        return d;
    };

    const double scale = 8.0;  // keeps the volume mean unchanged
    std::size_t i = 0;
    for (int z = 0; z < k.kz; ++z) {
        Dest dz = destinations(z, k.kz, nz);
        for (int y = 0; y < k.ky; ++y) {
            Dest dy = destinations(y, k.ky, ny);
            for (int x = 0; x < k.kx; ++x, ++i) {
                Dest dx = destinations(x, k.kx, nx);
                std::complex<double> c = k.coeffs[i] * scale;
                for (int a = 0; a < dz.count; ++a)
                    for (int b = 0; b < dy.count; ++b)
                        for (int g = 0; g < dx.count; ++g)
                            hr.coeffs[hr.index(dx.idx[g], dy.idx[b], dz.idx[a])] +=
                                c * (dz.weight * dy.weight * dx.weight);
            }
        }
    }

    return dft3_inverse_d(hr, v.sx * 0.5, v.sy * 0.5, v.sz * 0.5);
}

Volume kspace_zerofill_upsample(const Volume& v, int factor, int edge_taper_width) {
    return to_volume(kspace_zerofill_upsample_d(to_double(v), factor, edge_taper_width));
}

}  // namespace volsr::fourier
