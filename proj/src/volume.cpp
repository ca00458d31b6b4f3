#include "volsr/volume.hpp"

#include <cmath>
#include <numbers>

#include "volsr/errors.hpp"

namespace volsr {

Volume::Volume(int nx_, int ny_, int nz_, double sx_, double sy_, double sz_)
    : nx(nx_), ny(ny_), nz(nz_), sx(sx_), sy(sy_), sz(sz_) {
    if (nx <= 0 || ny <= 0 || nz <= 0)
        throw ValidationError("volume dims must be positive");
    if (!(sx > 0.0) || !(sy > 0.0) || !(sz > 0.0))
        throw ValidationError("volume spacing must be strictly positive");
    data.assign(static_cast<std::size_t>(nx) * ny * nz, 0.0f);
}

void Volume::validate() const {
    if (nx <= 0 || ny <= 0 || nz <= 0)
        throw ValidationError("volume dims must be positive");
    if (!(sx > 0.0) || !(sy > 0.0) || !(sz > 0.0))
        throw ValidationError("volume spacing must be strictly positive");
    if (data.size() != static_cast<std::size_t>(nx) * ny * nz)
        throw ValidationError("volume data length does not match dims");
    for (float f : data)
        if (!std::isfinite(f)) throw ValidationError("volume contains non-finite intensities");
}

double volume_mean(const Volume& v) {
    double s = 0.0;
    for (float f : v.data) s += f;
    return s / static_cast<double>(v.data.size());
}

double volume_stddev(const Volume& v, double mean) {
    double s = 0.0;
    for (float f : v.data) {
        double d = static_cast<double>(f) - mean;
        s += d * d;
    }
    return std::sqrt(s / static_cast<double>(v.data.size()));
}

std::pair<Volume, ZScoreStats> zscore_normalize(const Volume& v) {
    v.validate();
    ZScoreStats stats;
    stats.mean = volume_mean(v);
    stats.stddev = volume_stddev(v, stats.mean);
    if (!(stats.stddev > 0.0))
        throw DegenerateInputError("cannot z-score a constant volume (stddev = 0)");
    Volume out = v;
    for (float& f : out.data)
        f = static_cast<float>((static_cast<double>(f) - stats.mean) / stats.stddev);
    return {std::move(out), stats};
}

Volume zscore_denormalize(const Volume& v, const ZScoreStats& stats) {
    if (!(stats.stddev > 0.0)) throw ValidationError("stats.stddev must be positive");
    Volume out = v;
    for (float& f : out.data)
        f = static_cast<float>(static_cast<double>(f) * stats.stddev + stats.mean);
    return out;
}

namespace {

inline double sample_trilinear(const Volume& v, double x, double y, double z) {
    // Zero fill outside [0, n-1] per axis.
    int x0 = static_cast<int>(std::floor(x));
    int y0 = static_cast<int>(std::floor(y));
    int z0 = static_cast<int>(std::floor(z));
    double fx = x - x0, fy = y - y0, fz = z - z0;
    double acc = 0.0;
    for (int dz = 0; dz <= 1; ++dz) {
        int zz = z0 + dz;
        if (zz < 0 || zz >= v.nz) continue;
        double wz = dz ? fz : 1.0 - fz;
        for (int dy = 0; dy <= 1; ++dy) {
            int yy = y0 + dy;
            if (yy < 0 || yy >= v.ny) continue;
            double wy = dy ? fy : 1.0 - fy;
            for (int dx = 0; dx <= 1; ++dx) {
                int xx = x0 + dx;
                if (xx < 0 || xx >= v.nx) continue;
                double wx = dx ? fx : 1.0 - fx;
                acc += wx * wy * wz * static_cast<double>(v.at(xx, yy, zz));
            }
        }
    }
    return acc;
}

}  // namespace

Volume trilinear_resample(const Volume& v, std::array<int, 3> target_dims,
                          double inplane_deg, double throughplane_deg) {
    v.validate();
    auto [tnx, tny, tnz] = target_dims;
    if (tnx <= 0 || tny <= 0 || tnz <= 0)
        throw ValidationError("resample target dims must be positive");
    if (!std::isfinite(inplane_deg) || !std::isfinite(throughplane_deg))
        throw ValidationError("rotation angles must be finite");

    Volume out(tnx, tny, tnz, v.sx * v.nx / tnx, v.sy * v.ny / tny, v.sz * v.nz / tnz);

    const double deg = std::numbers::pi / 180.0;
    const double ca = std::cos(inplane_deg * deg), sa = std::sin(inplane_deg * deg);
    const double cb = std::cos(throughplane_deg * deg), sb = std::sin(throughplane_deg * deg);
    const bool rotate = inplane_deg != 0.0 || throughplane_deg != 0.0;

    const double rx = static_cast<double>(v.nx) / tnx;
    const double ry = static_cast<double>(v.ny) / tny;
    const double rz = static_cast<double>(v.nz) / tnz;
    const double cx = 0.5 * (v.nx - 1), cy = 0.5 * (v.ny - 1), cz = 0.5 * (v.nz - 1);

    std::size_t o = 0;
    for (int k = 0; k < tnz; ++k) {
        double qz = (k + 0.5) * rz - 0.5;
        for (int j = 0; j < tny; ++j) {
            double qy = (j + 0.5) * ry - 0.5;
            for (int i = 0; i < tnx; ++i, ++o) {
                double qx = (i + 0.5) * rx - 0.5;
                double x = qx, y = qy, z = qz;
                if (rotate) {
                    // Pull-back: rotate the sampling point by Rz(a) then Rx(b)
                    // about the source volume center.
                    double ux = qx - cx, uy = qy - cy, uz = qz - cz;
                    double tx = ca * ux - sa * uy;
                    double ty = sa * ux + ca * uy;
                    double tz = uz;
                    double wy = cb * ty - sb * tz;
                    double wz = sb * ty + cb * tz;
                    x = tx + cx;
                    y = wy + cy;
                    z = wz + cz;
                }
                out.data[o] = static_cast<float>(sample_trilinear(v, x, y, z));
            }
        }
    }
    return out;
}

}  // namespace volsr
