#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace volsr {

/// Real-valued 3D scalar grid with voxel spacing. Data is 32-bit float,
/// x-fastest layout: index = x + nx*(y + ny*z). Immutable by convention
/// after construction; all operations return new volumes.
struct Volume {
    int nx = 0, ny = 0, nz = 0;
    double sx = 1.0, sy = 1.0, sz = 1.0;  // spacing in millimeters
    std::vector<float> data;

    Volume() = default;
    Volume(int nx_, int ny_, int nz_, double sx_ = 1.0, double sy_ = 1.0, double sz_ = 1.0);

    std::size_t size() const { return data.size(); }
    std::size_t index(int x, int y, int z) const {
        return static_cast<std::size_t>(x) +
               static_cast<std::size_t>(nx) *
                   (static_cast<std::size_t>(y) + static_cast<std::size_t>(ny) * static_cast<std::size_t>(z));
    }
    float at(int x, int y, int z) const { return data[index(x, y, z)]; }
    float& at(int x, int y, int z) { return data[index(x, y, z)]; }

    std::array<int, 3> dims() const { return {nx, ny, nz}; }

    /// Throws ValidationError if dims/spacing/data violate the invariants
    /// (positive dims and spacing, matching data length, finite values).
    void validate() const;
};

/// Per-volume normalization statistics. stddev is the population standard
/// deviation (divide by N) and must be strictly positive.
struct ZScoreStats {
    double mean = 0.0;
    double stddev = 1.0;
};

double volume_mean(const Volume& v);
double volume_stddev(const Volume& v, double mean);  // population

/// Normalizes to zero mean / unit standard deviation (population stats).
/// Throws DegenerateInputError for constant volumes.
std::pair<Volume, ZScoreStats> zscore_normalize(const Volume& v);

/// Inverse of zscore_normalize given the stats it returned.
Volume zscore_denormalize(const Volume& v, const ZScoreStats& stats);

/// Trilinear resampling with an optional rigid rotation about the volume
/// center. Target voxel centers map into the continuous source index space
/// as i_src = (i_tgt + 0.5) * (n_src / n_tgt) - 0.5 per axis, after which the
/// rotation is applied about the source center. In-plane rotation is about
/// the z axis, through-plane about the x axis; angles are degrees,
/// counterclockwise positive. Out-of-bounds samples fill with 0. Output
/// spacing preserves the physical extent (spacing * n_src / n_tgt).
Volume trilinear_resample(const Volume& v, std::array<int, 3> target_dims,
                          double inplane_deg = 0.0, double throughplane_deg = 0.0);

}  // namespace volsr
