#pragma once

#include <complex>
#include <vector>

#include "volsr/volume.hpp"

namespace volsr::fourier {

/// Complex 3D spectrum, x-fastest layout, centered-DC convention: the DC
/// coefficient sits at index (kx/2, ky/2, kz/2) (floor division).
struct KSpaceGrid {
    int kx = 0, ky = 0, kz = 0;
    std::vector<std::complex<double>> coeffs;

    std::size_t size() const { return coeffs.size(); }
    std::size_t index(int x, int y, int z) const {
        return static_cast<std::size_t>(x) +
               static_cast<std::size_t>(kx) *
                   (static_cast<std::size_t>(y) + static_cast<std::size_t>(ky) * static_cast<std::size_t>(z));
    }
    void validate() const;
};

/// Double-precision volume used at the transform boundaries so results can
/// be compared against oracles beyond float32 resolution.
struct VolumeD {
    int nx = 0, ny = 0, nz = 0;
    double sx = 1.0, sy = 1.0, sz = 1.0;
    std::vector<double> data;
};

VolumeD to_double(const Volume& v);
Volume to_volume(const VolumeD& v);  // rounds to float32

/// Unnormalized forward DFT with the DC coefficient shifted to the centered
/// index. DC equals the sum of all voxel intensities.
KSpaceGrid dft3_forward(const Volume& v);
KSpaceGrid dft3_forward_d(const VolumeD& v);

/// 1/(kx*ky*kz)-normalized inverse. The grid is expected to be Hermitian
/// (a real image's spectrum); an imaginary residue above 1e-6 relative to
/// the largest output magnitude raises ConsistencyError. The residue is
/// discarded from the returned volume.
VolumeD dft3_inverse_d(const KSpaceGrid& k, double sx = 1.0, double sy = 1.0, double sz = 1.0);
Volume dft3_inverse(const KSpaceGrid& k, double sx = 1.0, double sy = 1.0, double sz = 1.0);

/// Factor-2 degradation: centered crop of k-space retaining the band
/// [c - n/4, c + n/4) per axis (c = n/2). Content at the dropped +n/4
/// boundary frequency aliases onto -n/4 (the retained bin), which keeps a
/// real input's cropped spectrum exactly Hermitian and makes
/// truncate(zerofill(truncate(v))) == truncate(v) an identity.
/// Output dims are halved, spacing doubled, and intensities rescaled so the
/// volume mean is preserved. All dims must be even.
VolumeD kspace_truncate_downsample_d(const VolumeD& v, int factor = 2);
Volume kspace_truncate_downsample(const Volume& v, int factor = 2);

/// Factor-2 zero-filling upsampler: the input spectrum is embedded centered
/// in the doubled grid (boundary-frequency bins split evenly across the, now
/// distinct, +/- Nyquist positions, which changes nothing about the real
/// part), zero elsewhere, rescaled by 8 so the mean is preserved. Output
/// dims are doubled, spacing halved.
/// edge_taper_width > 0 applies a raised-cosine taper over the outermost
/// edge_taper_width retained k-space samples per axis before embedding;
/// 0 (the default) applies no filter. The width may not exceed a quarter of
/// any input dimension.
VolumeD kspace_zerofill_upsample_d(const VolumeD& v, int factor = 2, int edge_taper_width = 0);
Volume kspace_zerofill_upsample(const Volume& v, int factor = 2, int edge_taper_width = 0);

}  // namespace volsr::fourier
