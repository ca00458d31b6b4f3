#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "volsr/volume.hpp"

namespace volsr::phantom {

/// Synthetic multi-echo knee-scale phantom recipe: smooth background, soft
/// ellipsoidal tissues with per-echo exponential contrast decay, thin
/// high-intensity shells (hard high-frequency structure), band-limited
/// texture, optional Rician noise.
struct PhantomSpec {
    std::array<int, 3> dims{96, 96, 32};
    std::array<double, 3> spacing{0.802, 0.802, 2.5};
    int echoes = 3;
    int min_ellipsoids = 5;
    int max_ellipsoids = 15;
    double texture_bandwidth = 0.4;  // fraction of Nyquist; spectrum is zero above it
    double noise_sigma = 0.01;       // Rician sigma as a fraction of the intensity range

    void validate() const;
};

/// One subject's echo volumes. Geometry (ellipsoid masks, shells, texture
/// field) is identical across echoes; intensities differ by per-tissue
/// exponential scalings. Bit-deterministic per (spec, seed).
std::vector<Volume> generate_subject(const PhantomSpec& spec, std::uint64_t subject_seed);

struct DatasetEntry {
    Volume volume;
    std::string subject;
    int echo = 0;
};

struct Dataset {
    PhantomSpec spec;
    std::uint64_t master_seed = 0;
    int subject_count = 0;
    std::vector<std::uint64_t> subject_seeds;
    std::vector<DatasetEntry> entries;  // subject-major, echo-minor order
};

/// subject_count subjects x spec.echoes volumes; per-subject seeds derived
/// from the master seed.
Dataset generate_dataset(const PhantomSpec& spec, int subject_count, std::uint64_t master_seed);

/// Writes subject{S}_echo{E}.vol files plus dataset_manifest.json.
void write_dataset(const std::filesystem::path& dir, const Dataset& dataset);

struct ManifestEntry {
    std::string subject;
    int echo = 0;
    std::string file;
};

struct DatasetManifest {
    PhantomSpec spec;
    std::uint64_t master_seed = 0;
    std::vector<std::string> subjects;
    int echoes = 0;
    std::vector<ManifestEntry> entries;
};

DatasetManifest read_dataset_manifest(const std::filesystem::path& dir);

}  // namespace volsr::phantom
