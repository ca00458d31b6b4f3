#include "volsr/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "volsr/errors.hpp"
#include "volsr/fourier.hpp"
#include "volsr/rng.hpp"
#include "volsr/vol_io.hpp"

namespace volsr::phantom {

void PhantomSpec::validate() const {
    if (dims[0] <= 0 || dims[1] <= 0 || dims[2] <= 0)
        throw ValidationError("phantom dims must be positive");
    if (dims[0] % 2 || dims[1] % 2 || dims[2] % 2)
        throw ValidationError("phantom dims must be even (factor-2 degradation)");
    if (spacing[0] <= 0.0 || spacing[1] <= 0.0 || spacing[2] <= 0.0)
        throw ValidationError("phantom spacing must be positive");
    if (echoes < 1) throw ValidationError("echo count must be >= 1");
    if (min_ellipsoids < 1 || max_ellipsoids < min_ellipsoids)
        throw ValidationError("invalid ellipsoid count range");
    if (texture_bandwidth < 0.0 || texture_bandwidth > 1.0)
        throw ValidationError("texture bandwidth must lie in [0, 1]");
    if (noise_sigma < 0.0) throw ValidationError("noise sigma must be >= 0");
}

namespace {

struct Ellipsoid {
    double cx, cy, cz;    // center, voxels
    double ax, ay, az;    // semi-axes, voxels
    double cos_t, sin_t;  // in-plane orientation
    double intensity;
    double decay;      // per-echo exponential rate
    double edge;       // normalized transition half-width
    bool shell;        // thin surface shell instead of filled interior
    double shell_voxels;  // shell thickness (Gaussian sigma, voxels)
};

// Normalized elliptical radius of voxel (x,y,z).
inline double radius(const Ellipsoid& e, double x, double y, double z) {
    const double dx = x - e.cx, dy = y - e.cy, dz = z - e.cz;
    const double rx = e.cos_t * dx + e.sin_t * dy;
    const double ry = -e.sin_t * dx + e.cos_t * dy;
    const double qx = rx / e.ax, qy = ry / e.ay, qz = dz / e.az;
    return std::sqrt(qx * qx + qy * qy + qz * qz);
}

inline double smoothstep01(double t) {
    t = std::clamp(t, 0.0, 1.0);
    return t * t * (3.0 - 2.0 * t);
}

void add_structure(std::vector<double>& field, const PhantomSpec& spec, const Ellipsoid& e,
                   double scale) {
    const auto [nx, ny, nz] = spec.dims;
    const double mean_axis = (e.ax + e.ay + e.az) / 3.0;
    const double margin = e.shell ? 1.0 + 4.0 * e.shell_voxels / mean_axis : 1.0 + 2.0 * e.edge;
    const int x0 = std::max(0, static_cast<int>(std::floor(e.cx - e.ax * margin)));
    const int x1 = std::min(nx - 1, static_cast<int>(std::ceil(e.cx + e.ax * margin)));
    const int y0 = std::max(0, static_cast<int>(std::floor(e.cy - e.ay * margin)));
    const int y1 = std::min(ny - 1, static_cast<int>(std::ceil(e.cy + e.ay * margin)));
    const int z0 = std::max(0, static_cast<int>(std::floor(e.cz - e.az * margin)));
    const int z1 = std::min(nz - 1, static_cast<int>(std::ceil(e.cz + e.az * margin)));

    const double amp = e.intensity * scale;
    for (int z = z0; z <= z1; ++z)
        for (int y = y0; y <= y1; ++y) {
            std::size_t row = static_cast<std::size_t>(x0) +
                              static_cast<std::size_t>(nx) *
                                  (static_cast<std::size_t>(y) +
                                   static_cast<std::size_t>(ny) * static_cast<std::size_t>(z));
            for (int x = x0; x <= x1; ++x, ++row) {
                const double r = radius(e, x, y, z);
                if (e.shell) {
                    // Gaussian profile around the unit surface, in voxel units.
                    const double d = (r - 1.0) * mean_axis;
                    const double s = e.shell_voxels;
                    if (std::abs(d) < 4.0 * s)
                        field[row] += amp * std::exp(-0.5 * (d / s) * (d / s));
                } else {
                    field[row] += amp * smoothstep01((1.0 - r) / e.edge + 0.5);
                }
            }
        }
}

// Centers the field and scales it to unit RMS.
std::vector<double> normalize_rms(std::vector<double> field) {
    double mean = 0.0;
    for (double d : field) mean += d;
    mean /= static_cast<double>(field.size());
    double rms = 0.0;
    for (double& d : field) {
        d -= mean;
        rms += d * d;
    }
    rms = std::sqrt(rms / static_cast<double>(field.size()));
    if (rms > 0.0)
        for (double& d : field) d /= rms;
    return field;
}

// Band-limited unit-RMS texture: white noise with every coefficient above
// bandwidth * Nyquist (per axis) zeroed.
std::vector<double> make_texture(const PhantomSpec& spec, Rng& rng) {
    const auto [nx, ny, nz] = spec.dims;
    const std::size_t n = static_cast<std::size_t>(nx) * ny * nz;
    fourier::VolumeD noise{nx, ny, nz, 1.0, 1.0, 1.0, {}};
    noise.data.resize(n);
    for (double& d : noise.data) d = rng.normal();
    if (spec.texture_bandwidth >= 1.0) return normalize_rms(noise.data);

    fourier::KSpaceGrid k = fourier::dft3_forward_d(noise);
    auto keep = [&](int idx, int dim) {
        const int f = idx - dim / 2;
        return std::abs(f) <= spec.texture_bandwidth * (dim / 2.0);
    };
    std::size_t i = 0;
    for (int z = 0; z < nz; ++z)
        for (int y = 0; y < ny; ++y)
            for (int x = 0; x < nx; ++x, ++i)
                if (!keep(x, nx) || !keep(y, ny) || !keep(z, nz)) k.coeffs[i] = {0.0, 0.0};
    // The band mask is conjugate-symmetric, so the inverse stays real.
    fourier::VolumeD filtered = fourier::dft3_inverse_d(k);
    return normalize_rms(filtered.data);
}

}  // namespace

std::vector<Volume> generate_subject(const PhantomSpec& spec, std::uint64_t subject_seed) {
    spec.validate();
    const auto [nx, ny, nz] = spec.dims;
    const std::size_t n = static_cast<std::size_t>(nx) * ny * nz;
    Rng rng(subject_seed);

    // Smooth background: trilinear upsampling of a coarse random grid.
    Volume coarse(5, 5, 3);
    for (float& f : coarse.data) f = static_cast<float>(rng.uniform(-0.08, 0.08));
    Volume bg_field = trilinear_resample(coarse, spec.dims);

    // Tissues: filled soft ellipsoids plus 1-2 thin bright shells.
    std::vector<Ellipsoid> structures;
    const int count = rng.uniform_int(spec.min_ellipsoids, spec.max_ellipsoids);
    for (int i = 0; i < count; ++i) {
        Ellipsoid e{};
        e.cx = rng.uniform(0.15, 0.85) * nx;
        e.cy = rng.uniform(0.15, 0.85) * ny;
        e.cz = rng.uniform(0.18, 0.82) * nz;
        e.ax = rng.uniform(0.08, 0.24) * nx;
        e.ay = rng.uniform(0.08, 0.24) * ny;
        e.az = rng.uniform(0.10, 0.28) * nz;
        const double theta = rng.uniform(0.0, 3.14159265358979323846);
        e.cos_t = std::cos(theta);
        e.sin_t = std::sin(theta);
        // Tissues sit brighter or darker than the background.
        e.intensity = (rng.coin() ? 1.0 : -1.0) * rng.uniform(0.12, 0.5);
        e.decay = rng.uniform(0.05, 0.45);
        const double mean_axis = (e.ax + e.ay + e.az) / 3.0;
        e.edge = 1.8 / mean_axis;  // ~1.8 voxel transition band
        e.shell = false;
        structures.push_back(e);
    }
    const int shells = rng.uniform_int(1, 2);
    for (int i = 0; i < shells; ++i) {
        Ellipsoid e{};
        e.cx = rng.uniform(0.3, 0.7) * nx;
        e.cy = rng.uniform(0.3, 0.7) * ny;
        e.cz = rng.uniform(0.3, 0.7) * nz;
        e.ax = rng.uniform(0.14, 0.3) * nx;
        e.ay = rng.uniform(0.14, 0.3) * ny;
        e.az = rng.uniform(0.16, 0.32) * nz;
        e.cos_t = 1.0;
        e.sin_t = 0.0;
        e.intensity = rng.uniform(0.3, 0.5);
        e.decay = rng.uniform(0.05, 0.3);
        e.edge = 0.0;
        e.shell = true;
        e.shell_voxels = rng.uniform(0.8, 1.2);
        structures.push_back(e);
    }

    std::vector<double> texture = make_texture(spec, rng);
    const double texture_amp = 0.05;
    const double texture_decay = 0.15;

    std::vector<Volume> echoes;
    echoes.reserve(static_cast<std::size_t>(spec.echoes));
    for (int echo = 0; echo < spec.echoes; ++echo) {
        std::vector<double> field(n, 0.25);
        for (std::size_t i = 0; i < n; ++i) field[i] += static_cast<double>(bg_field.data[i]);
        for (const auto& e : structures)
            add_structure(field, spec, e, std::exp(-e.decay * echo));
        const double tex_scale = texture_amp * std::exp(-texture_decay * echo);
        for (std::size_t i = 0; i < n; ++i) field[i] += tex_scale * texture[i];

        if (spec.noise_sigma > 0.0) {
            auto [lo, hi] = std::minmax_element(field.begin(), field.end());
            const double sigma = spec.noise_sigma * (*hi - *lo);
            // Magnitude-image (Rician) noise.
            for (double& v : field) {
                const double a = v + sigma * rng.normal();
                const double b = sigma * rng.normal();
                v = std::sqrt(a * a + b * b);
            }
        }

        Volume out(nx, ny, nz, spec.spacing[0], spec.spacing[1], spec.spacing[2]);
        for (std::size_t i = 0; i < n; ++i) out.data[i] = static_cast<float>(field[i]);
        echoes.push_back(std::move(out));
    }
    return echoes;
}

Dataset generate_dataset(const PhantomSpec& spec, int subject_count, std::uint64_t master_seed) {
    spec.validate();
    if (subject_count < 3)
        throw ValidationError("dataset needs at least 3 subjects for a three-way split");
    Dataset ds;
    ds.spec = spec;
    ds.master_seed = master_seed;
    ds.subject_count = subject_count;
    for (int s = 0; s < subject_count; ++s) {
        const std::uint64_t seed = derive_seed(master_seed, static_cast<std::uint64_t>(s));
        ds.subject_seeds.push_back(seed);
        auto volumes = generate_subject(spec, seed);
        for (int e = 0; e < spec.echoes; ++e) {
            DatasetEntry entry;
            entry.volume = std::move(volumes[static_cast<std::size_t>(e)]);
            entry.subject = "subject" + std::to_string(s);
            entry.echo = e;
            ds.entries.push_back(std::move(entry));
        }
    }
    return ds;
}

namespace {

nlohmann::json spec_to_json(const PhantomSpec& s) {
    return {{"dims", s.dims},
            {"spacing", s.spacing},
            {"echoes", s.echoes},
            {"min_ellipsoids", s.min_ellipsoids},
            {"max_ellipsoids", s.max_ellipsoids},
            {"texture_bandwidth", s.texture_bandwidth},
            {"noise_sigma", s.noise_sigma}};
}

PhantomSpec spec_from_json(const nlohmann::json& j) {
    PhantomSpec s;
    s.dims = j.at("dims").get<std::array<int, 3>>();
    s.spacing = j.at("spacing").get<std::array<double, 3>>();
    s.echoes = j.at("echoes").get<int>();
    s.min_ellipsoids = j.at("min_ellipsoids").get<int>();
    s.max_ellipsoids = j.at("max_ellipsoids").get<int>();
    s.texture_bandwidth = j.at("texture_bandwidth").get<double>();
    s.noise_sigma = j.at("noise_sigma").get<double>();
    return s;
}

}  // namespace

void write_dataset(const std::filesystem::path& dir, const Dataset& dataset) {
    std::filesystem::create_directories(dir);
    nlohmann::json manifest;
    manifest["spec"] = spec_to_json(dataset.spec);
    manifest["master_seed"] = dataset.master_seed;
    manifest["echoes"] = dataset.spec.echoes;
    manifest["subjects"] = nlohmann::json::array();

    for (int s = 0; s < dataset.subject_count; ++s)
        manifest["subjects"].push_back(
            {{"id", "subject" + std::to_string(s)},
             {"seed", dataset.subject_seeds[static_cast<std::size_t>(s)]}});

    manifest["files"] = nlohmann::json::array();
    for (const auto& entry : dataset.entries) {
        const std::string name = entry.subject + "_echo" + std::to_string(entry.echo) + ".vol";
        write_volume(dir / name, entry.volume);
        manifest["files"].push_back(
            {{"subject", entry.subject}, {"echo", entry.echo}, {"file", name}});
    }

    std::ofstream os(dir / "dataset_manifest.json");
    if (!os) throw IoError("cannot write dataset manifest in " + dir.string());
    os << manifest.dump(2) << '\n';
}

DatasetManifest read_dataset_manifest(const std::filesystem::path& dir) {
    const auto path = dir / "dataset_manifest.json";
    std::ifstream is(path);
    if (!is) throw IoError("missing dataset manifest: " + path.string());
    DatasetManifest m;
    try {
        nlohmann::json j = nlohmann::json::parse(is);
        m.spec = spec_from_json(j.at("spec"));
        m.master_seed = j.at("master_seed").get<std::uint64_t>();
        m.echoes = j.at("echoes").get<int>();
        for (const auto& s : j.at("subjects")) m.subjects.push_back(s.at("id").get<std::string>());
        for (const auto& f : j.at("files"))
            m.entries.push_back({f.at("subject").get<std::string>(), f.at("echo").get<int>(),
                                 f.at("file").get<std::string>()});
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("invalid dataset manifest " + path.string() + ": " + e.what());
    }
    return m;
}

}  // namespace volsr::phantom
