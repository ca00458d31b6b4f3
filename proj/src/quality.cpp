#include "volsr/quality.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "volsr/errors.hpp"

namespace volsr::quality {

namespace {

void check_pair(const Volume& reference, const Volume& test) {
    reference.validate();
    test.validate();
    if (reference.nx != test.nx || reference.ny != test.ny || reference.nz != test.nz)
        throw ValidationError("metric inputs must share dims");
}

double reference_range(const Volume& reference) {
    auto [lo, hi] = std::minmax_element(reference.data.begin(), reference.data.end());
    double range = static_cast<double>(*hi) - static_cast<double>(*lo);
    if (!(range > 0.0))
        throw DegenerateInputError("reference volume is constant; metrics undefined");
    return range;
}

double mse(const Volume& a, const Volume& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        double d = static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]);
        acc += d * d;
    }
    return acc / static_cast<double>(a.data.size());
}

// Separable valid-mode box sum along one axis. in has dims (nx, ny, nz);
// out has the same dims except the filtered axis shrinks by window-1.
void box_sum_axis(const std::vector<double>& in, std::vector<double>& out, int nx, int ny, int nz,
                  int axis, int window) {
    int onx = nx, ony = ny, onz = nz;
    (axis == 0 ? onx : axis == 1 ? ony : onz) -= window - 1;
    out.assign(static_cast<std::size_t>(onx) * ony * onz, 0.0);
    const int sx = 1, sy = nx, sz = nx * ny;
    const int stride = axis == 0 ? sx : axis == 1 ? sy : sz;
    std::size_t o = 0;
    for (int z = 0; z < onz; ++z)
        for (int y = 0; y < ony; ++y)
            for (int x = 0; x < onx; ++x, ++o) {
                std::size_t base = static_cast<std::size_t>(x) * sx + static_cast<std::size_t>(y) * sy +
                                   static_cast<std::size_t>(z) * sz;
                double s = 0.0;
                for (int w = 0; w < window; ++w) s += in[base + static_cast<std::size_t>(w) * stride];
                out[o] = s;
            }
}

// Valid-mode uniform box sums over window^3 neighborhoods.
std::vector<double> box_sum3(const std::vector<double>& in, int nx, int ny, int nz, int window) {
    std::vector<double> a, b;
    box_sum_axis(in, a, nx, ny, nz, 0, window);
    box_sum_axis(a, b, nx - window + 1, ny, nz, 1, window);
    box_sum_axis(b, a, nx - window + 1, ny - window + 1, nz, 2, window);
    return a;
}

}  // namespace

double psnr(const Volume& reference, const Volume& test) {
    check_pair(reference, test);
    double range = reference_range(reference);
    double err = mse(reference, test);
    if (err == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(range * range / err);
}

double nrmse(const Volume& reference, const Volume& test) {
    check_pair(reference, test);
    double range = reference_range(reference);
    return std::sqrt(mse(reference, test)) / range;
}

double ssim(const Volume& reference, const Volume& test, int window, double k1, double k2) {
    check_pair(reference, test);
    if (window < 1 || window % 2 == 0) throw ValidationError("SSIM window must be odd and positive");
    if (reference.nx < window || reference.ny < window || reference.nz < window)
        throw ValidationError("volume smaller than SSIM window");
    double range = reference_range(reference);
    const double c1 = (k1 * range) * (k1 * range);
    const double c2 = (k2 * range) * (k2 * range);

    const std::size_t n = reference.data.size();
    std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
    for (std::size_t i = 0; i < n; ++i) {
        double a = reference.data[i], b = test.data[i];
        x[i] = a;
        y[i] = b;
        xx[i] = a * a;
        yy[i] = b * b;
        xy[i] = a * b;
    }
    const int nx = reference.nx, ny = reference.ny, nz = reference.nz;
    auto sx = box_sum3(x, nx, ny, nz, window);
    auto sy = box_sum3(y, nx, ny, nz, window);
    auto sxx = box_sum3(xx, nx, ny, nz, window);
    auto syy = box_sum3(yy, nx, ny, nz, window);
    auto sxy = box_sum3(xy, nx, ny, nz, window);

    const double inv = 1.0 / (static_cast<double>(window) * window * window);
    double acc = 0.0;
    for (std::size_t i = 0; i < sx.size(); ++i) {
        double mx = sx[i] * inv, my = sy[i] * inv;
        double vx = sxx[i] * inv - mx * mx;
        double vy = syy[i] * inv - my * my;
        double cxy = sxy[i] * inv - mx * my;
        double num = (2.0 * mx * my + c1) * (2.0 * cxy + c2);
        double den = (mx * mx + my * my + c1) * (vx + vy + c2);
        acc += num / den;
    }
    return acc / static_cast<double>(sx.size());
}

MetricsTriple metrics(const Volume& reference, const Volume& test, int ssim_window) {
    MetricsTriple t;
    t.psnr = psnr(reference, test);
    t.nrmse = nrmse(reference, test);
    t.ssim = ssim(reference, test, ssim_window);
    return t;
}

namespace {

MetricsTriple triple_mean(const std::vector<MetricsTriple>& v) {
    MetricsTriple m;
    for (const auto& t : v) {
        m.psnr += t.psnr;
        m.nrmse += t.nrmse;
        m.ssim += t.ssim;
    }
    double n = static_cast<double>(v.size());
    m.psnr /= n;
    m.nrmse /= n;
    m.ssim /= n;
    return m;
}

MetricsTriple triple_sd(const std::vector<MetricsTriple>& v, const MetricsTriple& mean) {
    MetricsTriple s;
    for (const auto& t : v) {
        s.psnr += (t.psnr - mean.psnr) * (t.psnr - mean.psnr);
        s.nrmse += (t.nrmse - mean.nrmse) * (t.nrmse - mean.nrmse);
        s.ssim += (t.ssim - mean.ssim) * (t.ssim - mean.ssim);
    }
    double n = static_cast<double>(v.size());
    s.psnr = std::sqrt(s.psnr / n);
    s.nrmse = std::sqrt(s.nrmse / n);
    s.ssim = std::sqrt(s.ssim / n);
    return s;
}

std::string fmt2(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(2);
    os << v;
    return os.str();
}

}  // namespace

MetricsReport aggregate_report(const std::vector<MethodEntry>& entries) {
    if (entries.empty()) throw ValidationError("aggregate_report requires at least one method");
    MetricsReport report;
    for (const auto& e : entries) {
        if (e.per_volume.empty())
            throw ValidationError("method '" + e.method + "' has no per-volume entries");
        MethodSummary s;
        s.method = e.method;
        s.loss = e.loss;
        s.per_volume = e.per_volume;
        s.mean = triple_mean(e.per_volume);
        s.sd = triple_sd(e.per_volume, s.mean);
        report.methods.push_back(std::move(s));
    }
    std::sort(report.methods.begin(), report.methods.end(), [](const auto& a, const auto& b) {
        return std::tie(a.method, a.loss) < std::tie(b.method, b.loss);
    });
    return report;
}

std::string render_table(const MetricsReport& report) {
    // Best = max for PSNR/SSIM, min for NRMSE; bolded with ** markers.
    double best_psnr = -std::numeric_limits<double>::infinity();
    double best_ssim = -std::numeric_limits<double>::infinity();
    double best_nrmse = std::numeric_limits<double>::infinity();
    for (const auto& m : report.methods) {
        best_psnr = std::max(best_psnr, m.mean.psnr);
        best_ssim = std::max(best_ssim, m.mean.ssim);
        best_nrmse = std::min(best_nrmse, m.mean.nrmse);
    }

    std::vector<std::array<std::string, 5>> rows;
    rows.push_back({"Method", "Loss", "PSNR (SD) ↑", "NRMSE (SD) ↓", "SSIM (SD) ↑"});
    for (const auto& m : report.methods) {
        auto cell = [](double mean, double sd, bool best) {
            std::string s = fmt2(mean) + " (" + fmt2(sd) + ")";
            return best ? "**" + s + "**" : s;
        };
        rows.push_back({m.method, m.loss, cell(m.mean.psnr, m.sd.psnr, m.mean.psnr == best_psnr),
                        cell(m.mean.nrmse, m.sd.nrmse, m.mean.nrmse == best_nrmse),
                        cell(m.mean.ssim, m.sd.ssim, m.mean.ssim == best_ssim)});
    }

    std::array<std::size_t, 5> width{};
    for (const auto& r : rows)
        for (int c = 0; c < 5; ++c) width[c] = std::max(width[c], r[c].size());

    std::ostringstream os;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (int c = 0; c < 5; ++c) {
            os << rows[i][c];
            if (c < 4) os << std::string(width[c] - rows[i][c].size() + 2, ' ');
        }
        os << '\n';
        if (i == 0) {
            std::size_t total = 0;
            for (int c = 0; c < 5; ++c) total += width[c] + (c < 4 ? 2 : 0);
            os << std::string(total, '-') << '\n';
        }
    }
    for (const auto& note : report.notes) os << "note: " << note << '\n';
    return os.str();
}

std::string report_to_json(const MetricsReport& report) {
    nlohmann::json j;
    j["methods"] = nlohmann::json::array();
    for (const auto& m : report.methods) {
        nlohmann::json e;
        e["name"] = m.method;
        e["loss"] = m.loss;
        auto metric = [&](auto get_value, double mean, double sd) {
            nlohmann::json g;
            g["per_volume"] = nlohmann::json::array();
            for (const auto& t : m.per_volume) g["per_volume"].push_back(get_value(t));
            g["mean"] = mean;
            g["sd"] = sd;
            return g;
        };
        e["psnr"] = metric([](const MetricsTriple& t) { return t.psnr; }, m.mean.psnr, m.sd.psnr);
        e["nrmse"] = metric([](const MetricsTriple& t) { return t.nrmse; }, m.mean.nrmse, m.sd.nrmse);
        e["ssim"] = metric([](const MetricsTriple& t) { return t.ssim; }, m.mean.ssim, m.sd.ssim);
        j["methods"].push_back(std::move(e));
    }
    j["notes"] = report.notes;
    return j.dump(2);
}

}  // namespace volsr::quality
