#pragma once

#include <string>
#include <vector>

#include "volsr/volume.hpp"

namespace volsr::quality {

/// One volume's full-reference scores. psnr and nrmse always derive from the
/// same MSE and reference range L: psnr = 10*log10(L^2/MSE),
/// nrmse = sqrt(MSE)/L.
struct MetricsTriple {
    double psnr = 0.0;   // decibels; +infinity when MSE == 0
    double nrmse = 0.0;  // dimensionless, >= 0
    double ssim = 0.0;   // in [-1, 1]
};

/// Peak signal-to-noise ratio in dB. L is the intensity range of the
/// reference (the reference is privileged; swapping arguments changes L).
/// Identical inputs return +infinity.
double psnr(const Volume& reference, const Volume& test);

/// Root mean square error normalized by the reference range.
double nrmse(const Volume& reference, const Volume& test);

/// Mean structural similarity over all fully-contained (valid) positions of
/// a uniform cubic window. C1 = (k1*L)^2, C2 = (k2*L)^2 with L the reference
/// range.
double ssim(const Volume& reference, const Volume& test, int window = 7, double k1 = 0.01,
            double k2 = 0.03);

MetricsTriple metrics(const Volume& reference, const Volume& test, int ssim_window = 7);

/// Per-method aggregate: mean and population standard deviation over the
/// per-volume triples.
struct MethodEntry {
    std::string method;
    std::string loss;  // "n/a" for non-learned baselines
    std::vector<MetricsTriple> per_volume;
};

struct MethodSummary {
    std::string method;
    std::string loss;
    std::vector<MetricsTriple> per_volume;
    MetricsTriple mean;
    MetricsTriple sd;
};

struct MetricsReport {
    std::vector<MethodSummary> methods;  // ordered by (method, loss)
    std::vector<std::string> notes;
};

/// Computes means and population SDs per metric per method and orders the
/// rows deterministically by (method name, loss name).
MetricsReport aggregate_report(const std::vector<MethodEntry>& entries);

/// UTF-8 table in "mean (SD)" style with up/down direction markers and the
/// best value per metric in bold.
std::string render_table(const MetricsReport& report);

/// Machine-readable JSON (schema: methods[] -> {name, loss, metrics{...}}).
std::string report_to_json(const MetricsReport& report);

}  // namespace volsr::quality
