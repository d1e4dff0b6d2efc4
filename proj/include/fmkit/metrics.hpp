#pragma once

#include <string>
#include <vector>

#include "fmkit/discrete.hpp"

namespace fmkit {

// Sample-quality metrics and the histogram renderer used by the CLI.

// Energy-distance V-statistic between two point sets:
//   2/(nm) sum |x - y| - 1/n^2 sum |x - x'| - 1/m^2 sum |y - y'|.
// Nonnegative; zero only for identical empirical distributions.
double energy_distance(const std::vector<std::vector<double>>& a,
                       const std::vector<std::vector<double>>& b, int threads = 1);

// Per-coordinate empirical marginals of token sequences over vocabulary [K].
std::vector<std::vector<double>> empirical_marginals(const std::vector<DiscreteState>& sequences,
                                                     int K, int d);

// Worst per-coordinate total-variation distance between two sets of
// coordinate marginals.
double max_marginal_tv(const std::vector<std::vector<double>>& p,
                       const std::vector<std::vector<double>>& q);

struct HistogramBounds {
    double x_lo = -4.0, x_hi = 4.0;
    double y_lo = -4.0, y_hi = 4.0;
};

// Rasterizes 2-D points to a binary PGM (P5), bin counts scaled so the
// fullest bin is white. Deterministic.
void render_histogram(const std::vector<std::vector<double>>& points, int bins,
                      const HistogramBounds& bounds, const std::string& path);

}  // namespace fmkit
