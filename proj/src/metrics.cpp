#include "fmkit/metrics.hpp"

#include <cmath>
#include <fstream>

#include "fmkit/errors.hpp"
#include "fmkit/parallel.hpp"

namespace fmkit {

namespace {

double pair_sum(const std::vector<std::vector<double>>& a,
                const std::vector<std::vector<double>>& b, int threads) {
    // Row sums accumulated independently, reduced in index order.
    std::vector<double> row(a.size(), 0.0);
    parallel_for(a.size(), threads, [&](std::size_t i) {
        double acc = 0.0;
        for (const auto& y : b) {
            double d2 = 0.0;
            for (std::size_t k = 0; k < y.size(); ++k) {
                const double d = a[i][k] - y[k];
                d2 += d * d;
            }
            acc += std::sqrt(d2);
        }
        row[i] = acc;
    });
    double total = 0.0;
    for (double r : row) total += r;
    return total;
}

}  // namespace

double energy_distance(const std::vector<std::vector<double>>& a,
                       const std::vector<std::vector<double>>& b, int threads) {
    if (a.empty() || b.empty()) throw ArgumentError("energy_distance: empty point set");
    const std::size_t dim = a.front().size();
    for (const auto& p : a)
        if (p.size() != dim) throw ArgumentError("energy_distance: ragged rows");
    for (const auto& p : b)
        if (p.size() != dim) throw ArgumentError("energy_distance: dimension mismatch");
    const double n = static_cast<double>(a.size());
    const double m = static_cast<double>(b.size());
    const double cross = pair_sum(a, b, threads);
    const double within_a = pair_sum(a, a, threads);
    const double within_b = pair_sum(b, b, threads);
    return 2.0 * cross / (n * m) - within_a / (n * n) - within_b / (m * m);
}

std::vector<std::vector<double>> empirical_marginals(const std::vector<DiscreteState>& sequences,
                                                     int K, int d) {
    if (sequences.empty()) throw ArgumentError("empirical_marginals: no sequences");
    std::vector<std::vector<double>> marg(static_cast<std::size_t>(d),
                                          std::vector<double>(static_cast<std::size_t>(K), 0.0));
    for (const auto& seq : sequences) {
        if (static_cast<int>(seq.size()) != d)
            throw ArgumentError("empirical_marginals: sequence length mismatch");
        for (int i = 0; i < d; ++i) {
            const int tok = seq[static_cast<std::size_t>(i)];
            if (tok < 0 || tok >= K) throw ArgumentError("empirical_marginals: token out of range");
            marg[static_cast<std::size_t>(i)][static_cast<std::size_t>(tok)] += 1.0;
        }
    }
    const double inv = 1.0 / static_cast<double>(sequences.size());
    for (auto& row : marg)
        for (double& p : row) p *= inv;
    return marg;
}

double max_marginal_tv(const std::vector<std::vector<double>>& p,
                       const std::vector<std::vector<double>>& q) {
    if (p.size() != q.size()) throw ArgumentError("max_marginal_tv: coordinate count mismatch");
    double worst = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i)
        worst = std::max(worst, tv_distance(p[i], q[i]));
    return worst;
}

void render_histogram(const std::vector<std::vector<double>>& points, int bins,
                      const HistogramBounds& bounds, const std::string& path) {
    if (bins <= 0) throw ConfigError("render_histogram: bins must be positive");
    if (points.empty()) throw ArgumentError("render_histogram: no points");
    for (const auto& p : points)
        if (p.size() != 2) throw ArgumentError("render_histogram: points must be 2-D");
    if (!(bounds.x_lo < bounds.x_hi && bounds.y_lo < bounds.y_hi))
        throw ConfigError("render_histogram: invalid bounds");

    std::vector<long> counts(static_cast<std::size_t>(bins) * bins, 0);
    const double sx = bins / (bounds.x_hi - bounds.x_lo);
    const double sy = bins / (bounds.y_hi - bounds.y_lo);
    for (const auto& p : points) {
        const int bx = static_cast<int>(std::floor((p[0] - bounds.x_lo) * sx));
        const int by = static_cast<int>(std::floor((p[1] - bounds.y_lo) * sy));
        if (bx < 0 || bx >= bins || by < 0 || by >= bins) continue;
        counts[static_cast<std::size_t>(by) * bins + bx] += 1;
    }
    long max_count = 0;
    for (long c : counts) max_count = std::max(max_count, c);

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << "P5\n" << bins << " " << bins << "\n255\n";
    // Row 0 of the image is the top (largest y).
    for (int row = bins - 1; row >= 0; --row) {
        for (int col = 0; col < bins; ++col) {
            const long c = counts[static_cast<std::size_t>(row) * bins + col];
            const unsigned char v =
                max_count == 0 ? 0 : static_cast<unsigned char>((255 * c) / max_count);
            out.put(static_cast<char>(v));
        }
    }
    if (!out) throw IoError("failed writing: " + path);
}

}  // namespace fmkit
