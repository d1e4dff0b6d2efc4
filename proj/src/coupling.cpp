#include "fmkit/coupling.hpp"

#include <cmath>
#include <limits>
#include <numeric>

#include "fmkit/errors.hpp"

namespace fmkit {

namespace {

double squared_distance(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

void validate(const std::vector<std::vector<double>>& x0s,
              const std::vector<std::vector<double>>& x1s) {
    if (x0s.size() != x1s.size()) throw ArgumentError("coupling: batch sizes differ");
    if (x0s.empty()) throw ArgumentError("coupling: empty batch");
    const std::size_t d = x0s.front().size();
    for (const auto& v : x0s)
        if (v.size() != d) throw ArgumentError("coupling: ragged x0 batch");
    for (const auto& v : x1s)
        if (v.size() != d) throw ArgumentError("coupling: ragged x1 batch");
}

}  // namespace

CouplingBatch independent_coupling(std::vector<std::vector<double>> x0s,
                                   std::vector<std::vector<double>> x1s) {
    validate(x0s, x1s);
    CouplingBatch batch;
    batch.pairing.resize(x0s.size());
    std::iota(batch.pairing.begin(), batch.pairing.end(), 0);
    batch.x0s = std::move(x0s);
    batch.x1s = std::move(x1s);
    return batch;
}

// Hungarian algorithm with potentials (shortest augmenting paths). Rows are
// scanned in index order, which makes tie-breaking deterministic: among
// equal-cost assignments the lowest-index pairing wins.
std::vector<int> solve_assignment(const std::vector<std::vector<double>>& cost) {
    const int n = static_cast<int>(cost.size());
    constexpr double kInf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<int> match(n + 1, 0);  // match[j] = 1-based row assigned to column j
    for (int i = 1; i <= n; ++i) {
        std::vector<double> min_cost(n + 1, kInf);
        std::vector<int> prev(n + 1, 0);
        std::vector<char> used(n + 1, 0);
        int j0 = 0;
        match[0] = i;
        do {
            used[j0] = 1;
            const int i0 = match[j0];
            double delta = kInf;
            int j1 = 0;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if (cur < min_cost[j]) {
                    min_cost[j] = cur;
                    prev[j] = j0;
                }
                if (min_cost[j] < delta) {
                    delta = min_cost[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[match[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_cost[j] -= delta;
                }
            }
            j0 = j1;
        } while (match[j0] != 0);
        // Augment along the found path.
        while (j0 != 0) {
            const int j1 = prev[j0];
            match[j0] = match[j1];
            j0 = j1;
        }
    }
    std::vector<int> assignment(n, -1);
    for (int j = 1; j <= n; ++j)
        if (match[j] != 0) assignment[match[j] - 1] = j - 1;
    return assignment;
}

CouplingBatch multisample_ot(std::vector<std::vector<double>> x0s,
                             std::vector<std::vector<double>> x1s) {
    validate(x0s, x1s);
    const std::size_t k = x0s.size();
    if (k > 512)
        throw ConfigError("multisample_ot: batch of " + std::to_string(k) +
                          " exceeds the exact-assignment cap of 512; chunk the batch");
    std::vector<std::vector<double>> cost(k, std::vector<double>(k, 0.0));
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            const double c = squared_distance(x0s[i], x1s[j]);
            if (!std::isfinite(c)) throw ArgumentError("multisample_ot: non-finite cost");
            cost[i][j] = c;
        }
    }
    CouplingBatch batch;
    batch.pairing = solve_assignment(cost);
    batch.x0s = std::move(x0s);
    batch.x1s = std::move(x1s);
    return batch;
}

double pairing_cost(const CouplingBatch& batch) {
    double total = 0.0;
    for (std::size_t i = 0; i < batch.x0s.size(); ++i)
        total += squared_distance(batch.x0s[i], batch.x1s[static_cast<std::size_t>(batch.pairing[i])]);
    return total;
}

}  // namespace fmkit
