#pragma once

#include <cstddef>
#include <vector>

namespace fmkit {

// Produces (X0, X1) pairings for training batches. The data itself is never
// modified; a coupling is just a permutation: row i pairs x0s[i] with
// x1s[pairing[i]].

struct CouplingBatch {
    std::vector<std::vector<double>> x0s;
    std::vector<std::vector<double>> x1s;
    std::vector<int> pairing;  // bijection on [k]
};

CouplingBatch independent_coupling(std::vector<std::vector<double>> x0s,
                                   std::vector<std::vector<double>> x1s);

// Exact minimum-cost assignment under squared Euclidean cost (Hungarian
// algorithm, O(k^3)). k is capped at 512; larger batches should be chunked.
CouplingBatch multisample_ot(std::vector<std::vector<double>> x0s,
                             std::vector<std::vector<double>> x1s);

double pairing_cost(const CouplingBatch& batch);

// Exact assignment over a dense cost matrix; exposed for tests.
std::vector<int> solve_assignment(const std::vector<std::vector<double>>& cost);

}  // namespace fmkit
