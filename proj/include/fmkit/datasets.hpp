#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "fmkit/discrete.hpp"
#include "fmkit/sphere.hpp"

namespace fmkit {

// Desk-scale dataset generators and the file formats the CLI speaks. All
// generators are deterministic under their seed.

struct LabeledPoints {
    std::vector<std::vector<double>> points;
    std::vector<int> labels;  // empty when the dataset is unlabeled
};

// Two interleaved half-circles with Gaussian jitter; label = moon index.
// Points stay inside [-1.5, 2.5] x [-1, 1.5] for noise <= 0.1.
LabeledPoints moons(int n, double noise, std::uint64_t seed);

// Uniform draws from the black cells of a 4x4 board on [-2, 2]^2.
LabeledPoints checkerboard(int n, std::uint64_t seed);

struct DiscreteToyData {
    std::vector<DiscreteState> sequences;
    // Sparse target PMF over [K]^d.
    std::vector<DiscreteState> atoms;
    std::vector<double> probs;
    int K = 0;
    int d = 0;

    nlohmann::json pmf_json() const;
    // Exact per-coordinate marginals of the written PMF.
    std::vector<std::vector<double>> coordinate_marginals() const;
};

// Draws n sequences from a sparse PMF (a handful of random atoms with
// normalized random weights). The PMF is part of the dataset contract and is
// written alongside the samples.
DiscreteToyData discrete_toy(int K, int d, int n, std::uint64_t seed);

// Mixture on the 2-sphere: pick one of `centers` fixed modes, perturb in the
// tangent plane with std 1/sqrt(concentration), exp-map back.
std::vector<SpherePoint> sphere_mixture(int n, int centers, double concentration,
                                        std::uint64_t seed);
std::vector<SpherePoint> sphere_mixture_centers(int centers);

// CSV / token-file IO. CSV: header row, comma separators, '.' decimal.
void write_points_csv(const std::string& path, const std::vector<std::vector<double>>& points,
                      const std::vector<int>* labels = nullptr);
LabeledPoints read_points_csv(const std::string& path);

// One sequence per line, space-separated token indices.
void write_tokens(const std::string& path, const std::vector<DiscreteState>& sequences);
std::vector<DiscreteState> read_tokens(const std::string& path);

void write_sphere_csv(const std::string& path, const std::vector<SpherePoint>& points);
std::vector<SpherePoint> read_sphere_csv(const std::string& path);

std::string format_double(double v);

}  // namespace fmkit
