#include "fmkit/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "fmkit/errors.hpp"
#include "fmkit/rng.hpp"

namespace fmkit {

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

LabeledPoints moons(int n, double noise, std::uint64_t seed) {
    if (n <= 0) throw ConfigError("moons: n must be positive");
    if (noise < 0.0) throw ConfigError("moons: noise must be nonnegative");
    Rng rng(seed);
    LabeledPoints out;
    out.points.reserve(static_cast<std::size_t>(n));
    out.labels.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const int moon = i % 2;
        const double a = rng.uniform() * M_PI;
        double x, y;
        if (moon == 0) {
            x = std::cos(a);
            y = std::sin(a);
        } else {
            x = 1.0 - std::cos(a);
            y = 0.5 - std::sin(a);
        }
        x += noise * rng.normal();
        y += noise * rng.normal();
        out.points.push_back({x, y});
        out.labels.push_back(moon);
    }
    return out;
}

LabeledPoints checkerboard(int n, std::uint64_t seed) {
    if (n <= 0) throw ConfigError("checkerboard: n must be positive");
    Rng rng(seed);
    LabeledPoints out;
    out.points.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        // Black cells of a 4x4 board on [-2, 2]^2.
        int cx, cy;
        do {
            cx = static_cast<int>(rng.uniform_index(4));
            cy = static_cast<int>(rng.uniform_index(4));
        } while ((cx + cy) % 2 != 0);
        const double x = -2.0 + cx + rng.uniform();
        const double y = -2.0 + cy + rng.uniform();
        out.points.push_back({x, y});
    }
    return out;
}

nlohmann::json DiscreteToyData::pmf_json() const {
    nlohmann::json j;
    j["K"] = K;
    j["d"] = d;
    j["atoms"] = atoms;
    j["probs"] = probs;
    return j;
}

std::vector<std::vector<double>> DiscreteToyData::coordinate_marginals() const {
    std::vector<std::vector<double>> marg(static_cast<std::size_t>(d),
                                          std::vector<double>(static_cast<std::size_t>(K), 0.0));
    for (std::size_t a = 0; a < atoms.size(); ++a)
        for (int i = 0; i < d; ++i)
            marg[static_cast<std::size_t>(i)][static_cast<std::size_t>(atoms[a][static_cast<std::size_t>(i)])] +=
                probs[a];
    return marg;
}

DiscreteToyData discrete_toy(int K, int d, int n, std::uint64_t seed) {
    if (K <= 1 || d <= 0 || n <= 0) throw ConfigError("discrete_toy: need K > 1, d > 0, n > 0");
    Rng rng(seed);
    DiscreteToyData data;
    data.K = K;
    data.d = d;

    // Sparse support: distinct random atoms, at most half the state space.
    double space = std::pow(static_cast<double>(K), d);
    const int n_atoms = static_cast<int>(std::min(space / 2.0, static_cast<double>(std::max(4, 2 * K))));
    std::set<DiscreteState> seen;
    while (static_cast<int>(data.atoms.size()) < n_atoms) {
        DiscreteState atom(static_cast<std::size_t>(d));
        for (int i = 0; i < d; ++i) atom[static_cast<std::size_t>(i)] = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(K)));
        if (seen.insert(atom).second) data.atoms.push_back(atom);
    }
    double total = 0.0;
    for (int a = 0; a < n_atoms; ++a) {
        const double w = 0.5 + rng.uniform();
        data.probs.push_back(w);
        total += w;
    }
    for (double& p : data.probs) p /= total;

    std::vector<double> cdf(data.probs.size());
    double acc = 0.0;
    for (std::size_t a = 0; a < data.probs.size(); ++a) {
        acc += data.probs[a];
        cdf[a] = acc;
    }
    data.sequences.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform();
        const std::size_t a = static_cast<std::size_t>(
            std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
        data.sequences.push_back(data.atoms[std::min(a, data.atoms.size() - 1)]);
    }
    return data;
}

std::vector<SpherePoint> sphere_mixture_centers(int centers) {
    if (centers <= 0) throw ConfigError("sphere_mixture: centers must be positive");
    // Fixed, well-separated mode locations.
    static const std::vector<Vec3> bank = {
        {1.0, 0.0, 0.0},  {-0.5, 0.8, 0.2}, {0.0, -0.7, 0.7}, {-0.3, -0.5, -0.8},
        {0.7, 0.5, -0.5}, {0.0, 0.0, 1.0},  {0.0, 1.0, 0.0},  {-1.0, 0.1, 0.1},
    };
    if (centers > static_cast<int>(bank.size()))
        throw ConfigError("sphere_mixture supports at most 8 centers");
    std::vector<SpherePoint> out;
    for (int c = 0; c < centers; ++c) out.emplace_back(bank[static_cast<std::size_t>(c)]);
    return out;
}

std::vector<SpherePoint> sphere_mixture(int n, int centers, double concentration,
                                        std::uint64_t seed) {
    if (n <= 0) throw ConfigError("sphere_mixture: n must be positive");
    if (!(concentration > 0.0)) throw ConfigError("sphere_mixture: concentration must be positive");
    const std::vector<SpherePoint> modes = sphere_mixture_centers(centers);
    const double std_dev = 1.0 / std::sqrt(concentration);
    Rng rng(seed);
    std::vector<SpherePoint> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const SpherePoint& c = modes[static_cast<std::size_t>(rng.uniform_index(modes.size()))];
        const Vec3 g{std_dev * rng.normal(), std_dev * rng.normal(), std_dev * rng.normal()};
        TangentVector v = project(c, g);
        out.push_back(exp_map(c, v));
    }
    return out;
}

void write_points_csv(const std::string& path, const std::vector<std::vector<double>>& points,
                      const std::vector<int>* labels) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    if (points.empty()) throw ArgumentError("write_points_csv: no points");
    const std::size_t d = points.front().size();
    for (std::size_t j = 0; j < d; ++j) {
        if (j) out << ',';
        out << "x" << j;
    }
    if (labels) out << ",label";
    out << '\n';
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (points[i].size() != d) throw ArgumentError("write_points_csv: ragged rows");
        for (std::size_t j = 0; j < d; ++j) {
            if (j) out << ',';
            out << format_double(points[i][j]);
        }
        if (labels) out << ',' << (*labels)[i];
        out << '\n';
    }
    if (!out) throw IoError("failed writing: " + path);
}

LabeledPoints read_points_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open: " + path);
    std::string line;
    if (!std::getline(in, line)) throw IoError("empty csv: " + path);
    const bool labeled = line.size() >= 5 && line.substr(line.size() - 5) == "label";
    LabeledPoints out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
        if (labeled) {
            out.labels.push_back(static_cast<int>(std::llround(row.back())));
            row.pop_back();
        }
        out.points.push_back(std::move(row));
    }
    if (out.points.empty()) throw IoError("csv has no data rows: " + path);
    return out;
}

void write_tokens(const std::string& path, const std::vector<DiscreteState>& sequences) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    for (const auto& seq : sequences) {
        for (std::size_t i = 0; i < seq.size(); ++i) {
            if (i) out << ' ';
            out << seq[i];
        }
        out << '\n';
    }
    if (!out) throw IoError("failed writing: " + path);
}

std::vector<DiscreteState> read_tokens(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open: " + path);
    std::vector<DiscreteState> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        DiscreteState seq;
        std::stringstream ss(line);
        int tok;
        while (ss >> tok) seq.push_back(tok);
        out.push_back(std::move(seq));
    }
    if (out.empty()) throw IoError("token file has no sequences: " + path);
    return out;
}

void write_sphere_csv(const std::string& path, const std::vector<SpherePoint>& points) {
    std::vector<std::vector<double>> rows;
    rows.reserve(points.size());
    for (const auto& p : points) rows.push_back({p.v[0], p.v[1], p.v[2]});
    write_points_csv(path, rows);
}

std::vector<SpherePoint> read_sphere_csv(const std::string& path) {
    const LabeledPoints raw = read_points_csv(path);
    std::vector<SpherePoint> out;
    out.reserve(raw.points.size());
    for (const auto& row : raw.points) {
        if (row.size() != 3) throw IoError("sphere csv must have 3 columns: " + path);
        const double n = std::sqrt(row[0] * row[0] + row[1] * row[1] + row[2] * row[2]);
        if (std::abs(n - 1.0) > 1e-6) throw IoError("sphere csv row is not unit norm: " + path);
        out.emplace_back(Vec3{row[0], row[1], row[2]});
    }
    return out;
}

}  // namespace fmkit
