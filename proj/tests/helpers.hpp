// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "meshmask/mesh_graph.hpp"
#include "meshmask/tensor.hpp"

namespace testutil {

// max relative error between analytic gradients and central finite
// differences of f around x
inline double fd_max_rel_error(const std::function<double(const std::vector<double>&)>& f,
                               const std::vector<double>& x,
                               const std::vector<double>& analytic, double h = 1e-6) {
    double worst = 0.0;
    std::vector<double> xp = x;
    for (size_t i = 0; i < x.size(); ++i) {
        xp[i] = x[i] + h;
        const double fp = f(xp);
        xp[i] = x[i] - h;
        const double fm = f(xp);
        xp[i] = x[i];
        const double numeric = (fp - fm) / (2.0 * h);
        const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-2});
        worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
    }
    return worst;
}

inline std::vector<double> random_vector(size_t n, meshmask::Rng& rng, double lo = -1.0,
                                         double hi = 1.0) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(lo, hi);
    return v;
}

inline std::vector<float> random_vector_f(size_t n, meshmask::Rng& rng, double lo = -1.0,
                                          double hi = 1.0) {
    std::vector<float> v(n);
    for (auto& x : v) x = float(rng.uniform(lo, hi));
    return v;
}

// small connected random graph: a path plus extra random chords
inline meshmask::mesh::MeshGraph random_graph(int n, int extra_edges, meshmask::Rng& rng) {
    meshmask::mesh::MeshGraph g;
    g.dim = 2;
    for (int i = 0; i < n; ++i) {
        g.positions.push_back(float(rng.uniform(0.0, 1.0)));
        g.positions.push_back(float(rng.uniform(0.0, 1.0)));
        g.node_type.push_back(int32_t(rng.uniform_index(4)));
    }
    std::vector<std::pair<int32_t, int32_t>> pairs;
    for (int i = 0; i + 1 < n; ++i) pairs.push_back({i, i + 1});
    for (int e = 0; e < extra_edges; ++e) {
        const int a = int(rng.uniform_index(n));
        const int b = int(rng.uniform_index(n));
        if (a != b) pairs.push_back({std::min(a, b), std::max(a, b)});
    }
    meshmask::mesh::set_edges_from_pairs(g, pairs);
    return g;
}

// triangulated strip of two rows, unique positions
inline meshmask::mesh::MeshGraph tiny_mesh(int cols) {
    meshmask::mesh::MeshGraph g;
    g.dim = 2;
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < cols; ++c) {
            g.positions.push_back(float(c) * 0.5f + float(r) * 0.07f);
            g.positions.push_back(float(r) * 0.4f + float(c) * 0.013f);
            g.node_type.push_back(c == 0 ? meshmask::mesh::kInflow
                                         : (c == cols - 1 ? meshmask::mesh::kOutflow
                                                          : meshmask::mesh::kFluid));
        }
    std::vector<std::pair<int32_t, int32_t>> pairs;
    auto id = [cols](int r, int c) { return int32_t(r * cols + c); };
    for (int c = 0; c + 1 < cols; ++c) {
        pairs.push_back({id(0, c), id(0, c + 1)});
        pairs.push_back({id(1, c), id(1, c + 1)});
        pairs.push_back({id(0, c), id(1, c)});
        pairs.push_back({id(0, c), id(1, c + 1)});
    }
    pairs.push_back({id(0, cols - 1), id(1, cols - 1)});
    meshmask::mesh::set_edges_from_pairs(g, pairs);
    return g;
}

}  // namespace testutil
