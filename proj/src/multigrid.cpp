// SPDX-License-Identifier: Apache-2.0
#include "meshmask/multigrid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace meshmask::model {

namespace {

// lexicographic comparison of node positions
bool pos_less(const float* a, const float* b, int dim) {
    for (int j = 0; j < dim; ++j) {
        if (a[j] < b[j]) return true;
        if (a[j] > b[j]) return false;
    }
    return false;
}

double sq_dist(const float* a, const float* b, int dim) {
    double s = 0;
    for (int j = 0; j < dim; ++j) {
        const double d = double(a[j]) - double(b[j]);
        s += d * d;
    }
    return s;
}

}  // namespace

MgLevel build_mg_level(const mesh::MeshGraph& fine) {
    const int64_t n = fine.num_nodes();
    require(n >= 2, "downscale: level needs at least 2 nodes");
    const int dim = fine.dim;
    const int64_t n_coarse = (n + 1) / 2;  // ceil(0.5 * N)

    MgLevel level;
    level.seeds.reserve(size_t(n_coarse));

    // start at the lexicographically smallest position
    int32_t start = 0;
    for (int64_t i = 1; i < n; ++i)
        if (pos_less(fine.position(i), fine.position(start), dim)) start = int32_t(i);
    level.seeds.push_back(start);

    std::vector<double> min_dist(size_t(n), std::numeric_limits<double>::infinity());
    for (int64_t i = 0; i < n; ++i)
        min_dist[size_t(i)] = sq_dist(fine.position(i), fine.position(start), dim);

    while (int64_t(level.seeds.size()) < n_coarse) {
        int32_t best = -1;
        for (int64_t i = 0; i < n; ++i) {
            if (min_dist[size_t(i)] == 0.0) continue;
            if (best < 0 || min_dist[size_t(i)] > min_dist[size_t(best)] ||
                (min_dist[size_t(i)] == min_dist[size_t(best)] &&
                 pos_less(fine.position(i), fine.position(best), dim)))
                best = int32_t(i);
        }
        require(best >= 0, "downscale: ran out of distinct positions");
        level.seeds.push_back(best);
        for (int64_t i = 0; i < n; ++i)
            min_dist[size_t(i)] =
                std::min(min_dist[size_t(i)], sq_dist(fine.position(i), fine.position(best), dim));
    }

    // nearest-seed assignment, ties broken on seed position
    level.assign.assign(size_t(n), -1);
    std::vector<int32_t> counts(size_t(n_coarse), 0);
    for (int64_t i = 0; i < n; ++i) {
        int32_t best_c = 0;
        double best_d = sq_dist(fine.position(i), fine.position(level.seeds[0]), dim);
        for (int64_t c = 1; c < n_coarse; ++c) {
            const double d = sq_dist(fine.position(i), fine.position(level.seeds[size_t(c)]), dim);
            if (d < best_d || (d == best_d && pos_less(fine.position(level.seeds[size_t(c)]),
                                                       fine.position(level.seeds[size_t(best_c)]),
                                                       dim))) {
                best_d = d;
                best_c = int32_t(c);
            }
        }
        level.assign[size_t(i)] = best_c;
        counts[size_t(best_c)] += 1;
    }
    level.inv_cluster.resize(size_t(n_coarse));
    for (int64_t c = 0; c < n_coarse; ++c) {
        require(counts[size_t(c)] > 0, "downscale: empty cluster");
        level.inv_cluster[size_t(c)] = 1.0f / float(counts[size_t(c)]);
    }

    level.coarse.dim = dim;
    level.coarse.positions.resize(size_t(n_coarse) * dim);
    level.coarse.node_type.assign(size_t(n_coarse), mesh::kFluid);
    for (int64_t c = 0; c < n_coarse; ++c)
        std::copy(fine.position(level.seeds[size_t(c)]), fine.position(level.seeds[size_t(c)]) + dim,
                  level.coarse.positions.begin() + c * dim);

    std::set<std::pair<int32_t, int32_t>> coarse_edges;
    for (size_t k = 0; k < fine.senders.size(); ++k) {
        const int32_t cs = level.assign[size_t(fine.senders[k])];
        const int32_t cr = level.assign[size_t(fine.receivers[k])];
        if (cs != cr) coarse_edges.insert({cs, cr});
    }
    level.coarse.senders.reserve(coarse_edges.size());
    level.coarse.receivers.reserve(coarse_edges.size());
    for (const auto& [s, r] : coarse_edges) {
        level.coarse.senders.push_back(s);
        level.coarse.receivers.push_back(r);
    }
    return level;
}

MgHierarchy build_mg_hierarchy(const mesh::MeshGraph& base, int n_levels) {
    MgHierarchy h;
    const mesh::MeshGraph* cur = &base;
    for (int l = 0; l < n_levels; ++l) {
        h.levels.push_back(build_mg_level(*cur));
        cur = &h.levels.back().coarse;
    }
    return h;
}

}  // namespace meshmask::model
