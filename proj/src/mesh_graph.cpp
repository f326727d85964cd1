// SPDX-License-Identifier: Apache-2.0
#include "meshmask/mesh_graph.hpp"

#include <algorithm>
#include <set>

namespace meshmask::mesh {

void MeshGraph::validate() const {
    const int64_t n = num_nodes();
    require(int64_t(positions.size()) == n * dim, "mesh: positions size mismatch");
    require(senders.size() == receivers.size(), "mesh: sender/receiver count mismatch");
    std::set<std::pair<int32_t, int32_t>> seen;
    for (size_t k = 0; k < senders.size(); ++k) {
        const int32_t s = senders[k], r = receivers[k];
        require(s >= 0 && s < n && r >= 0 && r < n, "mesh: edge index out of range");
        require(s != r, "mesh: self loop at node " + std::to_string(s));
        require(seen.insert({s, r}).second, "mesh: duplicate directed edge (" +
                                                std::to_string(s) + "," + std::to_string(r) + ")");
    }
    for (const auto& [s, r] : seen)
        require(seen.count({r, s}) == 1, "mesh: missing reverse edge for (" +
                                             std::to_string(s) + "," + std::to_string(r) + ")");
    for (int32_t t : node_type)
        require(t >= 0 && t < kNodeTypeCount, "mesh: node type out of range");
    if (!cells.empty()) {
        require(int64_t(cells.size()) % (dim + 1) == 0, "mesh: cell array size mismatch");
        for (int32_t v : cells) require(v >= 0 && v < n, "mesh: cell index out of range");
    }
}

Adjacency build_adjacency(const MeshGraph& g) {
    const int64_t n = g.num_nodes();
    Adjacency adj;
    adj.offsets.assign(size_t(n + 1), 0);
    for (int32_t s : g.senders) adj.offsets[size_t(s) + 1]++;
    for (int64_t i = 0; i < n; ++i) adj.offsets[size_t(i) + 1] += adj.offsets[size_t(i)];
    adj.neighbors.resize(g.senders.size());
    std::vector<int32_t> cursor(adj.offsets.begin(), adj.offsets.end() - 1);
    for (size_t k = 0; k < g.senders.size(); ++k)
        adj.neighbors[size_t(cursor[size_t(g.senders[k])]++)] = g.receivers[k];
    for (int64_t i = 0; i < n; ++i)
        std::sort(adj.neighbors.begin() + adj.offsets[size_t(i)],
                  adj.neighbors.begin() + adj.offsets[size_t(i) + 1]);
    return adj;
}

std::vector<std::pair<int32_t, int32_t>> undirected_edges(const MeshGraph& g) {
    std::vector<std::pair<int32_t, int32_t>> out;
    out.reserve(g.senders.size() / 2);
    for (size_t k = 0; k < g.senders.size(); ++k)
        if (g.senders[k] < g.receivers[k]) out.emplace_back(g.senders[k], g.receivers[k]);
    std::sort(out.begin(), out.end());
    return out;
}

void set_edges_from_pairs(MeshGraph& g, const std::vector<std::pair<int32_t, int32_t>>& pairs) {
    std::set<std::pair<int32_t, int32_t>> dir;
    for (const auto& [a, b] : pairs) {
        if (a == b) continue;
        dir.insert({a, b});
        dir.insert({b, a});
    }
    g.senders.clear();
    g.receivers.clear();
    g.senders.reserve(dir.size());
    g.receivers.reserve(dir.size());
    for (const auto& [s, r] : dir) {
        g.senders.push_back(s);
        g.receivers.push_back(r);
    }
}

}  // namespace meshmask::mesh
