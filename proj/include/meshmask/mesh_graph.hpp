// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "meshmask/common.hpp"

namespace meshmask::mesh {

enum NodeType : int32_t {
    kFluid = 0,
    kInflow = 1,
    kOutflow = 2,
    kWall = 3,
};
constexpr int kNodeTypeCount = 4;

// Undirected mesh stored as directed edge pairs: for every mesh edge {i,j}
// both (i,j) and (j,i) appear exactly once.
struct MeshGraph {
    int32_t dim = 2;                  // spatial dimension d
    std::vector<float> positions;     // [N * dim]
    std::vector<int32_t> node_type;   // [N]
    std::vector<int32_t> senders;     // [E]
    std::vector<int32_t> receivers;   // [E]
    std::vector<int32_t> cells;       // [T * (dim+1)], optional simplex connectivity

    int64_t num_nodes() const { return int64_t(node_type.size()); }
    int64_t num_edges() const { return int64_t(senders.size()); }
    int64_t num_cells() const {
        return cells.empty() ? 0 : int64_t(cells.size()) / (dim + 1);
    }

    const float* position(int64_t i) const { return positions.data() + i * dim; }

    // Checks the structural invariants: no self loops, indices in range, no
    // duplicate directed edge, and both directions present for every edge.
    void validate() const;
};

// Adjacency in CSR form, built from the directed edge list.
struct Adjacency {
    std::vector<int32_t> offsets;    // [N+1]
    std::vector<int32_t> neighbors;  // [E], receiver ids grouped by sender
};

Adjacency build_adjacency(const MeshGraph& g);

// Undirected edge list with s < r, one entry per mesh edge.
std::vector<std::pair<int32_t, int32_t>> undirected_edges(const MeshGraph& g);

// Builds the canonical directed edge arrays (both directions per undirected
// pair, deduplicated, sorted by (sender, receiver)).
void set_edges_from_pairs(MeshGraph& g, const std::vector<std::pair<int32_t, int32_t>>& pairs);

}  // namespace meshmask::mesh
