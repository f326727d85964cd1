// SPDX-License-Identifier: Apache-2.0
//
// Sub-mesh generation for meshes too large for one optimizer update: random
// neighbor sampling (overlapping, grown from a seed frontier) and a
// simplified multilevel partitioner (disjoint, covering, balanced).
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "meshmask/mesh_graph.hpp"

namespace meshmask::partition {

enum class Method { kNeighborSampling, kMetisLike };

struct Partition {
    Method method = Method::kMetisLike;
    std::vector<std::vector<int32_t>> parts;  // node-id sets
};

// Grows a frontier from a random seed node, adding random incident edges
// until the induced edge count reaches the budget or the component is
// exhausted. Returns the induced node set (sorted).
std::vector<int32_t> neighbor_sample(const mesh::MeshGraph& graph, int64_t edge_budget,
                                     uint64_t seed);

// Multilevel scheme: coarsen by heavy-edge matching, split the coarsest graph
// by balanced BFS growth, then refine with boundary swaps. Parts are disjoint,
// cover every node, and sizes stay within +-20% of N/n_parts.
Partition metis_like_partition(const mesh::MeshGraph& graph, int n_parts, uint64_t seed);

// Validates disjointness + coverage; throws on violation.
void check_partition(const Partition& p, int64_t n_nodes);

}  // namespace meshmask::partition
