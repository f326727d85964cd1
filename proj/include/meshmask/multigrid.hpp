// SPDX-License-Identifier: Apache-2.0
//
// Geometric coarsening for the multigrid processor. Each level halves the
// node count: seeds are chosen by farthest-point traversal on positions,
// every fine node joins its nearest seed, and coarse edges connect seeds
// whose clusters are adjacent in the fine graph.
#pragma once

#include <cstdint>
#include <vector>

#include "meshmask/mesh_graph.hpp"

namespace meshmask::model {

struct MgLevel {
    std::vector<int32_t> seeds;        // fine ids of the selected seeds
    std::vector<int32_t> assign;       // [N_fine] fine node -> coarse id
    std::vector<float> inv_cluster;    // [N_coarse] 1 / cluster size
    mesh::MeshGraph coarse;            // coarse positions + edges
};

struct MgHierarchy {
    std::vector<MgLevel> levels;  // levels[l] coarsens level l to l+1
};

// Coarsens one level at ratio 0.5 (ceil(N/2) seeds). Deterministic and
// permutation-invariant: traversal starts at the lexicographically smallest
// position and all ties break on positions.
MgLevel build_mg_level(const mesh::MeshGraph& fine);

MgHierarchy build_mg_hierarchy(const mesh::MeshGraph& base, int n_levels);

}  // namespace meshmask::model
