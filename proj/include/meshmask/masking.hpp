// SPDX-License-Identifier: Apache-2.0
//
// Node masking for pretraining: masked nodes are removed from the mesh
// together with every incident edge; optional K-hop shortcut edges reconnect
// visible nodes that were within distance K in the original graph.
#pragma once

#include <cstdint>
#include <vector>

#include "meshmask/features.hpp"
#include "meshmask/mesh_graph.hpp"
#include "meshmask/tensor.hpp"

namespace meshmask::masking {

struct MaskPlan {
    int64_t n = 0;
    std::vector<uint8_t> masked;           // [N]
    std::vector<int32_t> visible_index;    // original ids of surviving nodes
    std::vector<int32_t> surv_senders;     // surviving original edges
    std::vector<int32_t> surv_receivers;
    std::vector<int32_t> khop_senders;     // shortcut edges over original ids
    std::vector<int32_t> khop_receivers;
    double ratio = 0.0;
    int k = 1;
    uint64_t seed = 0;

    int64_t masked_count() const { return n - int64_t(visible_index.size()); }
};

// Uniform sample without replacement of round(ratio*N) nodes (round-half-up),
// deterministic for a fixed seed. k-hop edges are not populated here.
MaskPlan sample_mask(const mesh::MeshGraph& graph, double ratio, uint64_t seed);

// Adds both directions of every visible pair at original-graph distance in
// [2, k]. k < 2 is a no-op.
void khop_augment(const mesh::MeshGraph& graph, MaskPlan& plan, int k);

struct CompactSubgraph {
    mesh::MeshGraph sub;                  // visible nodes densely reindexed
    std::vector<int32_t> to_original;     // [N_vis] sub id -> original id
    std::vector<uint8_t> edge_is_shortcut;  // per sub edge
};

// Reindexes visible nodes densely; sub edge list = surviving + k-hop edges.
CompactSubgraph compact_subgraph(const mesh::MeshGraph& graph, const MaskPlan& plan);

template <class S>
struct ReinsertedMesh {
    ad::Tensor<S> latents;        // [N, p]; masked rows equal the token
    std::vector<S> edge_geometry; // full original mesh edge features
};

// Rebuilds the full mesh after encoding: masked rows get the shared learnable
// token, visible rows get the encoder outputs, and the edge set reverts to
// the original mesh edges with geometric features (shortcut edges dropped).
template <class S>
ReinsertedMesh<S> reinsert(const ad::Tensor<S>& encoded, const MaskPlan& plan,
                           const ad::Tensor<S>& mask_token, const mesh::MeshGraph& graph,
                           bool flag_channel = false) {
    ReinsertedMesh<S> out;
    out.latents = ad::reinsert_rows(encoded, mask_token, plan.visible_index, plan.n);
    out.edge_geometry = mesh::build_edge_features<S>(graph, flag_channel, nullptr);
    return out;
}

}  // namespace meshmask::masking
