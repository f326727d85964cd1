// SPDX-License-Identifier: Apache-2.0
#include "meshmask/masking.hpp"

#include <algorithm>
#include <numeric>
#include <queue>

namespace meshmask::masking {

MaskPlan sample_mask(const mesh::MeshGraph& graph, double ratio, uint64_t seed) {
    require(ratio >= 0.0 && ratio < 1.0, "mask: ratio must be in [0, 1)");
    const int64_t n = graph.num_nodes();
    const int64_t n_masked = int64_t(std::floor(ratio * double(n) + 0.5));  // round-half-up
    require(n_masked < n, "mask: ratio would mask all nodes");

    MaskPlan plan;
    plan.n = n;
    plan.ratio = ratio;
    plan.seed = seed;
    plan.masked.assign(size_t(n), 0);

    // partial Fisher-Yates over node ids
    Rng rng(seed);
    std::vector<int32_t> ids(static_cast<size_t>(n));
    std::iota(ids.begin(), ids.end(), 0);
    for (int64_t i = 0; i < n_masked; ++i) {
        const int64_t j = i + rng.uniform_index(n - i);
        std::swap(ids[size_t(i)], ids[size_t(j)]);
        plan.masked[size_t(ids[size_t(i)])] = 1;
    }

    plan.visible_index.reserve(size_t(n - n_masked));
    for (int64_t i = 0; i < n; ++i)
        if (!plan.masked[size_t(i)]) plan.visible_index.push_back(int32_t(i));

    for (size_t k = 0; k < graph.senders.size(); ++k) {
        const int32_t s = graph.senders[k], r = graph.receivers[k];
        if (!plan.masked[size_t(s)] && !plan.masked[size_t(r)]) {
            plan.surv_senders.push_back(s);
            plan.surv_receivers.push_back(r);
        }
    }
    return plan;
}

void khop_augment(const mesh::MeshGraph& graph, MaskPlan& plan, int k) {
    plan.k = std::max(k, 1);
    plan.khop_senders.clear();
    plan.khop_receivers.clear();
    if (k < 2) return;

    const mesh::Adjacency adj = mesh::build_adjacency(graph);
    const int64_t n = graph.num_nodes();
    std::vector<int32_t> dist(static_cast<size_t>(n));
    std::vector<int32_t> frontier, next;

    // BFS to depth k from every visible node over the original graph (masked
    // nodes still act as intermediate hops)
    for (int32_t src : plan.visible_index) {
        std::fill(dist.begin(), dist.end(), -1);
        dist[size_t(src)] = 0;
        frontier.assign(1, src);
        for (int32_t depth = 1; depth <= k && !frontier.empty(); ++depth) {
            next.clear();
            for (int32_t u : frontier) {
                for (int32_t e = adj.offsets[size_t(u)]; e < adj.offsets[size_t(u) + 1]; ++e) {
                    const int32_t v = adj.neighbors[size_t(e)];
                    if (dist[size_t(v)] != -1) continue;
                    dist[size_t(v)] = depth;
                    next.push_back(v);
                    if (depth >= 2 && !plan.masked[size_t(v)]) {
                        plan.khop_senders.push_back(src);
                        plan.khop_receivers.push_back(v);
                    }
                }
            }
            frontier.swap(next);
        }
    }
}

CompactSubgraph compact_subgraph(const mesh::MeshGraph& graph, const MaskPlan& plan) {
    CompactSubgraph out;
    out.to_original = plan.visible_index;
    const int64_t n_vis = int64_t(plan.visible_index.size());

    std::vector<int32_t> to_sub(size_t(plan.n), -1);
    for (int64_t i = 0; i < n_vis; ++i) to_sub[size_t(plan.visible_index[size_t(i)])] = int32_t(i);

    out.sub.dim = graph.dim;
    out.sub.positions.resize(size_t(n_vis) * graph.dim);
    out.sub.node_type.resize(size_t(n_vis));
    for (int64_t i = 0; i < n_vis; ++i) {
        const int32_t orig = plan.visible_index[size_t(i)];
        std::copy(graph.position(orig), graph.position(orig) + graph.dim,
                  out.sub.positions.begin() + i * graph.dim);
        out.sub.node_type[size_t(i)] = graph.node_type[size_t(orig)];
    }

    const size_t total = plan.surv_senders.size() + plan.khop_senders.size();
    out.sub.senders.reserve(total);
    out.sub.receivers.reserve(total);
    out.edge_is_shortcut.reserve(total);
    for (size_t e = 0; e < plan.surv_senders.size(); ++e) {
        out.sub.senders.push_back(to_sub[size_t(plan.surv_senders[e])]);
        out.sub.receivers.push_back(to_sub[size_t(plan.surv_receivers[e])]);
        out.edge_is_shortcut.push_back(0);
    }
    for (size_t e = 0; e < plan.khop_senders.size(); ++e) {
        out.sub.senders.push_back(to_sub[size_t(plan.khop_senders[e])]);
        out.sub.receivers.push_back(to_sub[size_t(plan.khop_receivers[e])]);
        out.edge_is_shortcut.push_back(1);
    }
    return out;
}

}  // namespace meshmask::masking
