// SPDX-License-Identifier: Apache-2.0
#include "meshmask/partition.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <queue>
#include <set>

namespace meshmask::partition {

namespace {

// weighted graph used during coarsening
struct WGraph {
    std::vector<int32_t> weight;                          // node weights
    std::vector<std::vector<std::pair<int32_t, int32_t>>> adj;  // (neighbor, edge weight)
    int64_t n() const { return int64_t(weight.size()); }
};

WGraph to_wgraph(const mesh::MeshGraph& g) {
    WGraph w;
    w.weight.assign(size_t(g.num_nodes()), 1);
    w.adj.resize(size_t(g.num_nodes()));
    for (const auto& [a, b] : mesh::undirected_edges(g)) {
        w.adj[size_t(a)].push_back({b, 1});
        w.adj[size_t(b)].push_back({a, 1});
    }
    return w;
}

struct CoarseMap {
    WGraph graph;
    std::vector<int32_t> fine_to_coarse;
};

// one round of heavy-edge matching; merged node weights are capped
CoarseMap coarsen_once(const WGraph& g, int32_t max_weight, Rng& rng) {
    const int64_t n = g.n();
    std::vector<int32_t> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    for (int64_t i = n - 1; i > 0; --i)
        std::swap(order[size_t(i)], order[size_t(rng.uniform_index(i + 1))]);

    std::vector<int32_t> match(size_t(n), -1);
    for (int32_t u : order) {
        if (match[size_t(u)] != -1) continue;
        int32_t best = -1, best_w = -1;
        for (const auto& [v, w] : g.adj[size_t(u)]) {
            if (match[size_t(v)] != -1 || v == u) continue;
            if (g.weight[size_t(u)] + g.weight[size_t(v)] > max_weight) continue;
            if (w > best_w) {
                best_w = w;
                best = v;
            }
        }
        if (best != -1) {
            match[size_t(u)] = best;
            match[size_t(best)] = u;
        } else {
            match[size_t(u)] = u;
        }
    }

    CoarseMap cm;
    cm.fine_to_coarse.assign(size_t(n), -1);
    int32_t next = 0;
    for (int64_t u = 0; u < n; ++u) {
        if (cm.fine_to_coarse[size_t(u)] != -1) continue;
        const int32_t m = match[size_t(u)];
        cm.fine_to_coarse[size_t(u)] = next;
        if (m != int32_t(u)) cm.fine_to_coarse[size_t(m)] = next;
        ++next;
    }
    cm.graph.weight.assign(size_t(next), 0);
    for (int64_t u = 0; u < n; ++u)
        cm.graph.weight[size_t(cm.fine_to_coarse[size_t(u)])] += g.weight[size_t(u)];
    std::vector<std::map<int32_t, int32_t>> acc(static_cast<size_t>(next));
    for (int64_t u = 0; u < n; ++u) {
        const int32_t cu = cm.fine_to_coarse[size_t(u)];
        for (const auto& [v, w] : g.adj[size_t(u)]) {
            const int32_t cv = cm.fine_to_coarse[size_t(v)];
            if (cu != cv) acc[size_t(cu)][cv] += w;
        }
    }
    cm.graph.adj.resize(size_t(next));
    for (int32_t c = 0; c < next; ++c)
        for (const auto& [v, w] : acc[size_t(c)]) cm.graph.adj[size_t(c)].push_back({v, w});
    return cm;
}

// balanced BFS growth over the (weighted) graph
std::vector<int32_t> grow_initial(const WGraph& g, int n_parts, Rng& rng) {
    const int64_t n = g.n();
    const double total = double(std::accumulate(g.weight.begin(), g.weight.end(), int64_t(0)));
    const double target = total / double(n_parts);
    std::vector<int32_t> part(size_t(n), -1);
    std::vector<double> part_weight(size_t(n_parts), 0.0);
    int64_t assigned = 0;

    for (int p = 0; p < n_parts; ++p) {
        if (assigned == n) break;
        // seed: random unassigned node
        int32_t seed = -1;
        int64_t tries = 0;
        while (seed == -1 && tries++ < 4 * n) {
            const int32_t cand = int32_t(rng.uniform_index(n));
            if (part[size_t(cand)] == -1) seed = cand;
        }
        if (seed == -1)
            for (int64_t u = 0; u < n && seed == -1; ++u)
                if (part[size_t(u)] == -1) seed = int32_t(u);
        std::queue<int32_t> q;
        q.push(seed);
        const bool last = p == n_parts - 1;
        while (assigned < n && (last || part_weight[size_t(p)] < target)) {
            if (q.empty()) {
                // component exhausted; jump to any unassigned node
                int32_t jump = -1;
                for (int64_t u = 0; u < n && jump == -1; ++u)
                    if (part[size_t(u)] == -1) jump = int32_t(u);
                if (jump == -1) break;
                q.push(jump);
            }
            const int32_t u = q.front();
            q.pop();
            if (part[size_t(u)] != -1) continue;
            part[size_t(u)] = int32_t(p);
            part_weight[size_t(p)] += double(g.weight[size_t(u)]);
            ++assigned;
            for (const auto& [v, w] : g.adj[size_t(u)])
                if (part[size_t(v)] == -1) q.push(v);
        }
    }
    // any stragglers go to the lightest part
    for (int64_t u = 0; u < n; ++u) {
        if (part[size_t(u)] != -1) continue;
        const int p = int(std::min_element(part_weight.begin(), part_weight.end()) -
                          part_weight.begin());
        part[size_t(u)] = int32_t(p);
        part_weight[size_t(p)] += double(g.weight[size_t(u)]);
    }
    return part;
}

// boundary swaps in the Kernighan-Lin spirit: move a node to a neighboring
// part when it reduces the cut and keeps both parts inside the weight bounds
void refine(const WGraph& g, std::vector<int32_t>& part, int n_parts, double lo, double hi,
            int passes) {
    const int64_t n = g.n();
    std::vector<double> part_weight(size_t(n_parts), 0.0);
    for (int64_t u = 0; u < n; ++u) part_weight[size_t(part[size_t(u)])] += g.weight[size_t(u)];

    for (int pass = 0; pass < passes; ++pass) {
        bool moved = false;
        for (int64_t u = 0; u < n; ++u) {
            const int32_t pu = part[size_t(u)];
            std::map<int32_t, int32_t> link;
            for (const auto& [v, w] : g.adj[size_t(u)]) link[part[size_t(v)]] += w;
            int32_t best_part = pu;
            int32_t best_gain = 0;
            for (const auto& [pv, w] : link) {
                if (pv == pu) continue;
                const int32_t gain = w - (link.count(pu) ? link[pu] : 0);
                const double wu = double(g.weight[size_t(u)]);
                if (part_weight[size_t(pu)] - wu < lo) continue;
                if (part_weight[size_t(pv)] + wu > hi) continue;
                if (gain > best_gain) {
                    best_gain = gain;
                    best_part = pv;
                }
            }
            if (best_part != pu) {
                part_weight[size_t(pu)] -= double(g.weight[size_t(u)]);
                part_weight[size_t(best_part)] += double(g.weight[size_t(u)]);
                part[size_t(u)] = best_part;
                moved = true;
            }
        }
        if (!moved) break;
    }
}

// moves nodes from overweight to underweight parts until every part sits
// inside [lo, hi]; prefers boundary nodes adjacent to the destination
void rebalance(const WGraph& g, std::vector<int32_t>& part, int n_parts, double lo, double hi) {
    const int64_t n = g.n();
    std::vector<double> part_weight(size_t(n_parts), 0.0);
    for (int64_t u = 0; u < n; ++u) part_weight[size_t(part[size_t(u)])] += g.weight[size_t(u)];

    for (int64_t guard = 0; guard < 4 * n; ++guard) {
        int heavy = int(std::max_element(part_weight.begin(), part_weight.end()) -
                        part_weight.begin());
        int light = int(std::min_element(part_weight.begin(), part_weight.end()) -
                        part_weight.begin());
        const bool bad = part_weight[size_t(heavy)] > hi || part_weight[size_t(light)] < lo;
        if (!bad || heavy == light) break;
        // candidate: node in heavy, preferably adjacent to light
        int32_t pick = -1, pick_neutral = -1;
        for (int64_t u = 0; u < n; ++u) {
            if (part[size_t(u)] != heavy) continue;
            if (pick_neutral == -1) pick_neutral = int32_t(u);
            for (const auto& [v, w] : g.adj[size_t(u)])
                if (part[size_t(v)] == light) {
                    pick = int32_t(u);
                    break;
                }
            if (pick != -1) break;
        }
        if (pick == -1) pick = pick_neutral;
        if (pick == -1) break;
        part_weight[size_t(heavy)] -= double(g.weight[size_t(pick)]);
        part_weight[size_t(light)] += double(g.weight[size_t(pick)]);
        part[size_t(pick)] = int32_t(light);
    }
}

}  // namespace

std::vector<int32_t> neighbor_sample(const mesh::MeshGraph& graph, int64_t edge_budget,
                                     uint64_t seed) {
    require(graph.num_nodes() > 0, "neighbor_sample: empty graph");
    require(edge_budget >= 1, "neighbor_sample: edge budget must be >= 1");
    const mesh::Adjacency adj = mesh::build_adjacency(graph);
    Rng rng(seed);

    std::vector<uint8_t> in_set(size_t(graph.num_nodes()), 0);
    std::vector<int32_t> nodes;
    std::vector<std::pair<int32_t, int32_t>> frontier;  // (inside, outside)
    int64_t induced = 0;

    auto add_node = [&](int32_t u) {
        in_set[size_t(u)] = 1;
        nodes.push_back(u);
        for (int32_t e = adj.offsets[size_t(u)]; e < adj.offsets[size_t(u) + 1]; ++e) {
            const int32_t v = adj.neighbors[size_t(e)];
            if (in_set[size_t(v)])
                ++induced;  // undirected edge (u,v) fully inside now
            else
                frontier.push_back({u, v});
        }
    };

    add_node(int32_t(rng.uniform_index(graph.num_nodes())));
    while (induced < edge_budget && !frontier.empty()) {
        const int64_t pick = rng.uniform_index(int64_t(frontier.size()));
        const auto [u, v] = frontier[size_t(pick)];
        frontier[size_t(pick)] = frontier.back();
        frontier.pop_back();
        if (in_set[size_t(v)]) continue;  // stale entry
        add_node(v);
    }
    std::sort(nodes.begin(), nodes.end());
    return nodes;
}

Partition metis_like_partition(const mesh::MeshGraph& graph, int n_parts, uint64_t seed) {
    const int64_t n = graph.num_nodes();
    require(n_parts >= 1, "metis_like: n_parts must be >= 1");
    require(int64_t(n_parts) <= n, "metis_like: more parts than nodes");

    Partition out;
    out.method = Method::kMetisLike;
    if (n_parts == 1) {
        out.parts.emplace_back();
        for (int64_t u = 0; u < n; ++u) out.parts[0].push_back(int32_t(u));
        return out;
    }

    Rng rng(seed);
    const double target = double(n) / double(n_parts);
    const double lo = 0.8 * target;
    const double hi = 1.2 * target;
    const int32_t max_node_weight = std::max<int32_t>(1, int32_t(target / 3.0));

    // coarsening
    std::vector<CoarseMap> chain;
    WGraph cur = to_wgraph(graph);
    const int64_t coarse_stop = std::max<int64_t>(int64_t(n_parts) * 8, 32);
    while (cur.n() > coarse_stop) {
        CoarseMap cm = coarsen_once(cur, max_node_weight, rng);
        if (cm.graph.n() >= cur.n()) break;  // no progress
        chain.push_back(std::move(cm));
        cur = chain.back().graph;
    }

    // initial partition + refinement at the coarsest level
    std::vector<int32_t> part = grow_initial(cur, n_parts, rng);
    refine(cur, part, n_parts, lo, hi, 4);

    // uncoarsen, refining at each level
    for (size_t ci = chain.size(); ci-- > 0;) {
        const CoarseMap& cm = chain[ci];
        std::vector<int32_t> fine_part(cm.fine_to_coarse.size());
        for (size_t u = 0; u < fine_part.size(); ++u)
            fine_part[u] = part[size_t(cm.fine_to_coarse[u])];
        part = std::move(fine_part);
        if (ci > 0) {
            refine(chain[ci - 1].graph, part, n_parts, lo, hi, 2);
        }
    }

    // final balance guarantee on the original graph
    WGraph base = to_wgraph(graph);
    refine(base, part, n_parts, lo, hi, 2);
    rebalance(base, part, n_parts, lo, hi);

    out.parts.assign(size_t(n_parts), {});
    for (int64_t u = 0; u < n; ++u) out.parts[size_t(part[size_t(u)])].push_back(int32_t(u));
    check_partition(out, n);
    return out;
}

void check_partition(const Partition& p, int64_t n_nodes) {
    std::vector<int32_t> seen(size_t(n_nodes), 0);
    for (const auto& part : p.parts)
        for (int32_t u : part) {
            require(u >= 0 && int64_t(u) < n_nodes, "partition: node id out of range");
            seen[size_t(u)] += 1;
        }
    for (int64_t u = 0; u < n_nodes; ++u) {
        require(seen[size_t(u)] >= 1, "partition: node " + std::to_string(u) + " uncovered");
        if (p.method == Method::kMetisLike)
            require(seen[size_t(u)] == 1, "partition: node " + std::to_string(u) + " duplicated");
    }
}

}  // namespace meshmask::partition
