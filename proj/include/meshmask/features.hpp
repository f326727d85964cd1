// SPDX-License-Identifier: Apache-2.0
//
// Node and edge feature construction. Node features concatenate, in fixed
// order: dynamic fields, optional backward-difference history, one-hot node
// type, globals, optional positions, optional next-step inflow.
#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "meshmask/trajectory.hpp"

namespace meshmask::mesh {

enum class TargetMode { kNextStep, kReconstruction };

struct FeatureConfig {
    bool history = false;       // first-order backward difference of the fields
    bool positions = false;     // raw node positions as inputs
    bool next_inflow = false;   // inflow_series[t+1] broadcast per node
    bool khop_flag = false;     // extra edge channel marking shortcut edges
    int node_type_count = kNodeTypeCount;
};

// Channel layout of the node feature vector; width is a pure function of the
// config and dataset metadata.
struct FeatureLayout {
    int q = 0;          // dynamic field count
    int g = 0;          // globals count
    int d = 0;          // spatial dimension
    FeatureConfig cfg;

    int width() const {
        return q + (cfg.history ? q : 0) + cfg.node_type_count + g +
               (cfg.positions ? d : 0) + (cfg.next_inflow ? 1 : 0);
    }
    // channels that carry dynamical variables (fields + history); these are
    // the only ones that receive training noise
    int noisy_channels() const { return q + (cfg.history ? q : 0); }
    int edge_width() const { return d + 1 + (cfg.khop_flag ? 1 : 0); }
};

template <class S>
std::vector<S> build_node_features_from_state(const MeshGraph& graph, const S* state,
                                              const S* prev_state,
                                              const std::vector<float>& globals,
                                              float next_inflow, const FeatureLayout& layout) {
    const int64_t n = graph.num_nodes();
    const int f = layout.width();
    const auto& cfg = layout.cfg;
    require(!cfg.history || prev_state != nullptr,
            "features: history requested but no previous state available");
    std::vector<S> out(size_t(n) * f);
    for (int64_t i = 0; i < n; ++i) {
        S* row = out.data() + i * f;
        int c = 0;
        for (int j = 0; j < layout.q; ++j) row[c++] = state[i * layout.q + j];
        if (cfg.history)
            for (int j = 0; j < layout.q; ++j)
                row[c++] = state[i * layout.q + j] - prev_state[i * layout.q + j];
        for (int j = 0; j < cfg.node_type_count; ++j)
            row[c++] = graph.node_type[size_t(i)] == j ? S(1) : S(0);
        for (int j = 0; j < layout.g; ++j) row[c++] = S(globals[size_t(j)]);
        if (cfg.positions)
            for (int j = 0; j < layout.d; ++j) row[c++] = S(graph.position(i)[j]);
        if (cfg.next_inflow) row[c++] = S(next_inflow);
    }
    return out;
}

template <class S>
std::vector<S> build_node_features(const Trajectory& traj, int64_t t, const FeatureLayout& layout) {
    require(t >= 0 && t < traj.n_steps - 1, "features: step index out of range");
    if (layout.cfg.history) require(t >= 1, "features: history requires t >= 1");
    if (layout.cfg.next_inflow)
        require(traj.has_inflow(), "features: next-step inflow requested but absent");
    const int64_t n = traj.graph.num_nodes();
    std::vector<S> state(size_t(n) * layout.q);
    std::vector<S> prev;
    const float* ft = traj.fields_at(t);
    for (size_t i = 0; i < state.size(); ++i) state[i] = S(ft[i]);
    if (layout.cfg.history) {
        prev.resize(state.size());
        const float* fp = traj.fields_at(t - 1);
        for (size_t i = 0; i < prev.size(); ++i) prev[i] = S(fp[i]);
    }
    const float next_inflow =
        layout.cfg.next_inflow ? traj.inflow_series[size_t(t + 1)] : 0.0f;
    return build_node_features_from_state<S>(traj.graph, state.data(),
                                             prev.empty() ? nullptr : prev.data(),
                                             traj.globals, next_inflow, layout);
}

// Row k = (u_{r_k} - u_{s_k}, ||u_{r_k} - u_{s_k}||): receiver minus sender.
// When a flag channel is configured, `is_shortcut` marks shortcut edges; pass
// nullptr for all-mesh edges.
template <class S>
std::vector<S> build_edge_features(const std::vector<float>& positions, int dim,
                                   const std::vector<int32_t>& senders,
                                   const std::vector<int32_t>& receivers, bool flag_channel,
                                   const std::vector<uint8_t>* is_shortcut = nullptr) {
    require(senders.size() == receivers.size(), "features: edge array mismatch");
    const int w = dim + 1 + (flag_channel ? 1 : 0);
    std::vector<S> out(senders.size() * size_t(w));
    for (size_t k = 0; k < senders.size(); ++k) {
        const float* us = positions.data() + size_t(senders[k]) * dim;
        const float* ur = positions.data() + size_t(receivers[k]) * dim;
        S norm2 = 0;
        for (int j = 0; j < dim; ++j) {
            const S dj = S(ur[j]) - S(us[j]);
            out[k * w + j] = dj;
            norm2 += dj * dj;
        }
        out[k * w + dim] = std::sqrt(norm2);
        if (flag_channel)
            out[k * w + dim + 1] = (is_shortcut && (*is_shortcut)[k]) ? S(1) : S(0);
    }
    return out;
}

template <class S>
std::vector<S> build_edge_features(const MeshGraph& g, bool flag_channel = false,
                                   const std::vector<uint8_t>* is_shortcut = nullptr) {
    return build_edge_features<S>(g.positions, g.dim, g.senders, g.receivers, flag_channel,
                                  is_shortcut);
}

template <class S>
std::vector<S> make_target(const Trajectory& traj, int64_t t, TargetMode mode) {
    const int64_t n = traj.graph.num_nodes();
    const int q = traj.n_fields;
    std::vector<S> out(size_t(n) * q);
    if (mode == TargetMode::kNextStep) {
        require(t + 1 < traj.n_steps, "target: t+1 out of range for next-step mode");
        const float* cur = traj.fields_at(t);
        const float* nxt = traj.fields_at(t + 1);
        for (size_t i = 0; i < out.size(); ++i) out[i] = S(nxt[i]) - S(cur[i]);
    } else {
        require(t < traj.n_steps, "target: t out of range");
        const float* cur = traj.fields_at(t);
        for (size_t i = 0; i < out.size(); ++i) out[i] = S(cur[i]);
    }
    return out;
}

}  // namespace meshmask::mesh
