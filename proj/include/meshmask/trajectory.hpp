// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "meshmask/mesh_graph.hpp"

namespace meshmask::mesh {

// Time sequence of dynamic node fields on a fixed mesh.
struct Trajectory {
    MeshGraph graph;
    int32_t n_steps = 0;              // S
    int32_t n_fields = 0;             // q
    std::vector<float> fields;        // [S * N * q]
    std::vector<float> globals;       // [g]
    float dt = 0.0f;
    std::vector<float> inflow_series;       // [S], optional next-step inflow channel
    std::vector<std::string> field_names;   // [q]

    const float* fields_at(int64_t t) const {
        return fields.data() + t * graph.num_nodes() * n_fields;
    }
    float* fields_at(int64_t t) {
        return fields.data() + t * graph.num_nodes() * n_fields;
    }
    bool has_inflow() const { return !inflow_series.empty(); }

    void validate() const;
};

// Container format: magic "MMTJ", version u16, JSON header, then raw
// little-endian payloads (positions, fields, inflow_series, node_type,
// senders, receivers, cells) in that order.
void write_trajectory(const std::string& path, const Trajectory& traj);
Trajectory read_trajectory(const std::string& path);

}  // namespace meshmask::mesh
