// SPDX-License-Identifier: Apache-2.0
#include "meshmask/trajectory.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace meshmask::mesh {

namespace {

constexpr char kMagic[4] = {'M', 'M', 'T', 'J'};
constexpr uint16_t kVersion = 1;

template <class T>
void write_raw(std::ofstream& os, const std::vector<T>& v) {
    os.write(reinterpret_cast<const char*>(v.data()), std::streamsize(v.size() * sizeof(T)));
}

template <class T>
void read_raw(std::ifstream& is, std::vector<T>& v, size_t count, const std::string& what) {
    v.resize(count);
    is.read(reinterpret_cast<char*>(v.data()), std::streamsize(count * sizeof(T)));
    require(bool(is), "trajectory: corrupt file, truncated payload: " + what);
}

}  // namespace

void Trajectory::validate() const {
    graph.validate();
    require(n_steps >= 2, "trajectory: need at least 2 steps");
    require(dt > 0.0f, "trajectory: dt must be positive");
    require(int64_t(fields.size()) == int64_t(n_steps) * graph.num_nodes() * n_fields,
            "trajectory: fields size mismatch");
    for (float v : fields)
        require(std::isfinite(v), "trajectory: non-finite field value");
    if (!inflow_series.empty())
        require(int64_t(inflow_series.size()) == n_steps, "trajectory: inflow series length mismatch");
    if (!field_names.empty())
        require(int64_t(field_names.size()) == n_fields, "trajectory: field name count mismatch");
}

void write_trajectory(const std::string& path, const Trajectory& traj) {
    nlohmann::json header;
    header["n_nodes"] = traj.graph.num_nodes();
    header["n_edges"] = traj.graph.num_edges();
    header["n_steps"] = traj.n_steps;
    header["dim"] = traj.graph.dim;
    header["n_fields"] = traj.n_fields;
    header["dt"] = traj.dt;
    header["globals"] = traj.globals;
    header["node_type_vocab"] = {"fluid", "inflow", "outflow", "wall"};
    header["field_names"] = traj.field_names;
    header["has_inflow"] = traj.has_inflow();
    header["n_cells"] = traj.graph.num_cells();
    const std::string json_str = header.dump();

    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        require(bool(os), "trajectory: cannot open " + tmp + " for writing");
        os.write(kMagic, 4);
        os.write(reinterpret_cast<const char*>(&kVersion), 2);
        const uint64_t len = json_str.size();
        os.write(reinterpret_cast<const char*>(&len), 8);
        os.write(json_str.data(), std::streamsize(json_str.size()));
        write_raw(os, traj.graph.positions);
        write_raw(os, traj.fields);
        if (traj.has_inflow()) write_raw(os, traj.inflow_series);
        write_raw(os, traj.graph.node_type);
        write_raw(os, traj.graph.senders);
        write_raw(os, traj.graph.receivers);
        write_raw(os, traj.graph.cells);
        require(bool(os), "trajectory: write to " + tmp + " failed");
    }
    std::filesystem::rename(tmp, path);
}

Trajectory read_trajectory(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    require(bool(is), "trajectory: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    require(bool(is) && std::memcmp(magic, kMagic, 4) == 0,
            "trajectory: malformed header (bad magic) in " + path);
    uint16_t version = 0;
    is.read(reinterpret_cast<char*>(&version), 2);
    require(bool(is), "trajectory: malformed header in " + path);
    require(version == kVersion,
            "trajectory: unsupported container version " + std::to_string(version));
    uint64_t len = 0;
    is.read(reinterpret_cast<char*>(&len), 8);
    require(bool(is), "trajectory: malformed header in " + path);
    std::string json_str(len, '\0');
    is.read(json_str.data(), std::streamsize(len));
    require(bool(is), "trajectory: malformed header (truncated JSON) in " + path);
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(json_str);
    } catch (const std::exception& e) {
        fail("trajectory: malformed header JSON in " + path + ": " + std::string(e.what()));
    }

    Trajectory traj;
    const int64_t n = header.at("n_nodes").get<int64_t>();
    const int64_t e = header.at("n_edges").get<int64_t>();
    const int64_t t_cells = header.at("n_cells").get<int64_t>();
    traj.graph.dim = header.at("dim").get<int32_t>();
    traj.n_steps = header.at("n_steps").get<int32_t>();
    traj.n_fields = header.at("n_fields").get<int32_t>();
    traj.dt = header.at("dt").get<float>();
    traj.globals = header.at("globals").get<std::vector<float>>();
    traj.field_names = header.value("field_names", std::vector<std::string>{});
    const bool has_inflow = header.at("has_inflow").get<bool>();

    read_raw(is, traj.graph.positions, size_t(n * traj.graph.dim), "positions");
    read_raw(is, traj.fields, size_t(int64_t(traj.n_steps) * n * traj.n_fields), "fields");
    if (has_inflow) read_raw(is, traj.inflow_series, size_t(traj.n_steps), "inflow_series");
    read_raw(is, traj.graph.node_type, size_t(n), "node_type");
    read_raw(is, traj.graph.senders, size_t(e), "senders");
    read_raw(is, traj.graph.receivers, size_t(e), "receivers");
    read_raw(is, traj.graph.cells, size_t(t_cells * (traj.graph.dim + 1)), "cells");
    return traj;
}

}  // namespace meshmask::mesh
