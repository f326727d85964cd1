// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint container: JSON manifest (names, shapes, precision, counters)
// followed by raw little-endian payloads in manifest order.
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace meshmask::io {

struct CheckpointEntry {
    std::string name;
    std::string dtype;  // "f32" | "f64" | "i32" | "i64"
    std::vector<int64_t> shape;
    std::vector<uint8_t> bytes;
};

class CheckpointWriter {
public:
    void add_f32(const std::string& name, std::vector<int64_t> shape, const float* data,
                 size_t count);
    void add_f64(const std::string& name, std::vector<int64_t> shape, const double* data,
                 size_t count);
    void add_i64(const std::string& name, std::vector<int64_t> shape, const int64_t* data,
                 size_t count);
    nlohmann::json& extra() { return extra_; }

    // write-temp-then-rename
    void write(const std::string& path) const;

private:
    std::vector<CheckpointEntry> entries_;
    nlohmann::json extra_ = nlohmann::json::object();
};

class CheckpointReader {
public:
    explicit CheckpointReader(const std::string& path);

    const nlohmann::json& extra() const { return extra_; }
    bool has(const std::string& name) const;
    const CheckpointEntry& entry(const std::string& name) const;
    std::vector<std::string> names() const;

    std::vector<float> read_f32(const std::string& name) const;
    std::vector<double> read_f64(const std::string& name) const;
    std::vector<int64_t> read_i64(const std::string& name) const;

private:
    std::vector<CheckpointEntry> entries_;
    std::map<std::string, size_t> index_;
    nlohmann::json extra_;
};

}  // namespace meshmask::io
