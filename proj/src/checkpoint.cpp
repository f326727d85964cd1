// SPDX-License-Identifier: Apache-2.0
#include "meshmask/checkpoint.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>

#include "meshmask/common.hpp"

namespace meshmask::io {

namespace {

constexpr char kMagic[4] = {'M', 'M', 'C', 'K'};
constexpr uint16_t kVersion = 1;

size_t dtype_size(const std::string& dtype) {
    if (dtype == "f32" || dtype == "i32") return 4;
    if (dtype == "f64" || dtype == "i64") return 8;
    fail("checkpoint: unknown dtype " + dtype);
}

int64_t shape_count(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    return n;
}

}  // namespace

void CheckpointWriter::add_f32(const std::string& name, std::vector<int64_t> shape,
                               const float* data, size_t count) {
    CheckpointEntry e{name, "f32", std::move(shape), {}};
    require(int64_t(count) == shape_count(e.shape), "checkpoint: shape/count mismatch for " + name);
    e.bytes.resize(count * 4);
    std::memcpy(e.bytes.data(), data, e.bytes.size());
    entries_.push_back(std::move(e));
}

void CheckpointWriter::add_f64(const std::string& name, std::vector<int64_t> shape,
                               const double* data, size_t count) {
    CheckpointEntry e{name, "f64", std::move(shape), {}};
    require(int64_t(count) == shape_count(e.shape), "checkpoint: shape/count mismatch for " + name);
    e.bytes.resize(count * 8);
    std::memcpy(e.bytes.data(), data, e.bytes.size());
    entries_.push_back(std::move(e));
}

void CheckpointWriter::add_i64(const std::string& name, std::vector<int64_t> shape,
                               const int64_t* data, size_t count) {
    CheckpointEntry e{name, "i64", std::move(shape), {}};
    require(int64_t(count) == shape_count(e.shape), "checkpoint: shape/count mismatch for " + name);
    e.bytes.resize(count * 8);
    std::memcpy(e.bytes.data(), data, e.bytes.size());
    entries_.push_back(std::move(e));
}

void CheckpointWriter::write(const std::string& path) const {
    nlohmann::json manifest;
    manifest["extra"] = extra_;
    manifest["entries"] = nlohmann::json::array();
    for (const auto& e : entries_) {
        manifest["entries"].push_back({{"name", e.name}, {"dtype", e.dtype}, {"shape", e.shape}});
    }
    const std::string json_str = manifest.dump();

    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        require(bool(os), "checkpoint: cannot open " + tmp + " for writing");
        os.write(kMagic, 4);
        os.write(reinterpret_cast<const char*>(&kVersion), 2);
        const uint64_t len = json_str.size();
        os.write(reinterpret_cast<const char*>(&len), 8);
        os.write(json_str.data(), std::streamsize(json_str.size()));
        for (const auto& e : entries_)
            os.write(reinterpret_cast<const char*>(e.bytes.data()), std::streamsize(e.bytes.size()));
        require(bool(os), "checkpoint: write to " + tmp + " failed");
    }
    std::filesystem::rename(tmp, path);
}

CheckpointReader::CheckpointReader(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    require(bool(is), "checkpoint: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    require(bool(is) && std::memcmp(magic, kMagic, 4) == 0,
            "checkpoint: bad magic in " + path);
    uint16_t version = 0;
    is.read(reinterpret_cast<char*>(&version), 2);
    require(bool(is) && version == kVersion,
            "checkpoint: unsupported version " + std::to_string(version) + " in " + path);
    uint64_t len = 0;
    is.read(reinterpret_cast<char*>(&len), 8);
    require(bool(is), "checkpoint: truncated header in " + path);
    std::string json_str(len, '\0');
    is.read(json_str.data(), std::streamsize(len));
    require(bool(is), "checkpoint: truncated manifest in " + path);
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(json_str);
    } catch (const std::exception& e) {
        fail("checkpoint: malformed manifest in " + path + ": " + e.what());
    }
    extra_ = manifest.value("extra", nlohmann::json::object());
    for (const auto& j : manifest.at("entries")) {
        CheckpointEntry e;
        e.name = j.at("name").get<std::string>();
        e.dtype = j.at("dtype").get<std::string>();
        e.shape = j.at("shape").get<std::vector<int64_t>>();
        e.bytes.resize(size_t(shape_count(e.shape)) * dtype_size(e.dtype));
        is.read(reinterpret_cast<char*>(e.bytes.data()), std::streamsize(e.bytes.size()));
        require(bool(is), "checkpoint: truncated payload for " + e.name + " in " + path);
        index_[e.name] = entries_.size();
        entries_.push_back(std::move(e));
    }
}

bool CheckpointReader::has(const std::string& name) const { return index_.count(name) > 0; }

const CheckpointEntry& CheckpointReader::entry(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) fail("checkpoint: no entry named " + name);
    return entries_[it->second];
}

std::vector<std::string> CheckpointReader::names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back(e.name);
    return out;
}

std::vector<float> CheckpointReader::read_f32(const std::string& name) const {
    const auto& e = entry(name);
    require(e.dtype == "f32", "checkpoint: " + name + " is not f32");
    std::vector<float> out(e.bytes.size() / 4);
    std::memcpy(out.data(), e.bytes.data(), e.bytes.size());
    return out;
}

std::vector<double> CheckpointReader::read_f64(const std::string& name) const {
    const auto& e = entry(name);
    require(e.dtype == "f64", "checkpoint: " + name + " is not f64");
    std::vector<double> out(e.bytes.size() / 8);
    std::memcpy(out.data(), e.bytes.data(), e.bytes.size());
    return out;
}

std::vector<int64_t> CheckpointReader::read_i64(const std::string& name) const {
    const auto& e = entry(name);
    require(e.dtype == "i64", "checkpoint: " + name + " is not i64");
    std::vector<int64_t> out(e.bytes.size() / 8);
    std::memcpy(out.data(), e.bytes.data(), e.bytes.size());
    return out;
}

}  // namespace meshmask::io
