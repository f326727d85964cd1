// SPDX-License-Identifier: Apache-2.0
//
// Run configuration file: key = value lines grouped in [sections], with
// # comments. CLI flags override file values.
#pragma once

#include <map>
#include <string>
#include <vector>

namespace meshmask::config {

class RunConfig {
public:
    RunConfig() = default;

    static RunConfig from_file(const std::string& path);
    static RunConfig from_string(const std::string& text);

    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::string get_string(const std::string& key, const std::string& fallback) const;
    int64_t get_int(const std::string& key, int64_t fallback) const;
    double get_double(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<double> get_double_list(const std::string& key) const;
    std::vector<std::string> get_string_list(const std::string& key) const;

    std::string dump() const;  // grouped by section, sorted

private:
    std::map<std::string, std::string> values_;  // "section.key" -> value
};

}  // namespace meshmask::config
