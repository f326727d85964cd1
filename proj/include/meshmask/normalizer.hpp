// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "meshmask/common.hpp"

namespace meshmask::mesh {

// Welford-style running statistics for one channel group.
class RunningStats {
public:
    RunningStats() = default;
    explicit RunningStats(int channels)
        : mean_(channels, 0.0), m2_(channels, 0.0), count_(0) {}

    int channels() const { return int(mean_.size()); }
    int64_t count() const { return count_; }

    // data: row-major [rows x channels]
    template <class S>
    void update(const S* data, int64_t rows) {
        const int c = channels();
        for (int64_t i = 0; i < rows; ++i) {
            count_ += 1;
            for (int j = 0; j < c; ++j) {
                const double x = double(data[i * c + j]);
                const double delta = x - mean_[size_t(j)];
                mean_[size_t(j)] += delta / double(count_);
                m2_[size_t(j)] += delta * (x - mean_[size_t(j)]);
            }
        }
    }

    double mean(int j) const { return mean_[size_t(j)]; }
    // population variance
    double variance(int j) const {
        return count_ > 0 ? std::max(0.0, m2_[size_t(j)] / double(count_)) : 0.0;
    }
    // identity transform until statistics exist
    double inv_std(int j) const {
        return count_ > 0 ? 1.0 / std::sqrt(variance(j) + 1e-8) : 1.0;
    }

    template <class S>
    void normalize(S* data, int64_t rows) const {
        const int c = channels();
        for (int64_t i = 0; i < rows; ++i)
            for (int j = 0; j < c; ++j) {
                const size_t k = size_t(i * c + j);
                data[k] = S((double(data[k]) - mean_[size_t(j)]) * inv_std(j));
            }
    }

    template <class S>
    void denormalize(S* data, int64_t rows) const {
        const int c = channels();
        for (int64_t i = 0; i < rows; ++i)
            for (int j = 0; j < c; ++j) {
                const size_t k = size_t(i * c + j);
                data[k] = S(double(data[k]) / inv_std(j) + mean_[size_t(j)]);
            }
    }

    // raw state access for serialization
    std::vector<double>& mean_buffer() { return mean_; }
    std::vector<double>& m2_buffer() { return m2_; }
    const std::vector<double>& mean_buffer() const { return mean_; }
    const std::vector<double>& m2_buffer() const { return m2_; }
    void set_count(int64_t c) { count_ = c; }

private:
    std::vector<double> mean_;
    std::vector<double> m2_;
    int64_t count_ = 0;
};

// Statistics for node inputs, edge inputs, and targets (kept separately for
// delta and reconstruction targets, so either task normalizes consistently).
// Accumulated over the first epoch's worth of samples, then frozen.
struct Normalizer {
    RunningStats node_in;
    RunningStats edge_in;
    RunningStats target_delta;
    RunningStats target_recon;
    bool frozen = false;

    Normalizer() = default;
    Normalizer(int node_channels, int edge_channels, int target_channels)
        : node_in(node_channels),
          edge_in(edge_channels),
          target_delta(target_channels),
          target_recon(target_channels) {}

    void freeze() { frozen = true; }
};

}  // namespace meshmask::mesh
