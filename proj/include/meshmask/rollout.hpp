// SPDX-License-Identifier: Apache-2.0
//
// Autoregressive rollout and RMSE metrics. The trained encoder predicts
// normalized next-step deltas; states integrate forward with ground truth
// clamped on inflow nodes.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "meshmask/train.hpp"

namespace meshmask::eval {

struct RolloutOptions {
    bool clamp_inflow = true;    // feed ground truth at inflow-type nodes
    bool teacher_forcing = false;  // reset to ground truth after every step
};

struct RolloutResult {
    std::vector<float> predicted;       // [(S-1-t0) * N * q]
    int64_t start_step = 0;
    double rmse_1step = 0;              // teacher-forced error over all steps
    double rmse_all = 0;                // sqrt of mean squared error over the rollout
    double rmse_all_step_mean = 0;      // mean of per-step RMSEs (secondary reading)
    std::vector<double> per_step_rmse;
    bool diverged = false;
    int64_t diverged_step = -1;
};

// Root mean squared error over all elements.
double rmse(const std::vector<float>& pred, const std::vector<float>& truth);

RolloutResult rollout(const train::ModelBundle& bundle, const mesh::Trajectory& traj,
                      const RolloutOptions& opts = {});

struct EvalSummary {
    double rmse_all_mean = 0;
    double rmse_1step_mean = 0;
    double rmse_all_step_mean = 0;
    int diverged_count = 0;
    std::vector<RolloutResult> per_trajectory;
};

// Rollouts over every test trajectory of a dataset directory.
EvalSummary evaluate_dataset(const train::ModelBundle& bundle, const std::string& dataset_dir,
                             const RolloutOptions& opts = {});

void write_eval_csv(const std::string& path, const EvalSummary& summary);

// field magnitude plot of predicted vs ground truth at the final step
void write_field_svg(const std::string& path, const mesh::Trajectory& traj,
                     const RolloutResult& r);

}  // namespace meshmask::eval
