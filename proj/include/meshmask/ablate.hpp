// SPDX-License-Identifier: Apache-2.0
//
// Experiment harness: grids of (pretrain datasets, finetune dataset, mask
// ratio, model variant) cells, each run as pretrain -> finetune -> eval, with
// percent-difference reporting against the no-pretraining baseline.
#pragma once

#include <string>
#include <vector>

#include "meshmask/rollout.hpp"
#include "meshmask/train.hpp"

namespace meshmask::eval {

struct AblationBudget {
    int64_t pretrain_steps = 1000;
    int64_t finetune_steps = 1000;
    int seeds = 1;
};

struct AblationCell {
    std::string name;
    std::vector<std::string> pretrain_datasets;  // empty: no-pretraining baseline
    std::string finetune_dataset;
    double mask_ratio = 0.4;
    train::Task task = train::Task::kNextStep;
    model::UpdateKind update = model::UpdateKind::kGated;
    model::ProcessorKind processor = model::ProcessorKind::kWCycle;

    // results
    std::vector<double> rmse_all_seeds;
    std::vector<double> rmse_1step_seeds;
    double rmse_all_median = 0;
    double rmse_1step_median = 0;
    std::string status = "pending";
    std::string config_hash;
};

struct ExperimentMatrix {
    std::vector<AblationCell> cells;
};

struct AblationOptions {
    train::TrainConfig base;  // model / optimizer settings shared by all cells
    AblationBudget budget;
    int threads = 1;
    std::string work_dir;  // checkpoints and logs per cell
};

double median(std::vector<double> v);
double percent_difference(double baseline, double value);
std::string format_percent(double pct);  // one decimal, e.g. "-49.0%"
std::string config_hash_hex(const std::string& text);

// Runs every cell (failures are recorded and the matrix continues), fills in
// result slots, writes report.csv and SVG curves under work_dir.
void run_ablation(ExperimentMatrix& matrix, const AblationOptions& opts);

void write_ablation_csv(const std::string& path, const ExperimentMatrix& matrix);
void write_ratio_sweep_svg(const std::string& path, const ExperimentMatrix& matrix);

// The transfer protocol: rows {none, A, B, A+B} x finetune/eval on {A, B}.
ExperimentMatrix make_transfer_matrix(const std::string& dataset_a,
                                      const std::string& dataset_b, double mask_ratio);
void write_transfer_csv(const std::string& path, const ExperimentMatrix& matrix,
                        const std::string& dataset_a, const std::string& dataset_b);

// Mask-ratio sweep on one dataset; ratio 0 becomes the no-pretraining baseline
// trained for the combined step budget.
ExperimentMatrix make_ratio_sweep_matrix(const std::string& dataset,
                                         const std::vector<double>& ratios);

}  // namespace meshmask::eval
