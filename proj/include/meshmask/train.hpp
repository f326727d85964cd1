// SPDX-License-Identifier: Apache-2.0
//
// Two-phase training: masked pretraining with the loss restricted to masked
// nodes, then finetuning of the encoder alone on next-step prediction.
#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "meshmask/adam.hpp"
#include "meshmask/checkpoint.hpp"
#include "meshmask/datasets.hpp"
#include "meshmask/gnn.hpp"
#include "meshmask/normalizer.hpp"
#include "meshmask/partition.hpp"
#include "meshmask/run_config.hpp"

namespace meshmask::train {

enum class Phase { kPretrain, kFinetune };
enum class Task { kNextStep, kReconstruction };

Phase phase_from_string(const std::string& s);
Task task_from_string(const std::string& s);
std::string to_string(Phase p);
std::string to_string(Task t);

struct TrainConfig {
    Phase phase = Phase::kPretrain;
    int64_t total_steps = 5000;
    int64_t decay_start = -1;  // -1: decay over the last half
    double lr_max = 1e-4;
    double lr_min = 1e-6;
    int batch_size = 2;
    double mask_ratio = 0.4;
    int k_hop = 0;  // 0: k=2 for ratio > 0.2, otherwise off
    std::vector<double> noise_sigma;  // per field channel; empty: dataset default
    uint64_t seed = 0;
    Task task = Task::kNextStep;
    std::vector<std::string> datasets;  // dataset directories
    int workers = 1;
    bool noise_pretrain = true;
    bool noise_finetune = true;
    int64_t norm_samples = 0;  // 0: one epoch's worth, capped
    int64_t log_every = 100;
    std::string out_dir;
    model::ModelConfig model;
    bool khop_flag_channel = false;

    int64_t effective_decay_start() const {
        return decay_start >= 0 ? decay_start : total_steps / 2;
    }
    int effective_k() const { return k_hop != 0 ? k_hop : (mask_ratio > 0.2 ? 2 : 1); }

    static TrainConfig from_run_config(const config::RunConfig& rc);
    config::RunConfig to_run_config() const;
};

// Plateau at lr_max until decay_start, then geometric interpolation down to
// lr_min at total_steps.
double lr_at(int64_t step, const TrainConfig& cfg);

// Adds N(0, sigma_c) noise to the dynamical channels (fields and history);
// node type, globals, positions and inflow are untouched.
template <class S>
void inject_noise(std::vector<S>& node_feats, const mesh::FeatureLayout& layout,
                  const std::vector<double>& sigma, Rng& rng) {
    const int f = layout.width();
    const int noisy = layout.noisy_channels();
    if (noisy == 0 || sigma.empty()) return;
    require(int(sigma.size()) == layout.q, "noise: one sigma per field channel required");
    for (double s : sigma) require(s >= 0.0, "noise: negative sigma");
    const int64_t n = int64_t(node_feats.size()) / f;
    for (int64_t i = 0; i < n; ++i)
        for (int c = 0; c < noisy; ++c) {
            const double s = sigma[size_t(c % layout.q)];
            if (s > 0.0) node_feats[size_t(i * f + c)] += S(rng.normal(0.0, s));
        }
}

struct MetricRow {
    int64_t step = 0;
    std::string phase;
    double lr = 0;
    double loss = 0;
    double wall_ms = 0;
};

void write_metrics_csv(const std::string& path, const std::vector<MetricRow>& rows);

// Induced sub-mesh with all time steps restricted to the given nodes;
// cross-part edges are dropped.
mesh::Trajectory carve_subtrajectory(const mesh::Trajectory& traj,
                                     const std::vector<int32_t>& nodes);

// Everything needed to run the trained model outside the trainer.
struct ModelBundle {
    model::AutoEncoder<float> model;
    mesh::Normalizer normalizer;
    mesh::FeatureLayout layout;
    bool khop_flag = false;
    std::vector<double> noise_sigma;
    TrainConfig config;
};

class Trainer {
public:
    explicit Trainer(const TrainConfig& cfg);

    // initialize parameters (and the frozen normalizer) from a checkpoint
    void load_checkpoint(const std::string& path);
    // full state restore for resumable runs
    void resume(const std::string& path);

    void prepare();            // accumulate + freeze the normalizer if needed
    double step();             // one optimizer update over a batch; returns loss
    void run();                // prepare + step loop + checkpoint
    void save_checkpoint(const std::string& path) const;

    // one optimizer update per sub-mesh part; returns the number of updates
    int submesh_steps(int dataset_idx, int traj_idx, int64_t t,
                      const partition::Partition& parts);

    const TrainConfig& config() const { return cfg_; }
    model::AutoEncoder<float>& model() { return model_; }
    mesh::Normalizer& normalizer() { return norm_; }
    const std::vector<MetricRow>& metrics() const { return metrics_; }
    int64_t current_step() const { return step_; }
    int64_t optimizer_step_count() const;
    const datasets::Dataset& dataset(int i) const { return data_[size_t(i)]; }
    int dataset_count() const { return int(data_.size()); }
    mesh::FeatureLayout layout() const { return layout_; }
    int last_sampled_dataset() const { return last_dataset_; }

    ModelBundle bundle() const;
    static ModelBundle load_bundle(const std::string& path);

private:
    struct Sample {
        int ds = 0;
        int traj = 0;
        int64_t t = 0;
        uint64_t mask_seed = 0;
        uint64_t noise_seed = 0;
    };

    Sample draw_sample();
    double eval_pretrain_sample(model::AutoEncoder<float>& m, const datasets::Dataset& ds,
                                const mesh::Trajectory& traj, const Sample& s) const;
    double eval_finetune_sample(model::AutoEncoder<float>& m, const datasets::Dataset& ds,
                                const mesh::Trajectory& traj, const Sample& s,
                                const model::MgHierarchy* hier) const;
    double eval_batch(const std::vector<Sample>& batch);  // accumulates grads
    void optimizer_update(double lr, double grad_scale);
    void accumulate_normalizer();
    const model::MgHierarchy* full_hierarchy(int ds, int traj);
    std::vector<double> sigma_for(int ds) const;

    TrainConfig cfg_;
    std::vector<datasets::Dataset> data_;
    mesh::FeatureLayout layout_;
    model::AutoEncoder<float> model_;
    std::vector<std::pair<std::string, ad::Tensor<float>>> params_;       // all
    std::vector<std::pair<std::string, ad::Tensor<float>>> enc_params_;   // encoder only
    std::map<std::string, ad::AdamState<float>> adam_;
    mesh::Normalizer norm_;
    Rng rng_;
    std::vector<MetricRow> metrics_;
    int64_t step_ = 0;
    int last_dataset_ = 0;
    int enc_levels_ = 0;
    int dec_levels_ = 0;
    std::map<std::pair<int, int>, std::shared_ptr<model::MgHierarchy>> full_hier_cache_;

    friend struct TrainerTestAccess;
};

}  // namespace meshmask::train
