// SPDX-License-Identifier: Apache-2.0
//
// meshmask CLI: dataset generation, masked pretraining, finetuning,
// evaluation, mask/partition previews, and the ablation harness.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "meshmask/ablate.hpp"
#include "meshmask/datasets.hpp"
#include "meshmask/masking.hpp"
#include "meshmask/partition.hpp"
#include "meshmask/rollout.hpp"
#include "meshmask/run_config.hpp"
#include "meshmask/svg.hpp"
#include "meshmask/train.hpp"

namespace {

using namespace meshmask;

std::string output_dir_override(const std::string& dir) {
    const char* env = std::getenv("MESHMASK_OUT_DIR");
    if (env && *env && dir.empty()) return env;
    return dir;
}

void draw_mesh_edges(svg::Canvas& canvas, const mesh::MeshGraph& g, const std::string& color,
                     double width) {
    for (size_t k = 0; k < g.senders.size(); ++k) {
        if (g.senders[k] > g.receivers[k]) continue;
        const float* a = g.position(g.senders[k]);
        const float* b = g.position(g.receivers[k]);
        canvas.line(a[0], a[1], b[0], b[1], color, width);
    }
}

svg::Canvas mesh_canvas(const mesh::MeshGraph& g, int px = 640) {
    double x0 = 1e30, y0 = 1e30, x1 = -1e30, y1 = -1e30;
    for (int64_t i = 0; i < g.num_nodes(); ++i) {
        x0 = std::min(x0, double(g.position(i)[0]));
        x1 = std::max(x1, double(g.position(i)[0]));
        y0 = std::min(y0, double(g.position(i)[1]));
        y1 = std::max(y1, double(g.position(i)[1]));
    }
    const double mx = 0.03 * (x1 - x0), my = 0.03 * (y1 - y0);
    return svg::Canvas(x0 - mx, y0 - my, x1 + mx, y1 + my, px,
                       int(px * (y1 - y0 + 2 * my) / (x1 - x0 + 2 * mx)));
}

struct TrainCliArgs {
    std::string config_path;
    std::string datasets;
    std::string out_dir;
    std::string init_checkpoint;
    int64_t steps = -1;
    int64_t decay_start = -2;
    double mask_ratio = -1;
    int k_hop = -100;
    double lr_max = -1, lr_min = -1;
    int batch = -1;
    int workers = -1;
    int64_t seed = -1;
    std::string task;
    int latent = -1, expansion = -1, enc_mp = -1, dec_mp = -1;
    std::string update, enc_proc, dec_proc, reinsert;
    double noise = -1;
};

void add_train_flags(CLI::App* cmd, TrainCliArgs& a) {
    cmd->add_option("--config", a.config_path, "run config file (key = value sections)");
    cmd->add_option("--data", a.datasets, "comma-separated dataset directories");
    cmd->add_option("--out", a.out_dir, "output run directory");
    cmd->add_option("--init", a.init_checkpoint, "checkpoint to initialize parameters from");
    cmd->add_option("--steps", a.steps, "total optimizer steps");
    cmd->add_option("--decay-start", a.decay_start, "step where LR decay begins");
    cmd->add_option("--mask-ratio", a.mask_ratio, "node masking ratio");
    cmd->add_option("--k-hop", a.k_hop, "K for K-hop augmentation (0 = auto rule)");
    cmd->add_option("--lr-max", a.lr_max, "peak learning rate");
    cmd->add_option("--lr-min", a.lr_min, "final learning rate");
    cmd->add_option("--batch", a.batch, "batch size");
    cmd->add_option("--workers", a.workers, "parallel sample workers per step");
    cmd->add_option("--seed", a.seed, "run seed");
    cmd->add_option("--task", a.task, "pretraining task: next_step | reconstruction");
    cmd->add_option("--latent", a.latent, "latent width p");
    cmd->add_option("--expansion", a.expansion, "gated MLP expansion factor e");
    cmd->add_option("--encoder-mp", a.enc_mp, "encoder message passing steps");
    cmd->add_option("--decoder-mp", a.dec_mp, "decoder message passing steps");
    cmd->add_option("--update", a.update, "update network: mlp | gated");
    cmd->add_option("--encoder-processor", a.enc_proc, "flat | wcycle");
    cmd->add_option("--decoder-processor", a.dec_proc, "flat | wcycle");
    cmd->add_option("--reinsert", a.reinsert, "reinsertion source: latent | head");
    cmd->add_option("--noise", a.noise, "uniform noise sigma override for all channels");
}

train::TrainConfig build_train_config(const TrainCliArgs& a, train::Phase phase) {
    config::RunConfig rc;
    if (!a.config_path.empty()) rc = config::RunConfig::from_file(a.config_path);
    train::TrainConfig cfg = train::TrainConfig::from_run_config(rc);
    cfg.phase = phase;
    if (!a.datasets.empty()) {
        cfg.datasets.clear();
        std::istringstream is(a.datasets);
        std::string tok;
        while (std::getline(is, tok, ','))
            if (!tok.empty()) cfg.datasets.push_back(tok);
    }
    cfg.out_dir = output_dir_override(a.out_dir.empty() ? cfg.out_dir : a.out_dir);
    if (a.steps >= 0) cfg.total_steps = a.steps;
    if (a.decay_start >= -1) cfg.decay_start = a.decay_start;
    if (a.mask_ratio >= 0) cfg.mask_ratio = a.mask_ratio;
    if (a.k_hop != -100) cfg.k_hop = a.k_hop;
    if (a.lr_max > 0) cfg.lr_max = a.lr_max;
    if (a.lr_min > 0) cfg.lr_min = a.lr_min;
    if (a.batch > 0) cfg.batch_size = a.batch;
    if (a.workers > 0) cfg.workers = a.workers;
    if (a.seed >= 0) cfg.seed = uint64_t(a.seed);
    if (!a.task.empty()) cfg.task = train::task_from_string(a.task);
    if (a.latent > 0) cfg.model.latent = a.latent;
    if (a.expansion > 0) cfg.model.expansion = a.expansion;
    if (a.enc_mp > 0) cfg.model.encoder_mp = a.enc_mp;
    if (a.dec_mp > 0) cfg.model.decoder_mp = a.dec_mp;
    if (!a.update.empty()) cfg.model.update = model::update_kind_from_string(a.update);
    if (!a.enc_proc.empty())
        cfg.model.encoder_processor = model::processor_kind_from_string(a.enc_proc);
    if (!a.dec_proc.empty())
        cfg.model.decoder_processor = model::processor_kind_from_string(a.dec_proc);
    if (!a.reinsert.empty())
        cfg.model.reinsert = a.reinsert == "head" ? model::ReinsertMode::kHead
                                                  : model::ReinsertMode::kLatent;
    if (a.noise >= 0) cfg.noise_sigma.assign(1, a.noise);  // expanded per dataset q below
    return cfg;
}

int run_train(const TrainCliArgs& args, train::Phase phase) {
    train::TrainConfig cfg = build_train_config(args, phase);
    require(!cfg.out_dir.empty(), "train: --out run directory required");
    train::Trainer trainer(cfg);
    if (!cfg.noise_sigma.empty() && int(cfg.noise_sigma.size()) != trainer.layout().q) {
        const double s = cfg.noise_sigma[0];
        cfg.noise_sigma.assign(size_t(trainer.layout().q), s);
    }
    if (!args.init_checkpoint.empty()) trainer.load_checkpoint(args.init_checkpoint);
    trainer.run();
    std::cout << "trained " << trainer.current_step() << " steps; checkpoint at "
              << cfg.out_dir << "/checkpoint.mmck\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"masked-pretrained graph network simulator for meshes"};
    app.require_subcommand(1);

    // generate
    auto* gen = app.add_subcommand("generate", "generate a synthetic dataset");
    std::string gen_kind = "advdiff", gen_out;
    int gen_train = 20, gen_test = 5, gen_res = 22, gen_steps = 50;
    int64_t gen_seed = 0;
    double gen_dt = -1;
    gen->add_option("--kind", gen_kind, "advdiff | vortex | pulsatile")->required();
    gen->add_option("--out", gen_out, "output directory")->required();
    gen->add_option("--n-train", gen_train, "training trajectories");
    gen->add_option("--n-test", gen_test, "test trajectories");
    gen->add_option("--resolution", gen_res, "grid nodes per unit length");
    gen->add_option("--steps", gen_steps, "time steps per trajectory");
    gen->add_option("--dt", gen_dt, "time step in seconds");
    gen->add_option("--seed", gen_seed, "generator seed");

    // pretrain / finetune
    auto* pre = app.add_subcommand("pretrain", "masked pretraining of encoder+decoder");
    TrainCliArgs pre_args;
    add_train_flags(pre, pre_args);
    auto* fin = app.add_subcommand("finetune", "finetune the encoder on next-step prediction");
    TrainCliArgs fin_args;
    add_train_flags(fin, fin_args);

    // eval
    auto* ev = app.add_subcommand("eval", "autoregressive rollout metrics on a test set");
    std::string ev_ckpt, ev_data, ev_out;
    bool ev_no_clamp = false;
    ev->add_option("--checkpoint", ev_ckpt, "trained checkpoint")->required();
    ev->add_option("--dataset", ev_data, "dataset directory")->required();
    ev->add_option("--out", ev_out, "output directory");
    ev->add_flag("--no-inflow-clamp", ev_no_clamp, "do not clamp inflow nodes to ground truth");

    // preview-mask
    auto* pm = app.add_subcommand("preview-mask", "render a MaskPlan as SVG + JSON summary");
    std::string pm_data, pm_out;
    int pm_traj = 0, pm_k = 0;
    double pm_ratio = 0.4;
    int64_t pm_seed = 0;
    pm->add_option("--dataset", pm_data, "dataset directory")->required();
    pm->add_option("--out", pm_out, "output directory")->required();
    pm->add_option("--trajectory", pm_traj, "trajectory index");
    pm->add_option("--ratio", pm_ratio, "mask ratio");
    pm->add_option("--k-hop", pm_k, "K for shortcut edges (0 = auto rule)");
    pm->add_option("--seed", pm_seed, "mask seed");

    // partition
    auto* pt = app.add_subcommand("partition", "sub-mesh partition preview (CSV + SVG)");
    std::string pt_data, pt_out, pt_method = "metis";
    int pt_traj = 0, pt_parts = 4;
    int64_t pt_budget = 0, pt_seed = 0;
    pt->add_option("--dataset", pt_data, "dataset directory")->required();
    pt->add_option("--out", pt_out, "output directory")->required();
    pt->add_option("--trajectory", pt_traj, "trajectory index");
    pt->add_option("--method", pt_method, "metis | neighbor");
    pt->add_option("--parts", pt_parts, "number of disjoint parts (metis)");
    pt->add_option("--edge-budget", pt_budget, "edge budget (neighbor sampling)");
    pt->add_option("--seed", pt_seed, "partition seed");

    // ablate
    auto* ab = app.add_subcommand("ablate", "ablation / transfer experiment matrix");
    TrainCliArgs ab_args;
    add_train_flags(ab, ab_args);
    std::string ab_grid, ab_transfer;
    int64_t ab_pre_steps = 1000, ab_fin_steps = 1000;
    int ab_seeds = 1, ab_threads = 1;
    ab->add_option("--grid", ab_grid, "mask_ratio=r1,r2,... sweep on --data");
    ab->add_option("--transfer", ab_transfer, "two dataset dirs A,B for the transfer table");
    ab->add_option("--pretrain-steps", ab_pre_steps, "pretraining steps per cell");
    ab->add_option("--finetune-steps", ab_fin_steps, "finetuning steps per cell");
    ab->add_option("--seeds", ab_seeds, "seeds per cell (median reported)");
    ab->add_option("--threads", ab_threads, "parallel strands");

    try {
        app.parse(argc, argv);

        if (*gen) {
            datasets::SyntheticSpec spec;
            spec.kind = datasets::kind_from_string(gen_kind);
            spec.resolution = gen_res;
            spec.steps = gen_steps;
            spec.seed = uint64_t(gen_seed);
            if (gen_dt > 0)
                spec.dt = float(gen_dt);
            else
                spec.dt = spec.kind == datasets::SyntheticKind::kAdvectionDiffusion ? 0.005f
                                                                                    : 0.02f;
            const std::string out = output_dir_override(gen_out);
            datasets::DatasetManifest m = datasets::generate_dataset(spec, gen_train, gen_test, out);
            std::cout << "wrote " << (m.n_train + m.n_test) << " trajectories to " << out
                      << "\n";
            return 0;
        }
        if (*pre) return run_train(pre_args, train::Phase::kPretrain);
        if (*fin) return run_train(fin_args, train::Phase::kFinetune);

        if (*ev) {
            const std::string out = output_dir_override(ev_out.empty() ? "eval_out" : ev_out);
            std::filesystem::create_directories(out);
            train::ModelBundle bundle = train::Trainer::load_bundle(ev_ckpt);
            eval::RolloutOptions opts;
            opts.clamp_inflow = !ev_no_clamp;
            eval::EvalSummary sum = eval::evaluate_dataset(bundle, ev_data, opts);
            eval::write_eval_csv(out + "/metrics.csv", sum);
            datasets::Dataset ds = datasets::load_dataset(ev_data, true);
            for (size_t i = 0; i < ds.test.size(); ++i)
                eval::write_field_svg(out + "/trajectory_" + std::to_string(i) + ".svg",
                                      ds.test[i], sum.per_trajectory[i]);
            std::printf("rmse_1step=%.6g rmse_all=%.6g diverged=%d -> %s\n",
                        sum.rmse_1step_mean, sum.rmse_all_mean, sum.diverged_count,
                        out.c_str());
            return 0;
        }

        if (*pm) {
            datasets::Dataset ds = datasets::load_dataset(pm_data, false);
            require(pm_traj >= 0 && pm_traj < int(ds.train.size()),
                    "preview-mask: trajectory index out of range");
            const mesh::MeshGraph& g = ds.train[size_t(pm_traj)].graph;
            masking::MaskPlan plan = masking::sample_mask(g, pm_ratio, uint64_t(pm_seed));
            const int k = pm_k != 0 ? pm_k : (pm_ratio > 0.2 ? 2 : 1);
            if (k >= 2) masking::khop_augment(g, plan, k);
            std::filesystem::create_directories(pm_out);

            svg::Canvas canvas = mesh_canvas(g);
            draw_mesh_edges(canvas, g, "#dddddd", 0.7);
            for (size_t e = 0; e < plan.surv_senders.size(); ++e) {
                if (plan.surv_senders[e] > plan.surv_receivers[e]) continue;
                const float* a = g.position(plan.surv_senders[e]);
                const float* b = g.position(plan.surv_receivers[e]);
                canvas.line(a[0], a[1], b[0], b[1], "#4c78a8", 1.0);
            }
            for (size_t e = 0; e < plan.khop_senders.size(); ++e) {
                if (plan.khop_senders[e] > plan.khop_receivers[e]) continue;
                const float* a = g.position(plan.khop_senders[e]);
                const float* b = g.position(plan.khop_receivers[e]);
                canvas.line(a[0], a[1], b[0], b[1], "#f58518", 0.6, true);
            }
            for (int64_t i = 0; i < g.num_nodes(); ++i) {
                const float* p = g.position(i);
                canvas.circle(p[0], p[1], 2.0,
                              plan.masked[size_t(i)] ? "#bbbbbb"
                                                     : svg::category_color(g.node_type[size_t(i)]));
            }
            canvas.save(pm_out + "/mask.svg");

            nlohmann::json j;
            j["n_nodes"] = plan.n;
            j["n_visible"] = plan.visible_index.size();
            j["n_masked"] = plan.masked_count();
            j["ratio"] = plan.ratio;
            j["k"] = plan.k;
            j["seed"] = plan.seed;
            j["n_mesh_edges"] = g.num_edges();
            j["n_surviving_edges"] = plan.surv_senders.size();
            j["n_khop_edges"] = plan.khop_senders.size();
            std::ofstream(pm_out + "/mask.json") << j.dump(2) << "\n";
            std::cout << j.dump() << "\n";
            return 0;
        }

        if (*pt) {
            datasets::Dataset ds = datasets::load_dataset(pt_data, false);
            require(pt_traj >= 0 && pt_traj < int(ds.train.size()),
                    "partition: trajectory index out of range");
            const mesh::MeshGraph& g = ds.train[size_t(pt_traj)].graph;
            std::filesystem::create_directories(pt_out);
            partition::Partition parts;
            if (pt_method == "neighbor") {
                require(pt_budget >= 1, "partition: --edge-budget required for neighbor method");
                parts.method = partition::Method::kNeighborSampling;
                parts.parts.push_back(
                    partition::neighbor_sample(g, pt_budget, uint64_t(pt_seed)));
            } else {
                parts = partition::metis_like_partition(g, pt_parts, uint64_t(pt_seed));
            }
            std::ofstream csv(pt_out + "/parts.csv", std::ios::trunc);
            csv << "node,part\n";
            std::vector<int32_t> owner(size_t(g.num_nodes()), -1);
            for (size_t p = 0; p < parts.parts.size(); ++p)
                for (int32_t u : parts.parts[p]) {
                    owner[size_t(u)] = int32_t(p);
                    csv << u << "," << p << "\n";
                }
            svg::Canvas canvas = mesh_canvas(g);
            draw_mesh_edges(canvas, g, "#dddddd", 0.7);
            for (int64_t i = 0; i < g.num_nodes(); ++i) {
                const float* p = g.position(i);
                canvas.circle(p[0], p[1], 2.4,
                              owner[size_t(i)] < 0 ? "#cccccc"
                                                   : svg::category_color(owner[size_t(i)]));
            }
            canvas.save(pt_out + "/parts.svg");
            std::cout << "wrote " << parts.parts.size() << " parts to " << pt_out << "\n";
            return 0;
        }

        if (*ab) {
            train::TrainConfig base = build_train_config(ab_args, train::Phase::kPretrain);
            require(!base.out_dir.empty(), "ablate: --out work directory required");
            eval::AblationOptions opts;
            opts.base = base;
            opts.budget.pretrain_steps = ab_pre_steps;
            opts.budget.finetune_steps = ab_fin_steps;
            opts.budget.seeds = ab_seeds;
            opts.threads = ab_threads;
            opts.work_dir = base.out_dir;

            eval::ExperimentMatrix matrix;
            if (!ab_transfer.empty()) {
                std::istringstream is(ab_transfer);
                std::string a, b;
                std::getline(is, a, ',');
                std::getline(is, b, ',');
                require(!a.empty() && !b.empty(), "ablate: --transfer needs two directories");
                matrix = eval::make_transfer_matrix(a, b, base.mask_ratio);
                eval::run_ablation(matrix, opts);
                eval::write_transfer_csv(opts.work_dir + "/transfer.csv", matrix, a, b);
            } else if (!ab_grid.empty()) {
                require(ab_grid.rfind("mask_ratio=", 0) == 0,
                        "ablate: --grid expects mask_ratio=r1,r2,...");
                std::vector<double> ratios;
                std::istringstream is(ab_grid.substr(std::string("mask_ratio=").size()));
                std::string tok;
                while (std::getline(is, tok, ',')) ratios.push_back(std::stod(tok));
                require(!base.datasets.empty(), "ablate: --data required for a grid sweep");
                matrix = eval::make_ratio_sweep_matrix(base.datasets[0], ratios);
                eval::run_ablation(matrix, opts);
            } else {
                fail("ablate: pass --grid or --transfer");
            }
            int ok = 0;
            for (const auto& c : matrix.cells) ok += c.status == "ok";
            std::cout << "cells: " << matrix.cells.size() << ", ok: " << ok
                      << ", report: " << opts.work_dir << "/report.csv\n";
            return ok == int(matrix.cells.size()) ? 0 : 3;
        }
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        nlohmann::json err;
        err["error"] = e.what();
        std::cerr << err.dump() << "\n";
        return 1;
    }
    return 0;
}
