// SPDX-License-Identifier: Apache-2.0
#include "meshmask/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <thread>

namespace meshmask::train {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

mesh::TargetMode target_mode(Task t) {
    return t == Task::kNextStep ? mesh::TargetMode::kNextStep
                                : mesh::TargetMode::kReconstruction;
}

}  // namespace

Phase phase_from_string(const std::string& s) {
    if (s == "pretrain") return Phase::kPretrain;
    if (s == "finetune") return Phase::kFinetune;
    fail("unknown phase: " + s);
}

Task task_from_string(const std::string& s) {
    if (s == "next_step") return Task::kNextStep;
    if (s == "reconstruction") return Task::kReconstruction;
    fail("unknown task: " + s);
}

std::string to_string(Phase p) { return p == Phase::kPretrain ? "pretrain" : "finetune"; }
std::string to_string(Task t) {
    return t == Task::kNextStep ? "next_step" : "reconstruction";
}

double lr_at(int64_t step, const TrainConfig& cfg) {
    require(step >= 0 && step <= cfg.total_steps, "lr_at: step out of range");
    const int64_t d0 = cfg.effective_decay_start();
    require(d0 <= cfg.total_steps, "lr_at: decay_start exceeds total_steps");
    if (step < d0) return cfg.lr_max;
    if (cfg.total_steps == d0) return cfg.lr_min;
    const double frac = double(step - d0) / double(cfg.total_steps - d0);
    return cfg.lr_max * std::pow(cfg.lr_min / cfg.lr_max, frac);
}

TrainConfig TrainConfig::from_run_config(const config::RunConfig& rc) {
    TrainConfig c;
    c.phase = phase_from_string(rc.get_string("train.phase", "pretrain"));
    c.total_steps = rc.get_int("train.total_steps", c.total_steps);
    c.decay_start = rc.get_int("train.decay_start", -1);
    c.lr_max = rc.get_double("train.lr_max", c.lr_max);
    c.lr_min = rc.get_double("train.lr_min", c.lr_min);
    c.batch_size = int(rc.get_int("train.batch_size", c.batch_size));
    c.mask_ratio = rc.get_double("train.mask_ratio", c.mask_ratio);
    c.k_hop = int(rc.get_int("train.k_hop", 0));
    c.noise_sigma = rc.get_double_list("train.noise_sigma");
    c.seed = uint64_t(rc.get_int("train.seed", 0));
    c.task = task_from_string(rc.get_string("train.task", "next_step"));
    c.datasets = rc.get_string_list("train.datasets");
    c.workers = int(rc.get_int("train.workers", 1));
    c.noise_pretrain = rc.get_bool("train.noise_pretrain", true);
    c.noise_finetune = rc.get_bool("train.noise_finetune", true);
    c.norm_samples = rc.get_int("train.norm_samples", 0);
    c.log_every = rc.get_int("train.log_every", 100);
    c.out_dir = rc.get_string("train.out_dir", "");
    c.model.latent = int(rc.get_int("model.latent", c.model.latent));
    c.model.expansion = int(rc.get_int("model.expansion", c.model.expansion));
    c.model.encoder_mp = int(rc.get_int("model.encoder_mp", c.model.encoder_mp));
    c.model.decoder_mp = int(rc.get_int("model.decoder_mp", c.model.decoder_mp));
    c.model.encoder_processor = model::processor_kind_from_string(
        rc.get_string("model.encoder_processor", "wcycle"));
    c.model.decoder_processor = model::processor_kind_from_string(
        rc.get_string("model.decoder_processor", "flat"));
    c.model.update = model::update_kind_from_string(rc.get_string("model.update", "gated"));
    c.model.reinsert = rc.get_string("model.reinsert", "latent") == "head"
                           ? model::ReinsertMode::kHead
                           : model::ReinsertMode::kLatent;
    c.khop_flag_channel = rc.get_bool("model.khop_flag_channel", false);
    return c;
}

config::RunConfig TrainConfig::to_run_config() const {
    config::RunConfig rc;
    rc.set("train.phase", to_string(phase));
    rc.set("train.total_steps", std::to_string(total_steps));
    rc.set("train.decay_start", std::to_string(decay_start));
    rc.set("train.lr_max", std::to_string(lr_max));
    rc.set("train.lr_min", std::to_string(lr_min));
    rc.set("train.batch_size", std::to_string(batch_size));
    rc.set("train.mask_ratio", std::to_string(mask_ratio));
    rc.set("train.k_hop", std::to_string(k_hop));
    rc.set("train.seed", std::to_string(seed));
    rc.set("train.task", to_string(task));
    std::string ds;
    for (size_t i = 0; i < datasets.size(); ++i) ds += (i ? "," : "") + datasets[i];
    rc.set("train.datasets", ds);
    rc.set("train.workers", std::to_string(workers));
    rc.set("train.out_dir", out_dir);
    rc.set("model.latent", std::to_string(model.latent));
    rc.set("model.expansion", std::to_string(model.expansion));
    rc.set("model.encoder_mp", std::to_string(model.encoder_mp));
    rc.set("model.decoder_mp", std::to_string(model.decoder_mp));
    rc.set("model.encoder_processor", model::to_string(model.encoder_processor));
    rc.set("model.decoder_processor", model::to_string(model.decoder_processor));
    rc.set("model.update", model::to_string(model.update));
    rc.set("model.reinsert",
           model.reinsert == model::ReinsertMode::kHead ? "head" : "latent");
    rc.set("model.khop_flag_channel", khop_flag_channel ? "true" : "false");
    return rc;
}

void write_metrics_csv(const std::string& path, const std::vector<MetricRow>& rows) {
    std::ofstream os(path, std::ios::trunc);
    require(bool(os), "metrics: cannot open " + path);
    os << "step,phase,lr,loss,wall_ms\n";
    char buf[160];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%lld,%s,%.8g,%.8g,%.3f\n",
                      static_cast<long long>(r.step), r.phase.c_str(), r.lr, r.loss, r.wall_ms);
        os << buf;
    }
}

// ---------------------------------------------------------------------------

Trainer::Trainer(const TrainConfig& cfg) : cfg_(cfg), rng_(cfg.seed) {
    require(!cfg_.datasets.empty(), "trainer: no datasets given");
    require(cfg_.mask_ratio >= 0.0 && cfg_.mask_ratio < 1.0,
            "trainer: mask_ratio must be in [0, 1)");
    require(cfg_.effective_decay_start() <= cfg_.total_steps,
            "trainer: decay_start must not exceed total_steps");
    for (const auto& dir : cfg_.datasets) data_.push_back(datasets::load_dataset(dir, false));

    const auto& m0 = data_[0].manifest;
    layout_.q = m0.q;
    layout_.g = m0.globals_count;
    layout_.d = m0.dim;
    layout_.cfg = m0.feature;
    layout_.cfg.khop_flag = cfg_.khop_flag_channel;
    for (const auto& d : data_) {
        mesh::FeatureLayout li = layout_;
        li.q = d.manifest.q;
        li.g = d.manifest.globals_count;
        li.d = d.manifest.dim;
        li.cfg = d.manifest.feature;
        li.cfg.khop_flag = cfg_.khop_flag_channel;
        require(li.width() == layout_.width() && li.q == layout_.q &&
                    li.edge_width() == layout_.edge_width(),
                "trainer: datasets have incompatible feature widths (" + d.dir + ")");
    }

    Rng init_rng(cfg_.seed ^ 0x6a09e667f3bcc909ULL);
    model_ = model::AutoEncoder<float>::init(cfg_.model, layout_.width(), layout_.edge_width(),
                                             layout_.q, init_rng);
    model_.visit([this](const std::string& name, ad::Tensor<float>& t) {
        params_.push_back({name, t});
    });
    model_.visit_encoder([this](const std::string& name, ad::Tensor<float>& t) {
        enc_params_.push_back({name, t});
    });
    norm_ = mesh::Normalizer(layout_.width(), layout_.d + 1, layout_.q);
    enc_levels_ = model::schedule_max_level(model_.encoder.schedule);
    dec_levels_ = model::schedule_max_level(model_.decoder.schedule);
}

int64_t Trainer::optimizer_step_count() const {
    int64_t best = 0;
    for (const auto& [name, st] : adam_) best = std::max(best, st.step_count);
    return best;
}

std::vector<double> Trainer::sigma_for(int ds) const {
    if (!cfg_.noise_sigma.empty()) return cfg_.noise_sigma;
    return data_[size_t(ds)].manifest.noise_sigma;
}

void Trainer::accumulate_normalizer() {
    // Edge statistics: one pass over each training mesh (flag channel, when
    // present, is excluded from normalization).
    for (const auto& d : data_)
        for (const auto& traj : d.train) {
            std::vector<float> ef = mesh::build_edge_features<float>(traj.graph, false, nullptr);
            norm_.edge_in.update(ef.data(), traj.graph.num_edges());
        }

    int64_t epoch = 0;
    for (const auto& d : data_)
        for (const auto& traj : d.train)
            epoch += traj.n_steps - 1 - (layout_.cfg.history ? 1 : 0);
    int64_t cap = cfg_.norm_samples > 0 ? cfg_.norm_samples : std::min<int64_t>(epoch, 2000);

    int64_t seen = 0;
    const int64_t t_min = layout_.cfg.history ? 1 : 0;
    for (const auto& d : data_) {
        for (const auto& traj : d.train) {
            for (int64_t t = t_min; t + 1 < traj.n_steps && seen < cap; ++t, ++seen) {
                std::vector<float> nf = mesh::build_node_features<float>(traj, t, layout_);
                norm_.node_in.update(nf.data(), traj.graph.num_nodes());
                std::vector<float> td =
                    mesh::make_target<float>(traj, t, mesh::TargetMode::kNextStep);
                norm_.target_delta.update(td.data(), traj.graph.num_nodes());
                std::vector<float> tr =
                    mesh::make_target<float>(traj, t, mesh::TargetMode::kReconstruction);
                norm_.target_recon.update(tr.data(), traj.graph.num_nodes());
            }
            if (seen >= cap) break;
        }
        if (seen >= cap) break;
    }
}

const model::MgHierarchy* Trainer::full_hierarchy(int ds, int traj) {
    const int levels = std::max(enc_levels_, dec_levels_);
    if (levels == 0) return nullptr;
    auto key = std::make_pair(ds, traj);
    auto it = full_hier_cache_.find(key);
    if (it != full_hier_cache_.end()) return it->second.get();
    auto h = std::make_shared<model::MgHierarchy>(
        model::build_mg_hierarchy(data_[size_t(ds)].train[size_t(traj)].graph, levels));
    auto* ptr = h.get();
    full_hier_cache_[key] = std::move(h);
    return ptr;
}

void Trainer::prepare() {
    if (!norm_.frozen) {
        accumulate_normalizer();
        norm_.freeze();
    }
    // hierarchies for full meshes are shared across steps; build them up
    // front so worker threads only read
    const bool need_full = dec_levels_ > 0 || (cfg_.phase == Phase::kFinetune && enc_levels_ > 0);
    if (need_full)
        for (int d = 0; d < int(data_.size()); ++d)
            for (int t = 0; t < int(data_[size_t(d)].train.size()); ++t) full_hierarchy(d, t);
    if (!cfg_.out_dir.empty()) {
        std::filesystem::create_directories(cfg_.out_dir);
        std::ofstream os(cfg_.out_dir + "/run_config.ini", std::ios::trunc);
        os << cfg_.to_run_config().dump();
    }
}

Trainer::Sample Trainer::draw_sample() {
    Sample s;
    s.ds = data_.size() > 1 ? int(rng_.uniform_index(int64_t(data_.size()))) : 0;
    const auto& d = data_[size_t(s.ds)];
    require(!d.train.empty(), "trainer: dataset has no training trajectories: " + d.dir);
    s.traj = int(rng_.uniform_index(int64_t(d.train.size())));
    const auto& tr = d.train[size_t(s.traj)];
    const int64_t t_min = layout_.cfg.history ? 1 : 0;
    const int64_t t_max = tr.n_steps - 2;
    require(t_max >= t_min, "trainer: trajectory too short");
    s.t = t_min + rng_.uniform_index(t_max - t_min + 1);
    s.mask_seed = rng_.fork_seed();
    s.noise_seed = rng_.fork_seed();
    last_dataset_ = s.ds;
    return s;
}

double Trainer::eval_pretrain_sample(model::AutoEncoder<float>& m, const datasets::Dataset& ds,
                                     const mesh::Trajectory& traj, const Sample& s) const {
    const mesh::MeshGraph& graph = traj.graph;
    const int64_t n = graph.num_nodes();
    const int f = layout_.width();

    std::vector<float> feats = mesh::build_node_features<float>(traj, s.t, layout_);
    if (cfg_.noise_pretrain) {
        Rng nrng(s.noise_seed);
        inject_noise(feats, layout_, sigma_for(s.ds), nrng);
    }
    std::vector<float> target = mesh::make_target<float>(
        traj, s.t, target_mode(cfg_.task));
    const mesh::RunningStats& tstats = cfg_.task == Task::kNextStep ? norm_.target_delta
                                                                    : norm_.target_recon;
    tstats.normalize(target.data(), n);

    masking::MaskPlan plan = masking::sample_mask(graph, cfg_.mask_ratio, s.mask_seed);
    const int k = cfg_.effective_k();
    if (k >= 2) masking::khop_augment(graph, plan, k);
    require(plan.masked_count() >= 1,
            "pretrain: mask produced no masked nodes (loss has no support)");
    masking::CompactSubgraph sub = masking::compact_subgraph(graph, plan);
    const int64_t n_vis = sub.sub.num_nodes();

    std::vector<float> sub_feats(size_t(n_vis) * f);
    for (int64_t i = 0; i < n_vis; ++i)
        std::copy(feats.begin() + int64_t(sub.to_original[size_t(i)]) * f,
                  feats.begin() + (int64_t(sub.to_original[size_t(i)]) + 1) * f,
                  sub_feats.begin() + i * f);
    norm_.node_in.normalize(sub_feats.data(), n_vis);

    const bool flag = cfg_.khop_flag_channel;
    std::vector<float> edge_feats =
        mesh::build_edge_features<float>(sub.sub, flag, &sub.edge_is_shortcut);
    auto norm_edges = [this](std::vector<float>& g, int64_t rows) {
        const int w = layout_.edge_width();
        const int c = norm_.edge_in.channels();
        for (int64_t i = 0; i < rows; ++i)
            for (int j = 0; j < c; ++j) {
                float& x = g[size_t(i * w + j)];
                x = float((double(x) - norm_.edge_in.mean(j)) * norm_.edge_in.inv_std(j));
            }
    };
    norm_edges(edge_feats, sub.sub.num_edges());

    std::unique_ptr<model::MgHierarchy> enc_hier;
    if (enc_levels_ > 0 && model::schedule_max_level(m.encoder.schedule) > 0)
        enc_hier = std::make_unique<model::MgHierarchy>(
            model::build_mg_hierarchy(sub.sub, enc_levels_));
    std::unique_ptr<model::MgHierarchy> dec_hier_local;
    const model::MgHierarchy* dec_hier = nullptr;
    if (dec_levels_ > 0) {
        auto it = full_hier_cache_.find(std::make_pair(s.ds, s.traj));
        if (it != full_hier_cache_.end()) {
            dec_hier = it->second.get();
        } else {
            dec_hier_local = std::make_unique<model::MgHierarchy>(
                model::build_mg_hierarchy(graph, dec_levels_));
            dec_hier = dec_hier_local.get();
        }
    }

    auto node_t = ad::Tensor<float>::constant({n_vis, f}, std::move(sub_feats));
    auto edge_t = ad::Tensor<float>::constant(
        {sub.sub.num_edges(), layout_.edge_width()}, std::move(edge_feats));
    model::AutoEncoderResult<float> res = model::autoencoder_forward(
        m, graph, plan, sub, node_t, edge_t, enc_hier.get(), dec_hier, norm_edges, flag);

    std::vector<int32_t> masked_ids;
    masked_ids.reserve(size_t(plan.masked_count()));
    for (int64_t i = 0; i < n; ++i)
        if (plan.masked[size_t(i)]) masked_ids.push_back(int32_t(i));

    ad::Tensor<float> pred_masked = ad::gather_rows(res.prediction, masked_ids);
    std::vector<float> target_masked(masked_ids.size() * size_t(layout_.q));
    for (size_t r = 0; r < masked_ids.size(); ++r)
        std::copy(target.begin() + int64_t(masked_ids[r]) * layout_.q,
                  target.begin() + (int64_t(masked_ids[r]) + 1) * layout_.q,
                  target_masked.begin() + int64_t(r) * layout_.q);
    ad::Tensor<float> loss = ad::mse(
        pred_masked, ad::Tensor<float>::constant(
                         {int64_t(masked_ids.size()), int64_t(layout_.q)}, std::move(target_masked)));
    loss.backward();
    (void)ds;
    return double(loss.values()[0]);
}

double Trainer::eval_finetune_sample(model::AutoEncoder<float>& m, const datasets::Dataset& ds,
                                     const mesh::Trajectory& traj, const Sample& s,
                                     const model::MgHierarchy* hier) const {
    const mesh::MeshGraph& graph = traj.graph;
    const int64_t n = graph.num_nodes();
    const int f = layout_.width();

    std::vector<float> feats = mesh::build_node_features<float>(traj, s.t, layout_);
    if (cfg_.noise_finetune) {
        Rng nrng(s.noise_seed);
        inject_noise(feats, layout_, sigma_for(s.ds), nrng);
    }
    norm_.node_in.normalize(feats.data(), n);
    std::vector<float> target =
        mesh::make_target<float>(traj, s.t, mesh::TargetMode::kNextStep);
    norm_.target_delta.normalize(target.data(), n);

    const bool flag = cfg_.khop_flag_channel;
    std::vector<float> edge_feats = mesh::build_edge_features<float>(graph, flag, nullptr);
    auto norm_edges = [this](std::vector<float>& g, int64_t rows) {
        const int w = layout_.edge_width();
        const int c = norm_.edge_in.channels();
        for (int64_t i = 0; i < rows; ++i)
            for (int j = 0; j < c; ++j) {
                float& x = g[size_t(i * w + j)];
                x = float((double(x) - norm_.edge_in.mean(j)) * norm_.edge_in.inv_std(j));
            }
    };
    norm_edges(edge_feats, graph.num_edges());

    model::GnnInputs<float> in;
    in.n = n;
    in.senders = &graph.senders;
    in.receivers = &graph.receivers;
    in.node_feats = ad::Tensor<float>::constant({n, f}, std::move(feats));
    in.edge_feats = ad::Tensor<float>::constant({graph.num_edges(), layout_.edge_width()},
                                                std::move(edge_feats));
    in.hierarchy = hier;
    in.normalize_edge_geometry = norm_edges;
    in.flag_channel = flag;
    model::GnnOutput<float> out = m.encoder.forward(in);

    ad::Tensor<float> loss =
        ad::mse(out.head, ad::Tensor<float>::constant({n, int64_t(layout_.q)}, std::move(target)));
    loss.backward();
    (void)ds;
    return double(loss.values()[0]);
}

double Trainer::eval_batch(const std::vector<Sample>& batch) {
    const int workers = std::max(1, std::min<int>(cfg_.workers, int(batch.size())));
    auto eval_one = [this](model::AutoEncoder<float>& m, const Sample& s) {
        const datasets::Dataset& ds = data_[size_t(s.ds)];
        const mesh::Trajectory& traj = ds.train[size_t(s.traj)];
        if (cfg_.phase == Phase::kPretrain) return eval_pretrain_sample(m, ds, traj, s);
        const model::MgHierarchy* hier = nullptr;
        if (enc_levels_ > 0) {
            auto it = full_hier_cache_.find(std::make_pair(s.ds, s.traj));
            require(it != full_hier_cache_.end(), "trainer: hierarchy cache miss");
            hier = it->second.get();
        }
        return eval_finetune_sample(m, ds, traj, s, hier);
    };

    if (workers == 1) {
        double total = 0;
        for (const auto& s : batch) total += eval_one(model_, s);
        return total;
    }

    // each worker owns a parameter view: shared values, private gradients
    std::vector<model::AutoEncoder<float>> views;
    views.reserve(size_t(workers));
    for (int w = 0; w < workers; ++w) {
        model::AutoEncoder<float> v = model_;
        v.visit([](const std::string&, ad::Tensor<float>& t) { t = t.leaf_view(); });
        views.push_back(std::move(v));
    }
    std::vector<double> losses(size_t(workers), 0.0);
    std::vector<std::exception_ptr> errors(static_cast<size_t>(workers));
    std::vector<std::thread> threads;
    for (int w = 0; w < workers; ++w) {
        threads.emplace_back([&, w]() {
            try {
                for (size_t i = size_t(w); i < batch.size(); i += size_t(workers))
                    losses[size_t(w)] += eval_one(views[size_t(w)], batch[i]);
            } catch (...) {
                errors[size_t(w)] = std::current_exception();
            }
        });
    }
    for (auto& t : threads) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);

    // single-writer reduction of worker gradients, in worker order
    for (int w = 0; w < workers; ++w) {
        std::vector<ad::Tensor<float>> view_params;
        views[size_t(w)].visit(
            [&](const std::string&, ad::Tensor<float>& t) { view_params.push_back(t); });
        for (size_t p = 0; p < params_.size(); ++p) {
            auto& dst = params_[p].second.grad();
            const auto& src = view_params[p].grad();
            for (size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
        }
    }
    double total = 0;
    for (double l : losses) total += l;
    return total;
}

void Trainer::optimizer_update(double lr, double grad_scale) {
    auto& set = cfg_.phase == Phase::kFinetune ? enc_params_ : params_;
    for (auto& [name, t] : set) {
        auto& g = t.grad();
        if (grad_scale != 1.0)
            for (auto& x : g) x = float(double(x) * grad_scale);
        ad::adam_step(t.values(), g, adam_[name], float(lr), name);
    }
}

double Trainer::step() {
    require(norm_.frozen, "trainer: prepare() must run before step()");
    const auto t0 = Clock::now();
    std::vector<Sample> batch;
    for (int b = 0; b < cfg_.batch_size; ++b) batch.push_back(draw_sample());
    for (auto& [name, t] : params_) t.zero_grad();
    const double loss = eval_batch(batch) / double(cfg_.batch_size);
    if (!std::isfinite(loss))
        fail("trainer: NaN loss at step " + std::to_string(step_));
    const double lr = lr_at(step_, cfg_);
    optimizer_update(lr, 1.0 / double(cfg_.batch_size));
    ++step_;
    metrics_.push_back({step_, to_string(cfg_.phase), lr, loss, ms_since(t0)});
    return loss;
}

void Trainer::run() {
    prepare();
    while (step_ < cfg_.total_steps) {
        step();
        if (!cfg_.out_dir.empty() && cfg_.log_every > 0 && step_ % cfg_.log_every == 0)
            write_metrics_csv(cfg_.out_dir + "/metrics.csv", metrics_);
    }
    if (!cfg_.out_dir.empty()) {
        write_metrics_csv(cfg_.out_dir + "/metrics.csv", metrics_);
        save_checkpoint(cfg_.out_dir + "/checkpoint.mmck");
    }
}

mesh::Trajectory carve_subtrajectory(const mesh::Trajectory& traj,
                                     const std::vector<int32_t>& nodes) {
    const int64_t n = traj.graph.num_nodes();
    std::vector<int32_t> to_sub(size_t(n), -1);
    for (size_t i = 0; i < nodes.size(); ++i) to_sub[size_t(nodes[i])] = int32_t(i);

    mesh::Trajectory out;
    out.graph.dim = traj.graph.dim;
    out.n_steps = traj.n_steps;
    out.n_fields = traj.n_fields;
    out.dt = traj.dt;
    out.globals = traj.globals;
    out.inflow_series = traj.inflow_series;
    out.field_names = traj.field_names;
    for (int32_t u : nodes) {
        for (int d = 0; d < traj.graph.dim; ++d)
            out.graph.positions.push_back(traj.graph.position(u)[d]);
        out.graph.node_type.push_back(traj.graph.node_type[size_t(u)]);
    }
    for (size_t k = 0; k < traj.graph.senders.size(); ++k) {
        const int32_t s = to_sub[size_t(traj.graph.senders[k])];
        const int32_t r = to_sub[size_t(traj.graph.receivers[k])];
        if (s >= 0 && r >= 0) {
            out.graph.senders.push_back(s);
            out.graph.receivers.push_back(r);
        }
    }
    out.fields.resize(size_t(traj.n_steps) * nodes.size() * size_t(traj.n_fields));
    const int q = traj.n_fields;
    for (int64_t t = 0; t < traj.n_steps; ++t)
        for (size_t i = 0; i < nodes.size(); ++i)
            std::copy(traj.fields_at(t) + int64_t(nodes[i]) * q,
                      traj.fields_at(t) + (int64_t(nodes[i]) + 1) * q,
                      out.fields.begin() + (t * int64_t(nodes.size()) + int64_t(i)) * q);
    return out;
}

int Trainer::submesh_steps(int dataset_idx, int traj_idx, int64_t t,
                           const partition::Partition& parts) {
    require(!parts.parts.empty(), "submesh: empty partition");
    require(norm_.frozen, "trainer: prepare() must run before submesh_steps()");
    const datasets::Dataset& ds = data_[size_t(dataset_idx)];
    const mesh::Trajectory& traj = ds.train[size_t(traj_idx)];
    last_dataset_ = dataset_idx;

    int updates = 0;
    for (const auto& part : parts.parts) {
        if (part.empty()) continue;
        const auto t0 = Clock::now();
        mesh::Trajectory sub = carve_subtrajectory(traj, part);
        Sample s;
        s.ds = dataset_idx;
        s.traj = -1;  // carved graph, no cached hierarchy
        s.t = t;
        s.mask_seed = rng_.fork_seed();
        s.noise_seed = rng_.fork_seed();
        for (auto& [name, tt] : params_) tt.zero_grad();
        double loss;
        if (cfg_.phase == Phase::kPretrain) {
            loss = eval_pretrain_sample(model_, ds, sub, s);
        } else {
            std::unique_ptr<model::MgHierarchy> hier;
            if (enc_levels_ > 0)
                hier = std::make_unique<model::MgHierarchy>(
                    model::build_mg_hierarchy(sub.graph, enc_levels_));
            loss = eval_finetune_sample(model_, ds, sub, s, hier.get());
        }
        if (!std::isfinite(loss)) fail("submesh: NaN loss");
        const double lr = lr_at(std::min(step_, cfg_.total_steps), cfg_);
        optimizer_update(lr, 1.0);
        ++step_;
        ++updates;
        metrics_.push_back({step_, to_string(cfg_.phase), lr, loss, ms_since(t0)});
    }
    return updates;
}

// ---------------------------------------------------------------------------
// checkpointing

namespace {

void add_stats(io::CheckpointWriter& w, const std::string& name,
               const mesh::RunningStats& st, nlohmann::json& counts) {
    w.add_f64(name + "/mean", {int64_t(st.mean_buffer().size())}, st.mean_buffer().data(),
              st.mean_buffer().size());
    w.add_f64(name + "/m2", {int64_t(st.m2_buffer().size())}, st.m2_buffer().data(),
              st.m2_buffer().size());
    counts[name] = st.count();
}

void read_stats(const io::CheckpointReader& r, const std::string& name, mesh::RunningStats& st,
                const nlohmann::json& counts) {
    st = mesh::RunningStats(int(r.entry(name + "/mean").shape[0]));
    st.mean_buffer() = r.read_f64(name + "/mean");
    st.m2_buffer() = r.read_f64(name + "/m2");
    st.set_count(counts.at(name).get<int64_t>());
}

}  // namespace

void Trainer::save_checkpoint(const std::string& path) const {
    io::CheckpointWriter w;
    nlohmann::json adam_steps = nlohmann::json::object();
    for (const auto& [name, t] : params_) {
        w.add_f32("param/" + name, t.shape(), t.data(), size_t(t.size()));
        auto it = adam_.find(name);
        if (it != adam_.end() && !it->second.first_moment.empty()) {
            w.add_f32("adam/" + name + "/m", t.shape(), it->second.first_moment.data(),
                      it->second.first_moment.size());
            w.add_f32("adam/" + name + "/v", t.shape(), it->second.second_moment.data(),
                      it->second.second_moment.size());
            adam_steps[name] = it->second.step_count;
        }
    }
    nlohmann::json counts = nlohmann::json::object();
    add_stats(w, "norm/node_in", norm_.node_in, counts);
    add_stats(w, "norm/edge_in", norm_.edge_in, counts);
    add_stats(w, "norm/target_delta", norm_.target_delta, counts);
    add_stats(w, "norm/target_recon", norm_.target_recon, counts);

    auto& extra = w.extra();
    extra["precision"] = "f32";
    extra["step"] = step_;
    extra["phase"] = to_string(cfg_.phase);
    extra["task"] = to_string(cfg_.task);
    extra["rng"] = rng_.serialize();
    extra["adam_steps"] = adam_steps;
    extra["norm_counts"] = counts;
    extra["norm_frozen"] = norm_.frozen;
    extra["noise_sigma"] = sigma_for(0);
    extra["model"] = {{"latent", cfg_.model.latent},
                      {"expansion", cfg_.model.expansion},
                      {"encoder_mp", cfg_.model.encoder_mp},
                      {"decoder_mp", cfg_.model.decoder_mp},
                      {"encoder_processor", model::to_string(cfg_.model.encoder_processor)},
                      {"decoder_processor", model::to_string(cfg_.model.decoder_processor)},
                      {"update", model::to_string(cfg_.model.update)},
                      {"reinsert",
                       cfg_.model.reinsert == model::ReinsertMode::kHead ? "head" : "latent"},
                      {"khop_flag_channel", cfg_.khop_flag_channel}};
    extra["data"] = {{"q", layout_.q},
                     {"g", layout_.g},
                     {"d", layout_.d},
                     {"history", layout_.cfg.history},
                     {"positions", layout_.cfg.positions},
                     {"next_inflow", layout_.cfg.next_inflow},
                     {"node_type_count", layout_.cfg.node_type_count}};
    extra["config"] = cfg_.to_run_config().dump();
    w.write(path);
}

void Trainer::load_checkpoint(const std::string& path) {
    io::CheckpointReader r(path);
    for (auto& [name, t] : params_) {
        const std::string key = "param/" + name;
        require(r.has(key), "checkpoint: missing parameter " + name +
                                " (architecture mismatch?)");
        std::vector<float> v = r.read_f32(key);
        require(int64_t(v.size()) == t.size(),
                "checkpoint: shape mismatch for " + name);
        t.values() = std::move(v);
    }
    const auto& counts = r.extra().at("norm_counts");
    read_stats(r, "norm/node_in", norm_.node_in, counts);
    read_stats(r, "norm/edge_in", norm_.edge_in, counts);
    read_stats(r, "norm/target_delta", norm_.target_delta, counts);
    read_stats(r, "norm/target_recon", norm_.target_recon, counts);
    norm_.frozen = r.extra().at("norm_frozen").get<bool>();
}

void Trainer::resume(const std::string& path) {
    load_checkpoint(path);
    io::CheckpointReader r(path);
    const auto& adam_steps = r.extra().at("adam_steps");
    for (auto& [name, t] : params_) {
        const std::string key = "adam/" + name;
        if (!r.has(key + "/m")) continue;
        ad::AdamState<float>& st = adam_[name];
        st.first_moment = r.read_f32(key + "/m");
        st.second_moment = r.read_f32(key + "/v");
        st.step_count = adam_steps.at(name).get<int64_t>();
    }
    step_ = r.extra().at("step").get<int64_t>();
    rng_.deserialize(r.extra().at("rng").get<std::string>());
}

ModelBundle Trainer::bundle() const {
    ModelBundle b{model_, norm_, layout_, cfg_.khop_flag_channel, sigma_for(0), cfg_};
    return b;
}

ModelBundle Trainer::load_bundle(const std::string& path) {
    io::CheckpointReader r(path);
    const auto& jm = r.extra().at("model");
    const auto& jd = r.extra().at("data");
    TrainConfig cfg;
    cfg.model.latent = jm.at("latent").get<int>();
    cfg.model.expansion = jm.at("expansion").get<int>();
    cfg.model.encoder_mp = jm.at("encoder_mp").get<int>();
    cfg.model.decoder_mp = jm.at("decoder_mp").get<int>();
    cfg.model.encoder_processor =
        model::processor_kind_from_string(jm.at("encoder_processor").get<std::string>());
    cfg.model.decoder_processor =
        model::processor_kind_from_string(jm.at("decoder_processor").get<std::string>());
    cfg.model.update = model::update_kind_from_string(jm.at("update").get<std::string>());
    cfg.model.reinsert = jm.at("reinsert").get<std::string>() == "head"
                             ? model::ReinsertMode::kHead
                             : model::ReinsertMode::kLatent;
    cfg.khop_flag_channel = jm.at("khop_flag_channel").get<bool>();
    cfg.task = task_from_string(r.extra().at("task").get<std::string>());

    ModelBundle b;
    b.layout.q = jd.at("q").get<int>();
    b.layout.g = jd.at("g").get<int>();
    b.layout.d = jd.at("d").get<int>();
    b.layout.cfg.history = jd.at("history").get<bool>();
    b.layout.cfg.positions = jd.at("positions").get<bool>();
    b.layout.cfg.next_inflow = jd.at("next_inflow").get<bool>();
    b.layout.cfg.node_type_count = jd.at("node_type_count").get<int>();
    b.layout.cfg.khop_flag = cfg.khop_flag_channel;
    b.khop_flag = cfg.khop_flag_channel;
    b.noise_sigma = r.extra().at("noise_sigma").get<std::vector<double>>();
    b.config = cfg;

    Rng init_rng(1);
    b.model = model::AutoEncoder<float>::init(cfg.model, b.layout.width(),
                                              b.layout.edge_width(), b.layout.q, init_rng);
    b.model.visit([&](const std::string& name, ad::Tensor<float>& t) {
        std::vector<float> v = r.read_f32("param/" + name);
        require(int64_t(v.size()) == t.size(), "checkpoint: shape mismatch for " + name);
        t.values() = std::move(v);
    });
    const auto& counts = r.extra().at("norm_counts");
    b.normalizer = mesh::Normalizer(b.layout.width(), b.layout.d + 1, b.layout.q);
    read_stats(r, "norm/node_in", b.normalizer.node_in, counts);
    read_stats(r, "norm/edge_in", b.normalizer.edge_in, counts);
    read_stats(r, "norm/target_delta", b.normalizer.target_delta, counts);
    read_stats(r, "norm/target_recon", b.normalizer.target_recon, counts);
    b.normalizer.frozen = r.extra().at("norm_frozen").get<bool>();
    return b;
}

}  // namespace meshmask::train
