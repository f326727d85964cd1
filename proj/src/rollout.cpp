// SPDX-License-Identifier: Apache-2.0
#include "meshmask/rollout.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "meshmask/svg.hpp"

namespace meshmask::eval {

double rmse(const std::vector<float>& pred, const std::vector<float>& truth) {
    require(pred.size() == truth.size(), "rmse: shape mismatch");
    require(!pred.empty(), "rmse: empty input");
    double acc = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
        const double d = double(pred[i]) - double(truth[i]);
        acc += d * d;
    }
    return std::sqrt(acc / double(pred.size()));
}

namespace {

// one encoder evaluation: current state -> denormalized delta
std::vector<float> predict_delta(const train::ModelBundle& bundle,
                                 const mesh::Trajectory& traj, const std::vector<float>& state,
                                 const std::vector<float>* prev_state, int64_t t,
                                 const model::MgHierarchy* hier,
                                 const std::vector<float>& edge_feats_normalized) {
    const mesh::MeshGraph& graph = traj.graph;
    const int64_t n = graph.num_nodes();
    const mesh::FeatureLayout& layout = bundle.layout;
    const float next_inflow =
        layout.cfg.next_inflow ? traj.inflow_series[size_t(t + 1)] : 0.0f;

    std::vector<float> feats = mesh::build_node_features_from_state<float>(
        graph, state.data(), prev_state ? prev_state->data() : nullptr, traj.globals,
        next_inflow, layout);
    bundle.normalizer.node_in.normalize(feats.data(), n);

    model::GnnInputs<float> in;
    in.n = n;
    in.senders = &graph.senders;
    in.receivers = &graph.receivers;
    in.node_feats = ad::Tensor<float>::constant({n, layout.width()}, std::move(feats));
    in.edge_feats = ad::Tensor<float>::constant(
        {graph.num_edges(), layout.edge_width()},
        std::vector<float>(edge_feats_normalized));
    in.hierarchy = hier;
    const mesh::RunningStats& es = bundle.normalizer.edge_in;
    in.normalize_edge_geometry = [&layout, &es](std::vector<float>& g, int64_t rows) {
        const int w = layout.edge_width();
        for (int64_t i = 0; i < rows; ++i)
            for (int j = 0; j < es.channels(); ++j) {
                float& x = g[size_t(i * w + j)];
                x = float((double(x) - es.mean(j)) * es.inv_std(j));
            }
    };
    in.flag_channel = bundle.khop_flag;

    model::GnnOutput<float> out = bundle.model.encoder.forward(in);
    std::vector<float> delta = out.head.values();
    bundle.normalizer.target_delta.denormalize(delta.data(), n);
    return delta;
}

bool any_nan(const std::vector<float>& v) {
    for (float x : v)
        if (!std::isfinite(x)) return true;
    return false;
}

}  // namespace

RolloutResult rollout(const train::ModelBundle& bundle, const mesh::Trajectory& traj,
                      const RolloutOptions& opts) {
    const mesh::MeshGraph& graph = traj.graph;
    const int64_t n = graph.num_nodes();
    const int q = traj.n_fields;
    require(q == bundle.layout.q, "rollout: field count differs from the trained model");

    const int levels = model::schedule_max_level(bundle.model.encoder.schedule);
    std::unique_ptr<model::MgHierarchy> hier;
    if (levels > 0)
        hier = std::make_unique<model::MgHierarchy>(model::build_mg_hierarchy(graph, levels));

    std::vector<float> edge_feats =
        mesh::build_edge_features<float>(graph, bundle.khop_flag, nullptr);
    {
        const mesh::RunningStats& es = bundle.normalizer.edge_in;
        const int w = bundle.layout.edge_width();
        for (int64_t i = 0; i < graph.num_edges(); ++i)
            for (int j = 0; j < es.channels(); ++j) {
                float& x = edge_feats[size_t(i * w + j)];
                x = float((double(x) - es.mean(j)) * es.inv_std(j));
            }
    }

    RolloutResult res;
    const int64_t t0 = bundle.layout.cfg.history ? 1 : 0;
    res.start_step = t0;
    std::vector<float> state(traj.fields_at(t0), traj.fields_at(t0) + n * q);
    std::vector<float> prev_state;
    if (bundle.layout.cfg.history)
        prev_state.assign(traj.fields_at(t0 - 1), traj.fields_at(t0 - 1) + n * q);

    double acc_sq = 0;
    double acc_1step_sq = 0;
    int64_t steps_done = 0;
    for (int64_t t = t0; t + 1 < traj.n_steps; ++t) {
        std::vector<float> delta =
            predict_delta(bundle, traj, state, prev_state.empty() ? nullptr : &prev_state, t,
                          hier.get(), edge_feats);
        std::vector<float> next(size_t(n * q));
        for (int64_t i = 0; i < n * q; ++i) next[size_t(i)] = state[size_t(i)] + delta[size_t(i)];
        if (opts.clamp_inflow) {
            const float* truth_next = traj.fields_at(t + 1);
            for (int64_t i = 0; i < n; ++i)
                if (graph.node_type[size_t(i)] == mesh::kInflow)
                    for (int c = 0; c < q; ++c) next[size_t(i * q + c)] = truth_next[i * q + c];
        }
        if (any_nan(next)) {
            res.diverged = true;
            res.diverged_step = t;
            break;
        }
        const float* truth_next = traj.fields_at(t + 1);
        double sq = 0;
        for (int64_t i = 0; i < n * q; ++i) {
            const double d = double(next[size_t(i)]) - double(truth_next[i]);
            sq += d * d;
        }
        sq /= double(n * q);
        res.per_step_rmse.push_back(std::sqrt(sq));
        acc_sq += sq;
        ++steps_done;
        res.predicted.insert(res.predicted.end(), next.begin(), next.end());

        // teacher-forced one-step error uses ground truth as the input state
        if (t == t0) {
            acc_1step_sq += sq;  // first step is teacher-forced by construction
        } else {
            std::vector<float> gt_state(traj.fields_at(t), traj.fields_at(t) + n * q);
            std::vector<float> gt_prev;
            if (bundle.layout.cfg.history)
                gt_prev.assign(traj.fields_at(t - 1), traj.fields_at(t - 1) + n * q);
            std::vector<float> d1 = predict_delta(bundle, traj, gt_state,
                                                  gt_prev.empty() ? nullptr : &gt_prev, t,
                                                  hier.get(), edge_feats);
            double sq1 = 0;
            for (int64_t i = 0; i < n * q; ++i) {
                double pred = double(gt_state[size_t(i)]) + double(d1[size_t(i)]);
                if (opts.clamp_inflow && graph.node_type[size_t(i / q)] == mesh::kInflow)
                    pred = double(truth_next[i]);
                const double dd = pred - double(truth_next[i]);
                sq1 += dd * dd;
            }
            acc_1step_sq += sq1 / double(n * q);
        }

        if (bundle.layout.cfg.history) prev_state = state;
        if (opts.teacher_forcing)
            state.assign(traj.fields_at(t + 1), traj.fields_at(t + 1) + n * q);
        else
            state = std::move(next);
    }

    if (steps_done > 0) {
        res.rmse_all = std::sqrt(acc_sq / double(steps_done));
        res.rmse_1step = std::sqrt(acc_1step_sq / double(steps_done));
        double mean_step = 0;
        for (double r : res.per_step_rmse) mean_step += r;
        res.rmse_all_step_mean = mean_step / double(steps_done);
    }
    return res;
}

EvalSummary evaluate_dataset(const train::ModelBundle& bundle, const std::string& dataset_dir,
                             const RolloutOptions& opts) {
    datasets::Dataset ds = datasets::load_dataset(dataset_dir, true);
    require(!ds.test.empty(), "eval: dataset has no test trajectories: " + dataset_dir);
    EvalSummary sum;
    for (const auto& traj : ds.test) {
        sum.per_trajectory.push_back(rollout(bundle, traj, opts));
        const RolloutResult& r = sum.per_trajectory.back();
        sum.rmse_all_mean += r.rmse_all;
        sum.rmse_1step_mean += r.rmse_1step;
        sum.rmse_all_step_mean += r.rmse_all_step_mean;
        if (r.diverged) sum.diverged_count += 1;
    }
    const double k = double(sum.per_trajectory.size());
    sum.rmse_all_mean /= k;
    sum.rmse_1step_mean /= k;
    sum.rmse_all_step_mean /= k;
    return sum;
}

void write_eval_csv(const std::string& path, const EvalSummary& summary) {
    std::ofstream os(path, std::ios::trunc);
    require(bool(os), "eval: cannot open " + path);
    os << "trajectory,rmse_1step,rmse_all,rmse_all_step_mean,diverged,diverged_step\n";
    char buf[160];
    for (size_t i = 0; i < summary.per_trajectory.size(); ++i) {
        const auto& r = summary.per_trajectory[i];
        std::snprintf(buf, sizeof(buf), "%zu,%.8g,%.8g,%.8g,%d,%lld\n", i, r.rmse_1step,
                      r.rmse_all, r.rmse_all_step_mean, r.diverged ? 1 : 0,
                      static_cast<long long>(r.diverged_step));
        os << buf;
    }
    std::snprintf(buf, sizeof(buf), "mean,%.8g,%.8g,%.8g,%d,-1\n", summary.rmse_1step_mean,
                  summary.rmse_all_mean, summary.rmse_all_step_mean, summary.diverged_count);
    os << buf;
}

void write_field_svg(const std::string& path, const mesh::Trajectory& traj,
                     const RolloutResult& r) {
    const mesh::MeshGraph& g = traj.graph;
    const int64_t n = g.num_nodes();
    const int q = traj.n_fields;
    double x0 = 1e30, y0 = 1e30, x1 = -1e30, y1 = -1e30;
    for (int64_t i = 0; i < n; ++i) {
        x0 = std::min(x0, double(g.position(i)[0]));
        x1 = std::max(x1, double(g.position(i)[0]));
        y0 = std::min(y0, double(g.position(i)[1]));
        y1 = std::max(y1, double(g.position(i)[1]));
    }
    const double width = x1 - x0;
    const int px_w = 480, px_h = int(480 * (y1 - y0) / std::max(width, 1e-9));
    // side by side: prediction (left), ground truth (right)
    svg::Canvas canvas(x0, y0, x1 + width * 2.1, y1, px_w * 2, px_h);

    auto magnitude = [&](const float* fields, int64_t i) {
        double m = 0;
        for (int c = 0; c < q; ++c) m += double(fields[i * q + c]) * double(fields[i * q + c]);
        return std::sqrt(m);
    };
    const int64_t last = int64_t(r.per_step_rmse.size()) - 1;
    if (last < 0 || r.predicted.empty()) return;
    const float* pred = r.predicted.data() + last * n * q;
    const float* truth = traj.fields_at(r.start_step + last + 1);
    double vmax = 1e-9;
    for (int64_t i = 0; i < n; ++i)
        vmax = std::max({vmax, magnitude(truth, i), magnitude(pred, i)});
    for (int64_t i = 0; i < n; ++i) {
        const double x = double(g.position(i)[0]);
        const double y = double(g.position(i)[1]);
        canvas.circle(x, y, 2.2, svg::heat_color(magnitude(pred, i) / vmax));
        canvas.circle(x + width * 1.1, y, 2.2, svg::heat_color(magnitude(truth, i) / vmax));
    }
    canvas.text(x0 + 0.02 * width, y1 - 0.04 * (y1 - y0), "prediction");
    canvas.text(x0 + 1.12 * width, y1 - 0.04 * (y1 - y0), "ground truth");
    canvas.save(path);
}

}  // namespace meshmask::eval
