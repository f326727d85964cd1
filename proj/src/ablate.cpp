// SPDX-License-Identifier: Apache-2.0
#include "meshmask/ablate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "meshmask/svg.hpp"

namespace meshmask::eval {

double median(std::vector<double> v) {
    require(!v.empty(), "median: empty input");
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double percent_difference(double baseline, double value) {
    require(baseline != 0.0, "percent_difference: zero baseline");
    return (value - baseline) / baseline * 100.0;
}

std::string format_percent(double pct) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%+.1f%%", pct);
    return buf;
}

std::string config_hash_hex(const std::string& text) {
    // FNV-1a, stable across runs and platforms
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

namespace {

std::string cell_config_text(const AblationCell& c, const AblationOptions& opts,
                             uint64_t seed) {
    std::ostringstream os;
    os << "pretrain=";
    for (const auto& d : c.pretrain_datasets) os << d << ";";
    os << " finetune=" << c.finetune_dataset << " ratio=" << c.mask_ratio
       << " task=" << train::to_string(c.task) << " update=" << model::to_string(c.update)
       << " proc=" << model::to_string(c.processor)
       << " steps=" << opts.budget.pretrain_steps << "+" << opts.budget.finetune_steps
       << " latent=" << opts.base.model.latent << " seed=" << seed;
    return os.str();
}

struct PretrainKey {
    std::string datasets;
    double ratio;
    std::string task;
    std::string update;
    std::string proc;
    uint64_t seed;
    bool operator<(const PretrainKey& o) const {
        return std::tie(datasets, ratio, task, update, proc, seed) <
               std::tie(o.datasets, o.ratio, o.task, o.update, o.proc, o.seed);
    }
};

std::string join(const std::vector<std::string>& v, char sep) {
    std::string out;
    for (size_t i = 0; i < v.size(); ++i) out += (i ? std::string(1, sep) : "") + v[i];
    return out;
}

// simple work queue over indices
void parallel_for(int64_t count, int threads, const std::function<void(int64_t)>& fn) {
    if (threads <= 1) {
        for (int64_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::mutex mu;
    int64_t next = 0;
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t)
        pool.emplace_back([&]() {
            for (;;) {
                int64_t i;
                {
                    std::lock_guard<std::mutex> lk(mu);
                    if (next >= count) return;
                    i = next++;
                }
                fn(i);
            }
        });
    for (auto& t : pool) t.join();
}

}  // namespace

ExperimentMatrix make_transfer_matrix(const std::string& dataset_a,
                                      const std::string& dataset_b, double mask_ratio) {
    ExperimentMatrix m;
    const std::vector<std::pair<std::string, std::vector<std::string>>> rows = {
        {"none", {}},
        {"a", {dataset_a}},
        {"b", {dataset_b}},
        {"a+b", {dataset_a, dataset_b}},
    };
    for (const auto& [row_name, pre] : rows)
        for (const std::string& ft : {dataset_a, dataset_b}) {
            AblationCell c;
            c.name = "pre_" + row_name + "__ft_" + (ft == dataset_a ? "a" : "b");
            c.pretrain_datasets = pre;
            c.finetune_dataset = ft;
            c.mask_ratio = pre.empty() ? 0.0 : mask_ratio;
            m.cells.push_back(std::move(c));
        }
    return m;
}

ExperimentMatrix make_ratio_sweep_matrix(const std::string& dataset,
                                         const std::vector<double>& ratios) {
    ExperimentMatrix m;
    for (double r : ratios) {
        AblationCell c;
        char buf[48];
        std::snprintf(buf, sizeof(buf), "ratio_%.2f", r);
        c.name = buf;
        c.finetune_dataset = dataset;
        c.mask_ratio = r;
        if (r > 0.0) c.pretrain_datasets = {dataset};
        m.cells.push_back(std::move(c));
    }
    return m;
}

void run_ablation(ExperimentMatrix& matrix, const AblationOptions& opts) {
    namespace fs = std::filesystem;
    require(!opts.work_dir.empty(), "ablate: work_dir required");
    fs::create_directories(opts.work_dir);
    const int seeds = std::max(1, opts.budget.seeds);

    // stage 1: unique pretraining runs
    std::map<PretrainKey, std::string> pretrain_paths;
    for (const auto& c : matrix.cells) {
        if (c.pretrain_datasets.empty() || c.mask_ratio <= 0.0) continue;
        for (int s = 0; s < seeds; ++s) {
            PretrainKey key{join(c.pretrain_datasets, ';'), c.mask_ratio,
                            train::to_string(c.task), model::to_string(c.update),
                            model::to_string(c.processor), opts.base.seed + uint64_t(s)};
            if (!pretrain_paths.count(key))
                pretrain_paths[key] =
                    opts.work_dir + "/pre_" +
                    config_hash_hex(key.datasets + key.task + key.update + key.proc +
                                    std::to_string(key.ratio) + std::to_string(key.seed)) +
                    ".mmck";
        }
    }
    {
        std::vector<std::pair<PretrainKey, std::string>> jobs(pretrain_paths.begin(),
                                                              pretrain_paths.end());
        std::mutex err_mu;
        parallel_for(int64_t(jobs.size()), opts.threads, [&](int64_t i) {
            const auto& [key, path] = jobs[size_t(i)];
            if (fs::exists(path)) return;
            try {
                train::TrainConfig cfg = opts.base;
                cfg.phase = train::Phase::kPretrain;
                cfg.task = train::task_from_string(key.task);
                cfg.model.update = model::update_kind_from_string(key.update);
                cfg.model.encoder_processor = model::processor_kind_from_string(key.proc);
                cfg.mask_ratio = key.ratio;
                cfg.total_steps = opts.budget.pretrain_steps;
                cfg.decay_start = -1;
                cfg.seed = key.seed;
                cfg.out_dir = "";
                std::istringstream ds(key.datasets);
                cfg.datasets.clear();
                std::string tok;
                while (std::getline(ds, tok, ';'))
                    if (!tok.empty()) cfg.datasets.push_back(tok);
                train::Trainer tr(cfg);
                tr.run();
                tr.save_checkpoint(path);
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lk(err_mu);
                // pretraining failures surface through the dependent cells
                std::ofstream(path + ".failed") << e.what();
            }
        });
    }

    // stage 2: finetune + eval per (cell, seed)
    struct Job {
        size_t cell;
        int seed;
    };
    std::vector<Job> jobs;
    for (size_t c = 0; c < matrix.cells.size(); ++c)
        for (int s = 0; s < seeds; ++s) jobs.push_back({c, s});
    std::vector<std::vector<double>> rmse_all(matrix.cells.size());
    std::vector<std::vector<double>> rmse_1(matrix.cells.size());
    std::vector<std::string> errors(matrix.cells.size());
    std::mutex mu;

    parallel_for(int64_t(jobs.size()), opts.threads, [&](int64_t ji) {
        const Job job = jobs[size_t(ji)];
        AblationCell& cell = matrix.cells[job.cell];
        const uint64_t seed = opts.base.seed + uint64_t(job.seed);
        try {
            train::TrainConfig cfg = opts.base;
            cfg.phase = train::Phase::kFinetune;
            cfg.model.update = cell.update;
            cfg.model.encoder_processor = cell.processor;
            cfg.datasets = {cell.finetune_dataset};
            cfg.seed = seed + 101;
            cfg.mask_ratio = 0.0;
            cfg.out_dir = "";
            const bool pretrained = !cell.pretrain_datasets.empty() && cell.mask_ratio > 0.0;
            cfg.total_steps = pretrained
                                  ? opts.budget.finetune_steps
                                  : opts.budget.pretrain_steps + opts.budget.finetune_steps;
            cfg.decay_start = -1;
            train::Trainer tr(cfg);
            if (pretrained) {
                PretrainKey key{join(cell.pretrain_datasets, ';'), cell.mask_ratio,
                                train::to_string(cell.task), model::to_string(cell.update),
                                model::to_string(cell.processor), opts.base.seed + uint64_t(job.seed)};
                const std::string pre_path = pretrain_paths.at(key);
                require(fs::exists(pre_path),
                        "ablate: pretraining checkpoint missing for cell " + cell.name);
                tr.load_checkpoint(pre_path);
            }
            tr.run();
            const std::string ck = opts.work_dir + "/cell_" + cell.name + "_s" +
                                   std::to_string(job.seed) + ".mmck";
            tr.save_checkpoint(ck);
            train::ModelBundle bundle = train::Trainer::load_bundle(ck);
            EvalSummary sum = evaluate_dataset(bundle, cell.finetune_dataset);
            std::lock_guard<std::mutex> lk(mu);
            rmse_all[job.cell].push_back(sum.rmse_all_mean);
            rmse_1[job.cell].push_back(sum.rmse_1step_mean);
        } catch (const std::exception& e) {
            std::lock_guard<std::mutex> lk(mu);
            errors[job.cell] = e.what();
        }
    });

    for (size_t c = 0; c < matrix.cells.size(); ++c) {
        AblationCell& cell = matrix.cells[c];
        cell.config_hash = config_hash_hex(cell_config_text(cell, opts, opts.base.seed));
        if (!errors[c].empty() && rmse_all[c].empty()) {
            cell.status = "failed: " + errors[c];
            continue;
        }
        cell.rmse_all_seeds = rmse_all[c];
        cell.rmse_1step_seeds = rmse_1[c];
        cell.rmse_all_median = median(rmse_all[c]);
        cell.rmse_1step_median = median(rmse_1[c]);
        cell.status = "ok";
    }

    write_ablation_csv(opts.work_dir + "/report.csv", matrix);
    write_ratio_sweep_svg(opts.work_dir + "/curves.svg", matrix);
}

void write_ablation_csv(const std::string& path, const ExperimentMatrix& matrix) {
    std::ofstream os(path, std::ios::trunc);
    require(bool(os), "ablate: cannot open " + path);
    os << "cell,pretrain,finetune,mask_ratio,task,update,processor,seeds,"
          "rmse_all_median,rmse_1step_median,pct_vs_baseline,status,config_hash\n";
    // baseline per finetune dataset: the no-pretraining cell
    std::map<std::string, double> baseline;
    for (const auto& c : matrix.cells)
        if (c.pretrain_datasets.empty() && c.status == "ok")
            baseline[c.finetune_dataset] = c.rmse_all_median;
    for (const auto& c : matrix.cells) {
        std::string pct = "";
        auto it = baseline.find(c.finetune_dataset);
        if (c.status == "ok" && it != baseline.end() && !c.pretrain_datasets.empty())
            pct = format_percent(percent_difference(it->second, c.rmse_all_median));
        char buf[512];
        std::snprintf(buf, sizeof(buf), "%s,%s,%s,%.3f,%s,%s,%s,%zu,%.8g,%.8g,%s,%s,%s\n",
                      c.name.c_str(), join(c.pretrain_datasets, ';').c_str(),
                      c.finetune_dataset.c_str(), c.mask_ratio,
                      train::to_string(c.task).c_str(), model::to_string(c.update).c_str(),
                      model::to_string(c.processor).c_str(), c.rmse_all_seeds.size(),
                      c.rmse_all_median, c.rmse_1step_median, pct.c_str(), c.status.c_str(),
                      c.config_hash.c_str());
        os << buf;
    }
}

void write_ratio_sweep_svg(const std::string& path, const ExperimentMatrix& matrix) {
    std::vector<std::pair<double, double>> pts;  // (ratio, rmse)
    for (const auto& c : matrix.cells)
        if (c.status == "ok") pts.push_back({c.mask_ratio, c.rmse_all_median});
    if (pts.empty()) return;
    std::sort(pts.begin(), pts.end());
    double ymax = 1e-12;
    for (auto& [x, y] : pts) ymax = std::max(ymax, y);
    svg::Canvas canvas(-0.08, -0.15 * ymax, 1.0, ymax * 1.15, 520, 340);
    canvas.line(0, 0, 0.95, 0, "#888888", 1.0);
    canvas.line(0, 0, 0, ymax * 1.08, "#888888", 1.0);
    for (size_t i = 0; i + 1 < pts.size(); ++i)
        canvas.line(pts[i].first, pts[i].second, pts[i + 1].first, pts[i + 1].second,
                    "#4c78a8", 1.6);
    for (auto& [x, y] : pts) {
        canvas.circle(x, y, 3.5, "#4c78a8");
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.2g", y);
        canvas.text(x, y + 0.05 * ymax, buf, 10);
    }
    canvas.text(0.4, -0.12 * ymax, "mask ratio", 12);
    canvas.text(0.01, ymax * 1.1, "all-rollout rmse", 12);
    canvas.save(path);
}

void write_transfer_csv(const std::string& path, const ExperimentMatrix& matrix,
                        const std::string& dataset_a, const std::string& dataset_b) {
    // rows: none, a, b, a+b; columns: rmse + percent difference per dataset
    auto find_cell = [&](const std::string& row, const std::string& ft) -> const AblationCell* {
        const std::string name = "pre_" + row + "__ft_" + ft;
        for (const auto& c : matrix.cells)
            if (c.name == name) return &c;
        return nullptr;
    };
    std::ofstream os(path, std::ios::trunc);
    require(bool(os), "transfer: cannot open " + path);
    os << "pretraining,rmse_a,pct_a,rmse_b,pct_b\n";
    const AblationCell* base_a = find_cell("none", "a");
    const AblationCell* base_b = find_cell("none", "b");
    for (const std::string row : {"none", "a", "b", "a+b"}) {
        const AblationCell* ca = find_cell(row, "a");
        const AblationCell* cb = find_cell(row, "b");
        auto fmt = [&](const AblationCell* c, const AblationCell* base, bool pct) -> std::string {
            if (!c || c->status != "ok") return "nan";
            if (!pct) {
                char buf[32];
                std::snprintf(buf, sizeof(buf), "%.8g", c->rmse_all_median);
                return buf;
            }
            if (c == base || !base || base->status != "ok") return "-";
            return format_percent(percent_difference(base->rmse_all_median, c->rmse_all_median));
        };
        os << (row == "none" ? "no_pretraining"
                             : row == "a" ? dataset_a
                                          : row == "b" ? dataset_b : dataset_a + "+" + dataset_b)
           << "," << fmt(ca, base_a, false) << "," << fmt(ca, base_a, true) << ","
           << fmt(cb, base_b, false) << "," << fmt(cb, base_b, true) << "\n";
    }
}

}  // namespace meshmask::eval
