// SPDX-License-Identifier: Apache-2.0
#include "meshmask/gnn.hpp"

#include <algorithm>

namespace meshmask::model {

UpdateKind update_kind_from_string(const std::string& s) {
    if (s == "mlp") return UpdateKind::kMlp;
    if (s == "gated") return UpdateKind::kGated;
    fail("unknown update kind: " + s);
}

ProcessorKind processor_kind_from_string(const std::string& s) {
    if (s == "flat") return ProcessorKind::kFlat;
    if (s == "wcycle") return ProcessorKind::kWCycle;
    fail("unknown processor kind: " + s);
}

std::string to_string(UpdateKind k) { return k == UpdateKind::kMlp ? "mlp" : "gated"; }
std::string to_string(ProcessorKind k) {
    return k == ProcessorKind::kFlat ? "flat" : "wcycle";
}

std::vector<WOp> flat_schedule(int m) {
    std::vector<WOp> s;
    for (int i = 0; i < m; ++i) s.push_back({WOp::kMp, 0});
    return s;
}

std::vector<WOp> wcycle_schedule_15() {
    std::vector<WOp> s;
    auto mp = [&](int level, int count) {
        for (int i = 0; i < count; ++i) s.push_back({WOp::kMp, level});
    };
    mp(0, 3);
    s.push_back({WOp::kDown, 0});
    mp(1, 2);
    s.push_back({WOp::kDown, 1});
    mp(2, 2);
    s.push_back({WOp::kUp, 1});
    mp(1, 2);
    s.push_back({WOp::kUp, 0});
    mp(0, 3);
    s.push_back({WOp::kDown, 0});
    mp(1, 2);
    s.push_back({WOp::kUp, 0});
    mp(0, 1);
    return s;
}

std::vector<WOp> make_schedule(ProcessorKind kind, int m) {
    if (kind == ProcessorKind::kFlat) return flat_schedule(m);
    require(m == 15, "W-cycle schedule is pinned for m=15; use flat for other depths");
    std::vector<WOp> s = wcycle_schedule_15();
    validate_schedule(s, m);
    return s;
}

void validate_schedule(const std::vector<WOp>& sched, int m) {
    int level = 0;
    int mp_count = 0;
    int open_downs = 0;
    for (const WOp& op : sched) {
        if (op.kind == WOp::kMp) {
            require(op.level == level, "schedule: MP at wrong level");
            ++mp_count;
        } else if (op.kind == WOp::kDown) {
            require(op.level == level, "schedule: Down from wrong level");
            ++level;
            ++open_downs;
        } else {
            require(op.level == level - 1, "schedule: Up to wrong level");
            --level;
            --open_downs;
            require(open_downs >= 0, "schedule: Up without matching Down");
        }
    }
    require(level == 0, "schedule: does not return to level 0");
    require(open_downs == 0, "schedule: unmatched Down");
    require(mp_count == m, "schedule: MP count " + std::to_string(mp_count) +
                               " does not match configured m=" + std::to_string(m));
}

int schedule_max_level(const std::vector<WOp>& sched) {
    int level = 0, max_level = 0;
    for (const WOp& op : sched) {
        if (op.kind == WOp::kDown) level++;
        if (op.kind == WOp::kUp) level--;
        max_level = std::max(max_level, level);
    }
    return max_level;
}

int64_t linear_param_count(int64_t in, int64_t out) { return in * out + out; }

int64_t mlp_param_count(int64_t in, int64_t hidden, int64_t out, bool layer_norm) {
    return linear_param_count(in, hidden) + linear_param_count(hidden, hidden) +
           linear_param_count(hidden, out) + (layer_norm ? 2 * out : 0);
}

int64_t gated_mlp_param_count(int64_t in, int64_t p, int64_t e) {
    return 2 * (in * e * p + e * p) + (e * p * p + p);
}

int64_t block_param_count(int64_t p, int64_t e, UpdateKind kind) {
    if (kind == UpdateKind::kGated)  // + 2p per update net for the output LayerNorm
        return gated_mlp_param_count(3 * p, p, e) + gated_mlp_param_count(2 * p, p, e) + 4 * p;
    return mlp_param_count(3 * p, p, p, true) + mlp_param_count(2 * p, p, p, true);
}

int64_t gnn_param_count(int64_t node_in, int64_t edge_in, int64_t p, int64_t e, int m,
                        int64_t out, UpdateKind kind) {
    return mlp_param_count(node_in, p, p, true) + mlp_param_count(edge_in, p, p, true) +
           int64_t(m) * block_param_count(p, e, kind) + mlp_param_count(p, p, out, false);
}

int64_t autoencoder_param_count(const ModelConfig& cfg, int64_t node_in, int64_t edge_in,
                                int64_t out) {
    const int64_t dec_in = cfg.reinsert == ReinsertMode::kLatent ? cfg.latent : out;
    return gnn_param_count(node_in, edge_in, cfg.latent, cfg.expansion, cfg.encoder_mp, out,
                           cfg.update) +
           gnn_param_count(dec_in, edge_in, cfg.latent, cfg.expansion, cfg.decoder_mp, out,
                           cfg.update) +
           dec_in;  // mask token
}

}  // namespace meshmask::model
