// SPDX-License-Identifier: Apache-2.0
//
// Encode-Process-Decode graph networks: feature MLPs into a latent of width
// p, m message-passing blocks (flat or multigrid W-cycle schedule), and an
// output head. Two such networks stacked around mask-token reinsertion form
// the asymmetric autoencoder.
#pragma once

#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "meshmask/common.hpp"
#include "meshmask/features.hpp"
#include "meshmask/masking.hpp"
#include "meshmask/multigrid.hpp"
#include "meshmask/tensor.hpp"

namespace meshmask::model {

enum class UpdateKind { kMlp, kGated };
enum class ProcessorKind { kFlat, kWCycle };
enum class ReinsertMode { kLatent, kHead };

struct ModelConfig {
    int latent = 128;        // p
    int expansion = 3;       // e
    int encoder_mp = 15;     // m for the encoder processor
    int decoder_mp = 3;      // m for the decoder processor
    ProcessorKind encoder_processor = ProcessorKind::kWCycle;
    ProcessorKind decoder_processor = ProcessorKind::kFlat;
    UpdateKind update = UpdateKind::kGated;
    ReinsertMode reinsert = ReinsertMode::kLatent;
};

UpdateKind update_kind_from_string(const std::string& s);
ProcessorKind processor_kind_from_string(const std::string& s);
std::string to_string(UpdateKind k);
std::string to_string(ProcessorKind k);

// ---------------------------------------------------------------------------
// schedules

struct WOp {
    enum Kind { kMp, kDown, kUp } kind;
    int level;  // kMp: level to run at; kDown: from level; kUp: to level
};

std::vector<WOp> flat_schedule(int m);
// The pinned 15-step W-cycle: 3xMP(0), Down, 2xMP(1), Down, 2xMP(2), Up,
// 2xMP(1), Up, 3xMP(0), Down, 2xMP(1), Up, 1xMP(0).
std::vector<WOp> wcycle_schedule_15();
std::vector<WOp> make_schedule(ProcessorKind kind, int m);
// Checks: returns to level 0, MP count equals m, every Down matched by an Up.
void validate_schedule(const std::vector<WOp>& sched, int m);
int schedule_max_level(const std::vector<WOp>& sched);

// ---------------------------------------------------------------------------
// parameter counting (closed forms, asserted against runtime counts)

int64_t linear_param_count(int64_t in, int64_t out);
int64_t mlp_param_count(int64_t in, int64_t hidden, int64_t out, bool layer_norm);
int64_t gated_mlp_param_count(int64_t in, int64_t p, int64_t e);
int64_t block_param_count(int64_t p, int64_t e, UpdateKind kind);
int64_t gnn_param_count(int64_t node_in, int64_t edge_in, int64_t p, int64_t e, int m,
                        int64_t out, UpdateKind kind);
int64_t autoencoder_param_count(const ModelConfig& cfg, int64_t node_in, int64_t edge_in,
                                int64_t out);

// ---------------------------------------------------------------------------
// layers

template <class S>
using ParamVisitor = std::function<void(const std::string&, ad::Tensor<S>&)>;

template <class S>
struct Linear {
    ad::Tensor<S> w;  // [in, out]
    ad::Tensor<S> b;  // [out]

    static Linear init(int64_t in, int64_t out, Rng& rng) {
        const double bound = std::sqrt(6.0 / double(in + out));
        std::vector<S> wv(size_t(in * out));
        for (auto& x : wv) x = S(rng.uniform(-bound, bound));
        Linear l;
        l.w = ad::Tensor<S>::leaf({in, out}, std::move(wv), true);
        l.b = ad::Tensor<S>::zeros({out}, true);
        return l;
    }

    ad::Tensor<S> forward(const ad::Tensor<S>& x) const {
        return ad::add_rowvec(ad::matmul(x, w), b);
    }

    void visit(const std::string& prefix, const ParamVisitor<S>& fn) {
        fn(prefix + ".w", w);
        fn(prefix + ".b", b);
    }

    void zero() {
        std::fill(w.values().begin(), w.values().end(), S(0));
        std::fill(b.values().begin(), b.values().end(), S(0));
    }
};

template <class S>
struct LayerNorm {
    ad::Tensor<S> gain;
    ad::Tensor<S> bias;
    static constexpr S kEps = S(1e-5);

    static LayerNorm init(int64_t width) {
        LayerNorm ln;
        ln.gain = ad::Tensor<S>::leaf({width}, std::vector<S>(size_t(width), S(1)), true);
        ln.bias = ad::Tensor<S>::zeros({width}, true);
        return ln;
    }

    ad::Tensor<S> forward(const ad::Tensor<S>& x) const {
        return ad::layer_norm(x, gain, bias, kEps);
    }

    void visit(const std::string& prefix, const ParamVisitor<S>& fn) {
        fn(prefix + ".gain", gain);
        fn(prefix + ".bias", bias);
    }
};

// Linear -> ReLU -> Linear -> ReLU -> Linear, optionally LayerNorm on the
// output (omitted for decoder heads).
template <class S>
struct Mlp {
    Linear<S> l0, l1, l2;
    bool has_ln = true;
    LayerNorm<S> ln;

    static Mlp init(int64_t in, int64_t hidden, int64_t out, bool layer_norm, Rng& rng) {
        Mlp m;
        m.l0 = Linear<S>::init(in, hidden, rng);
        m.l1 = Linear<S>::init(hidden, hidden, rng);
        m.l2 = Linear<S>::init(hidden, out, rng);
        m.has_ln = layer_norm;
        if (layer_norm) m.ln = LayerNorm<S>::init(out);
        return m;
    }

    ad::Tensor<S> forward(const ad::Tensor<S>& x) const {
        ad::Tensor<S> h = ad::relu(l0.forward(x));
        h = ad::relu(l1.forward(h));
        h = l2.forward(h);
        return has_ln ? ln.forward(h) : h;
    }

    void visit(const std::string& prefix, const ParamVisitor<S>& fn) {
        l0.visit(prefix + ".l0", fn);
        l1.visit(prefix + ".l1", fn);
        l2.visit(prefix + ".l2", fn);
        if (has_ln) ln.visit(prefix + ".ln", fn);
    }
};

// Two linear branches with expansion factor e, GeLU on one, merged by
// elementwise product, projected back to width p.
template <class S>
struct GatedMlp {
    Linear<S> branch_a, branch_b, out;

    static GatedMlp init(int64_t in, int64_t p, int64_t e, Rng& rng) {
        GatedMlp g;
        g.branch_a = Linear<S>::init(in, e * p, rng);
        g.branch_b = Linear<S>::init(in, e * p, rng);
        g.out = Linear<S>::init(e * p, p, rng);
        return g;
    }

    ad::Tensor<S> forward(const ad::Tensor<S>& x) const {
        return out.forward(ad::mul(branch_a.forward(x), ad::gelu(branch_b.forward(x))));
    }

    void visit(const std::string& prefix, const ParamVisitor<S>& fn) {
        branch_a.visit(prefix + ".a", fn);
        branch_b.visit(prefix + ".b", fn);
        out.visit(prefix + ".out", fn);
    }
};

// Update network of a processor block. Either kind normalizes its output
// with a LayerNorm before the residual add: the multiplicative gate squares
// the activation scale, and a 15-block residual stack diverges without it.
template <class S>
struct UpdateNet {
    UpdateKind kind = UpdateKind::kGated;
    Mlp<S> mlp;          // carries its own output LayerNorm
    GatedMlp<S> gated;
    LayerNorm<S> gated_ln;

    static UpdateNet init(UpdateKind kind, int64_t in, int64_t p, int64_t e, Rng& rng) {
        UpdateNet u;
        u.kind = kind;
        if (kind == UpdateKind::kMlp) {
            u.mlp = Mlp<S>::init(in, p, p, true, rng);
        } else {
            u.gated = GatedMlp<S>::init(in, p, e, rng);
            u.gated_ln = LayerNorm<S>::init(p);
        }
        return u;
    }

    ad::Tensor<S> forward(const ad::Tensor<S>& x) const {
        return kind == UpdateKind::kMlp ? mlp.forward(x) : gated_ln.forward(gated.forward(x));
    }

    void visit(const std::string& prefix, const ParamVisitor<S>& fn) {
        if (kind == UpdateKind::kMlp) {
            mlp.visit(prefix + ".mlp", fn);
        } else {
            gated.visit(prefix + ".gated", fn);
            gated_ln.visit(prefix + ".gated.ln", fn);
        }
    }

    // zero the final layer (and output normalization) so the residual block
    // becomes the identity
    void zero_final_layer() {
        if (kind == UpdateKind::kMlp) {
            mlp.l2.zero();
            if (mlp.has_ln) {
                std::fill(mlp.ln.gain.values().begin(), mlp.ln.gain.values().end(), S(0));
                std::fill(mlp.ln.bias.values().begin(), mlp.ln.bias.values().end(), S(0));
            }
        } else {
            gated.out.zero();
            std::fill(gated_ln.gain.values().begin(), gated_ln.gain.values().end(), S(0));
            std::fill(gated_ln.bias.values().begin(), gated_ln.bias.values().end(), S(0));
        }
    }
};

// One message-passing step with residual connections:
//   e'_k = e_k + EdgeUpdate([e_k, v_s, v_r])
//   v'_i = v_i + NodeUpdate([v_i, sum_{k: r_k = i} e'_k])
template <class S>
struct GraphNetBlock {
    UpdateNet<S> edge_update;  // input width 3p
    UpdateNet<S> node_update;  // input width 2p

    static GraphNetBlock init(UpdateKind kind, int64_t p, int64_t e, Rng& rng) {
        GraphNetBlock b;
        b.edge_update = UpdateNet<S>::init(kind, 3 * p, p, e, rng);
        b.node_update = UpdateNet<S>::init(kind, 2 * p, p, e, rng);
        return b;
    }

    std::pair<ad::Tensor<S>, ad::Tensor<S>> forward(const ad::Tensor<S>& v,
                                                    const ad::Tensor<S>& e,
                                                    const std::vector<int32_t>& senders,
                                                    const std::vector<int32_t>& receivers) const {
        ad::Tensor<S> vs = ad::gather_rows(v, senders);
        ad::Tensor<S> vr = ad::gather_rows(v, receivers);
        ad::Tensor<S> e2 = ad::add(e, edge_update.forward(ad::concat_cols<S>({e, vs, vr})));
        ad::Tensor<S> agg = ad::scatter_add(e2, receivers, v.rows());
        ad::Tensor<S> v2 = ad::add(v, node_update.forward(ad::concat_cols<S>({v, agg})));
        return {v2, e2};
    }

    void visit(const std::string& prefix, const ParamVisitor<S>& fn) {
        edge_update.visit(prefix + ".edge", fn);
        node_update.visit(prefix + ".node", fn);
    }
};

// ---------------------------------------------------------------------------
// one Encode-Process-Decode network

template <class S>
struct GnnInputs {
    int64_t n = 0;
    const std::vector<int32_t>* senders = nullptr;
    const std::vector<int32_t>* receivers = nullptr;
    ad::Tensor<S> node_feats;  // [n, f_node], already normalized
    ad::Tensor<S> edge_feats;  // [E, f_edge], already normalized
    const MgHierarchy* hierarchy = nullptr;  // required for W-cycle schedules
    // normalization applied to coarse-level geometric edge features so they
    // match the statistics of the level-0 inputs
    std::function<void(std::vector<S>&, int64_t)> normalize_edge_geometry;
    bool flag_channel = false;
};

template <class S>
struct GnnOutput {
    ad::Tensor<S> head;    // [n, q]
    ad::Tensor<S> latent;  // [n, p]
};

template <class S>
struct Gnn {
    Mlp<S> node_in, edge_in;
    std::vector<GraphNetBlock<S>> blocks;
    Mlp<S> node_out;
    std::vector<WOp> schedule;
    int64_t latent_width = 0;

    static Gnn init(int64_t node_in_width, int64_t edge_in_width, int64_t p, int64_t e, int m,
                    int64_t out_width, ProcessorKind proc, UpdateKind update, Rng& rng) {
        Gnn g;
        g.latent_width = p;
        g.node_in = Mlp<S>::init(node_in_width, p, p, true, rng);
        g.edge_in = Mlp<S>::init(edge_in_width, p, p, true, rng);
        for (int i = 0; i < m; ++i) g.blocks.push_back(GraphNetBlock<S>::init(update, p, e, rng));
        g.node_out = Mlp<S>::init(p, p, out_width, false, rng);
        g.schedule = make_schedule(proc, m);
        return g;
    }

    GnnOutput<S> forward(const GnnInputs<S>& in) const {
        struct LevelState {
            ad::Tensor<S> v, e, skip;
            bool e_ready = false;
            const std::vector<int32_t>* senders = nullptr;
            const std::vector<int32_t>* receivers = nullptr;
        };
        const int max_lvl = schedule_max_level(schedule);
        require(max_lvl == 0 || in.hierarchy != nullptr,
                "gnn: W-cycle schedule requires a multigrid hierarchy");
        require(max_lvl == 0 || int(in.hierarchy->levels.size()) >= max_lvl,
                "gnn: hierarchy too shallow for schedule");

        std::vector<LevelState> lvl(size_t(max_lvl) + 1);
        lvl[0].v = node_in.forward(in.node_feats);
        lvl[0].e = edge_in.forward(in.edge_feats);
        lvl[0].e_ready = true;
        lvl[0].senders = in.senders;
        lvl[0].receivers = in.receivers;
        for (int l = 1; l <= max_lvl; ++l) {
            lvl[size_t(l)].senders = &in.hierarchy->levels[size_t(l - 1)].coarse.senders;
            lvl[size_t(l)].receivers = &in.hierarchy->levels[size_t(l - 1)].coarse.receivers;
        }

        size_t bi = 0;
        for (const WOp& op : schedule) {
            if (op.kind == WOp::kMp) {
                auto& s = lvl[size_t(op.level)];
                auto [v2, e2] = blocks[bi++].forward(s.v, s.e, *s.senders, *s.receivers);
                s.v = v2;
                s.e = e2;
            } else if (op.kind == WOp::kDown) {
                const MgLevel& L = in.hierarchy->levels[size_t(op.level)];
                auto& fine = lvl[size_t(op.level)];
                auto& coarse = lvl[size_t(op.level) + 1];
                fine.skip = fine.v;
                const int64_t nc = L.coarse.num_nodes();
                ad::Tensor<S> sums = ad::scatter_add(fine.v, L.assign, nc);
                std::vector<S> inv(L.inv_cluster.begin(), L.inv_cluster.end());
                coarse.v = ad::scale_rows(sums, inv);
                if (!coarse.e_ready) {
                    std::vector<S> geom = mesh::build_edge_features<S>(
                        L.coarse, in.flag_channel, nullptr);
                    if (in.normalize_edge_geometry)
                        in.normalize_edge_geometry(geom, L.coarse.num_edges());
                    const int64_t rows = L.coarse.num_edges();
                    const int64_t width = rows > 0 ? int64_t(geom.size()) / rows : 0;
                    coarse.e = edge_in.forward(
                        ad::Tensor<S>::constant({rows, width}, std::move(geom)));
                    coarse.e_ready = true;
                }
            } else {  // kUp
                const MgLevel& L = in.hierarchy->levels[size_t(op.level)];
                auto& fine = lvl[size_t(op.level)];
                auto& coarse = lvl[size_t(op.level) + 1];
                ad::Tensor<S> up = ad::gather_rows(coarse.v, L.assign);
                fine.v = ad::add(fine.skip, up);
            }
        }
        require(bi == blocks.size(), "gnn: schedule consumed wrong number of blocks");

        GnnOutput<S> out;
        out.latent = lvl[0].v;
        out.head = node_out.forward(lvl[0].v);
        return out;
    }

    void visit(const std::string& prefix, const ParamVisitor<S>& fn) {
        node_in.visit(prefix + ".node_in", fn);
        edge_in.visit(prefix + ".edge_in", fn);
        for (size_t i = 0; i < blocks.size(); ++i)
            blocks[i].visit(prefix + ".block" + std::to_string(i), fn);
        node_out.visit(prefix + ".node_out", fn);
    }

    void zero_update_outputs() {
        for (auto& b : blocks) {
            b.edge_update.zero_final_layer();
            b.node_update.zero_final_layer();
        }
    }
};

// ---------------------------------------------------------------------------
// asymmetric encoder-decoder assembly

template <class S>
struct AutoEncoder {
    ModelConfig cfg;
    Gnn<S> encoder;
    Gnn<S> decoder;
    ad::Tensor<S> mask_token;  // width p (latent mode) or q (head mode)

    static AutoEncoder init(const ModelConfig& cfg, int64_t node_in_width,
                            int64_t edge_in_width, int64_t out_width, Rng& rng) {
        AutoEncoder ae;
        ae.cfg = cfg;
        ae.encoder = Gnn<S>::init(node_in_width, edge_in_width, cfg.latent, cfg.expansion,
                                  cfg.encoder_mp, out_width, cfg.encoder_processor, cfg.update,
                                  rng);
        const int64_t dec_in =
            cfg.reinsert == ReinsertMode::kLatent ? cfg.latent : out_width;
        ae.decoder = Gnn<S>::init(dec_in, edge_in_width, cfg.latent, cfg.expansion,
                                  cfg.decoder_mp, out_width, cfg.decoder_processor, cfg.update,
                                  rng);
        std::vector<S> tok(static_cast<size_t>(dec_in));
        for (auto& x : tok) x = S(rng.normal(0.0, 0.02));
        ae.mask_token = ad::Tensor<S>::leaf({dec_in}, std::move(tok), true);
        return ae;
    }

    void visit(const ParamVisitor<S>& fn) {
        encoder.visit("encoder", fn);
        decoder.visit("decoder", fn);
        fn("decoder.mask_token", mask_token);
    }

    void visit_encoder(const ParamVisitor<S>& fn) { encoder.visit("encoder", fn); }

    int64_t param_count() {
        int64_t total = 0;
        visit([&](const std::string&, ad::Tensor<S>& t) { total += t.size(); });
        return total;
    }
};

// Full masked forward pass: encoder on the compacted visible subgraph,
// reinsertion with the mask token on the full mesh, decoder over the original
// edge set. Returns the decoder prediction for every node.
template <class S>
struct AutoEncoderResult {
    ad::Tensor<S> prediction;      // [N, q]
    ad::Tensor<S> encoder_head;    // [N_vis, q]
    ad::Tensor<S> encoder_latent;  // [N_vis, p]
};

template <class S>
AutoEncoderResult<S> autoencoder_forward(
    AutoEncoder<S>& model, const mesh::MeshGraph& graph, const masking::MaskPlan& plan,
    const masking::CompactSubgraph& sub, const ad::Tensor<S>& sub_node_feats,
    const ad::Tensor<S>& sub_edge_feats, const MgHierarchy* enc_hierarchy,
    const MgHierarchy* dec_hierarchy,
    const std::type_identity_t<std::function<void(std::vector<S>&, int64_t)>>&
        normalize_edge_geometry,
    bool flag_channel) {
    GnnInputs<S> enc_in;
    enc_in.n = sub.sub.num_nodes();
    enc_in.senders = &sub.sub.senders;
    enc_in.receivers = &sub.sub.receivers;
    enc_in.node_feats = sub_node_feats;
    enc_in.edge_feats = sub_edge_feats;
    enc_in.hierarchy = enc_hierarchy;
    enc_in.normalize_edge_geometry = normalize_edge_geometry;
    enc_in.flag_channel = flag_channel;
    GnnOutput<S> enc_out = model.encoder.forward(enc_in);

    const ad::Tensor<S>& reinserted_rows =
        model.cfg.reinsert == ReinsertMode::kLatent ? enc_out.latent : enc_out.head;
    masking::ReinsertedMesh<S> full =
        masking::reinsert(reinserted_rows, plan, model.mask_token, graph, flag_channel);
    if (normalize_edge_geometry)
        normalize_edge_geometry(full.edge_geometry, graph.num_edges());

    GnnInputs<S> dec_in;
    dec_in.n = graph.num_nodes();
    dec_in.senders = &graph.senders;
    dec_in.receivers = &graph.receivers;
    dec_in.node_feats = full.latents;
    const int64_t dec_edge_rows = graph.num_edges();
    const int64_t dec_edge_width =
        dec_edge_rows > 0 ? int64_t(full.edge_geometry.size()) / dec_edge_rows : 0;
    dec_in.edge_feats = ad::Tensor<S>::constant({dec_edge_rows, dec_edge_width},
                                                std::move(full.edge_geometry));
    dec_in.hierarchy = dec_hierarchy;
    dec_in.normalize_edge_geometry = normalize_edge_geometry;
    dec_in.flag_channel = flag_channel;
    GnnOutput<S> dec_out = model.decoder.forward(dec_in);

    AutoEncoderResult<S> res;
    res.prediction = dec_out.head;
    res.encoder_head = enc_out.head;
    res.encoder_latent = enc_out.latent;
    return res;
}

}  // namespace meshmask::model
