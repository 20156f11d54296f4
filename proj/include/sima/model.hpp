#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "sima/attention.hpp"
#include "sima/autodiff.hpp"
#include "sima/rng.hpp"
#include "sima/tensor.hpp"

namespace sima {

enum class Activation { Gelu, Relu };
enum class Pooling { MeanPool, ClsToken };

struct ModelConfig {
    int depth = 2;
    int dim = 32;
    int heads = 4;
    int ffn_ratio = 4;
    Activation activation = Activation::Gelu;
    AttentionVariant variant = AttentionVariant::SimA;
    Normalization normalization = Normalization::L1;
    Pooling pooling = Pooling::MeanPool;
    OrderingPolicy ordering = OrderingPolicy::Auto;
    int patch_grid = 4;
    int d_in = 8;      // per-token input width (flattened patch)
    int num_classes = 2;
    double norm_eps = 1e-6;
    bool qkv_bias = true;

    int tokens() const {
        return patch_grid * patch_grid + (pooling == Pooling::ClsToken ? 1 : 0);
    }

    void validate() const {
        if (depth < 1 || ffn_ratio < 1 || patch_grid < 1 || d_in < 1 || num_classes < 2)
            throw ConfigError("model config: depth/ffn_ratio/patch_grid/d_in/num_classes out of range");
        AttentionConfig a;
        a.dim = dim;
        a.heads = heads;
        a.norm_eps = norm_eps;
        a.validate();
    }

    AttentionConfig attention_config() const {
        AttentionConfig a;
        a.dim = dim;
        a.heads = heads;
        a.variant = variant;
        a.ordering = ordering;
        a.norm_eps = norm_eps;
        a.qkv_bias = qkv_bias;
        a.normalization = normalization;
        return a;
    }
};

struct BlockParams {
    Tensor ln1_gain, ln1_bias;
    Tensor w_qkv, b_qkv;
    Tensor w_proj, b_proj;
    Tensor ln2_gain, ln2_bias;
    Tensor w_ffn1, b_ffn1;
    Tensor w_ffn2, b_ffn2;
};

struct ModelParams {
    Tensor w_embed, b_embed; // d_in -> D
    Tensor cls;              // 1 x D, present only with ClsToken pooling
    std::vector<BlockParams> blocks;
    Tensor w_head, b_head;   // D -> num_classes
};

// Truncated-normal(0.02) projections, zero biases, zero final head.
inline ModelParams init_params(const ModelConfig& cfg, Rng& rng) {
    cfg.validate();
    const auto D = static_cast<std::size_t>(cfg.dim);
    const auto Din = static_cast<std::size_t>(cfg.d_in);
    const auto Dh = static_cast<std::size_t>(cfg.ffn_ratio) * D;
    const auto C = static_cast<std::size_t>(cfg.num_classes);
    ModelParams p;
    p.w_embed = rng.trunc_normal_tensor({Din, D}, 0.02);
    p.b_embed = Tensor::zeros({D});
    if (cfg.pooling == Pooling::ClsToken) p.cls = rng.trunc_normal_tensor({1, D}, 0.02);
    for (int b = 0; b < cfg.depth; ++b) {
        BlockParams bp;
        bp.ln1_gain = Tensor::full({D}, 1.0);
        bp.ln1_bias = Tensor::zeros({D});
        bp.w_qkv = rng.trunc_normal_tensor({D, 3 * D}, 0.02);
        bp.b_qkv = Tensor::zeros({3 * D});
        bp.w_proj = rng.trunc_normal_tensor({D, D}, 0.02);
        bp.b_proj = Tensor::zeros({D});
        bp.ln2_gain = Tensor::full({D}, 1.0);
        bp.ln2_bias = Tensor::zeros({D});
        bp.w_ffn1 = rng.trunc_normal_tensor({D, Dh}, 0.02);
        bp.b_ffn1 = Tensor::zeros({Dh});
        bp.w_ffn2 = rng.trunc_normal_tensor({Dh, D}, 0.02);
        bp.b_ffn2 = Tensor::zeros({D});
        p.blocks.push_back(std::move(bp));
    }
    p.w_head = Tensor::zeros({D, C});
    p.b_head = Tensor::zeros({C});
    return p;
}

// Visits every parameter with a stable name, in a stable order.
template <class Params, class Fn>
void for_each_param(Params&& p, Fn&& fn) {
    fn("embed.w", p.w_embed);
    fn("embed.b", p.b_embed);
    if (p.cls.size() > 0) fn("cls", p.cls);
    for (std::size_t b = 0; b < p.blocks.size(); ++b) {
        auto& bp = p.blocks[b];
        const std::string pre = "block" + std::to_string(b) + ".";
        fn(pre + "ln1.gain", bp.ln1_gain);
        fn(pre + "ln1.bias", bp.ln1_bias);
        fn(pre + "qkv.w", bp.w_qkv);
        fn(pre + "qkv.b", bp.b_qkv);
        fn(pre + "proj.w", bp.w_proj);
        fn(pre + "proj.b", bp.b_proj);
        fn(pre + "ln2.gain", bp.ln2_gain);
        fn(pre + "ln2.bias", bp.ln2_bias);
        fn(pre + "ffn1.w", bp.w_ffn1);
        fn(pre + "ffn1.b", bp.b_ffn1);
        fn(pre + "ffn2.w", bp.w_ffn2);
        fn(pre + "ffn2.b", bp.b_ffn2);
    }
    fn("head.w", p.w_head);
    fn("head.b", p.b_head);
}

// Mirror of ModelParams with every tensor lifted onto a tape.
struct BlockNodes {
    ad::Node *ln1_gain, *ln1_bias, *w_qkv, *b_qkv, *w_proj, *b_proj;
    ad::Node *ln2_gain, *ln2_bias, *w_ffn1, *b_ffn1, *w_ffn2, *b_ffn2;
};

struct ModelNodes {
    ad::Node *w_embed, *b_embed;
    ad::Node* cls = nullptr;
    std::vector<BlockNodes> blocks;
    ad::Node *w_head, *b_head;
};

inline ModelNodes lift_params(ad::Tape& tape, const ModelParams& p) {
    ModelNodes n;
    n.w_embed = tape.leaf(p.w_embed);
    n.b_embed = tape.leaf(p.b_embed);
    if (p.cls.size() > 0) n.cls = tape.leaf(p.cls);
    for (const auto& bp : p.blocks) {
        BlockNodes bn;
        bn.ln1_gain = tape.leaf(bp.ln1_gain);
        bn.ln1_bias = tape.leaf(bp.ln1_bias);
        bn.w_qkv = tape.leaf(bp.w_qkv);
        bn.b_qkv = tape.leaf(bp.b_qkv);
        bn.w_proj = tape.leaf(bp.w_proj);
        bn.b_proj = tape.leaf(bp.b_proj);
        bn.ln2_gain = tape.leaf(bp.ln2_gain);
        bn.ln2_bias = tape.leaf(bp.ln2_bias);
        bn.w_ffn1 = tape.leaf(bp.w_ffn1);
        bn.b_ffn1 = tape.leaf(bp.b_ffn1);
        bn.w_ffn2 = tape.leaf(bp.w_ffn2);
        bn.b_ffn2 = tape.leaf(bp.b_ffn2);
        n.blocks.push_back(bn);
    }
    n.w_head = tape.leaf(p.w_head);
    n.b_head = tape.leaf(p.b_head);
    return n;
}

template <class Fn>
void for_each_node(ModelNodes& n, Fn&& fn) {
    fn("embed.w", n.w_embed);
    fn("embed.b", n.b_embed);
    if (n.cls) fn("cls", n.cls);
    for (std::size_t b = 0; b < n.blocks.size(); ++b) {
        auto& bn = n.blocks[b];
        const std::string pre = "block" + std::to_string(b) + ".";
        fn(pre + "ln1.gain", bn.ln1_gain);
        fn(pre + "ln1.bias", bn.ln1_bias);
        fn(pre + "qkv.w", bn.w_qkv);
        fn(pre + "qkv.b", bn.b_qkv);
        fn(pre + "proj.w", bn.w_proj);
        fn(pre + "proj.b", bn.b_proj);
        fn(pre + "ln2.gain", bn.ln2_gain);
        fn(pre + "ln2.bias", bn.ln2_bias);
        fn(pre + "ffn1.w", bn.w_ffn1);
        fn(pre + "ffn1.b", bn.b_ffn1);
        fn(pre + "ffn2.w", bn.w_ffn2);
        fn(pre + "ffn2.b", bn.b_ffn2);
    }
    fn("head.w", n.w_head);
    fn("head.b", n.b_head);
}

// Optional capture of the normalized Q/K matrix (all heads concatenated) at
// one layer, for the saliency pipeline.
struct Capture {
    int layer = 0;      // block index
    char matrix = 'q';  // 'q' or 'k'
    Tensor out;         // N x D after the forward
};

// Differentiable attention over tape nodes; same math as attention_forward.
inline ad::Node* attention_forward_ad(ad::Tape& tape, ad::Node* x, const AttentionConfig& cfg,
                                      const BlockNodes& w, Capture* capture = nullptr,
                                      bool capture_here = false) {
    cfg.validate();
    const auto D = static_cast<std::size_t>(cfg.dim);
    const std::size_t H = static_cast<std::size_t>(cfg.heads), d = D / H;
    const std::size_t N = x->value.rows();

    ad::Node* qkv = tape.add_row_bias(tape.matmul(x, w.w_qkv), w.b_qkv);
    ad::Node* q = tape.slice_cols(qkv, 0, D);
    ad::Node* k = tape.slice_cols(qkv, D, 2 * D);
    ad::Node* v = tape.slice_cols(qkv, 2 * D, 3 * D);

    auto normalize = [&](ad::Node* m) -> ad::Node* {
        switch (cfg.normalization) {
            case Normalization::L1: return tape.l1_normalize_columns(m, cfg.norm_eps);
            case Normalization::L2: return tape.l2_normalize_columns(m, cfg.norm_eps);
            default: return m;
        }
    };

    std::vector<ad::Node*> outs, captured;
    for (std::size_t h = 0; h < H; ++h) {
        const std::size_t c0 = h * d, c1 = (h + 1) * d;
        ad::Node* qh = tape.slice_cols(q, c0, c1);
        ad::Node* kh = tape.slice_cols(k, c0, c1);
        ad::Node* vh = tape.slice_cols(v, c0, c1);
        ad::Node* oh = nullptr;
        switch (cfg.variant) {
            case AttentionVariant::SimA: {
                qh = normalize(qh);
                kh = normalize(kh);
                if (capture_here && capture) captured.push_back(capture->matrix == 'k' ? kh : qh);
                const Ordering ord = resolve_ordering(cfg.ordering, N, d);
                oh = ord == Ordering::TokensFirst
                         ? tape.matmul(tape.matmul(qh, tape.transpose(kh)), vh)
                         : tape.matmul(qh, tape.matmul(tape.transpose(kh), vh));
                break;
            }
            case AttentionVariant::MSA: {
                ad::Node* scores =
                    tape.scale(tape.matmul(qh, tape.transpose(kh)), 1.0 / std::sqrt(double(d)));
                oh = tape.matmul(tape.softmax_rows(scores), vh);
                break;
            }
            case AttentionVariant::XCA: {
                ad::Node* scores = tape.matmul(tape.transpose(kh), qh);
                ad::Node* a = tape.transpose(tape.softmax_rows(tape.transpose(scores)));
                oh = tape.matmul(vh, a);
                break;
            }
            default: { // EluLinear
                ad::Node* fq = tape.elu_phi(qh);
                ad::Node* fk = tape.elu_phi(kh);
                ad::Node* numer = tape.matmul(fq, tape.matmul(tape.transpose(fk), vh));
                ad::Node* ones = tape.leaf(Tensor::full({N, 1}, 1.0));
                ad::Node* denom = tape.matmul(fq, tape.matmul(tape.transpose(fk), ones));
                oh = tape.divide_rows(numer, denom);
                break;
            }
        }
        outs.push_back(oh);
    }
    if (!captured.empty() && capture) {
        std::vector<Tensor> vals;
        for (ad::Node* c : captured) vals.push_back(c->value);
        capture->out = concat_cols(vals);
    }
    return tape.add_row_bias(tape.matmul(tape.concat_cols(outs), w.w_proj), w.b_proj);
}

inline ad::Node* ffn_forward_ad(ad::Tape& tape, ad::Node* x, const BlockNodes& w,
                                Activation act) {
    ad::Node* h = tape.add_row_bias(tape.matmul(x, w.w_ffn1), w.b_ffn1);
    h = act == Activation::Gelu ? tape.gelu(h) : tape.relu(h);
    return tape.add_row_bias(tape.matmul(h, w.w_ffn2), w.b_ffn2);
}

// Pre-LayerNorm block: x + Attn(LN1(x)), then x + FFN(LN2(x)).
inline ad::Node* block_forward_ad(ad::Tape& tape, ad::Node* x, const ModelConfig& cfg,
                                  const BlockNodes& w, Capture* capture = nullptr,
                                  bool capture_here = false) {
    ad::Node* a = attention_forward_ad(tape, tape.layer_norm(x, w.ln1_gain, w.ln1_bias, cfg.norm_eps),
                                       cfg.attention_config(), w, capture, capture_here);
    x = tape.add(x, a);
    ad::Node* f = ffn_forward_ad(tape, tape.layer_norm(x, w.ln2_gain, w.ln2_bias, cfg.norm_eps),
                                 w, cfg.activation);
    return tape.add(x, f);
}

// Tokens (N_in x d_in) -> logits (1 x num_classes).
inline ad::Node* classifier_forward_ad(ad::Tape& tape, ad::Node* tokens, const ModelConfig& cfg,
                                       ModelNodes& w, Capture* capture = nullptr) {
    cfg.validate();
    const auto expected = static_cast<std::size_t>(cfg.patch_grid) * cfg.patch_grid;
    if (tokens->value.rows() != expected)
        throw ShapeError("classifier_forward: expected " + std::to_string(expected) +
                         " tokens, got " + std::to_string(tokens->value.rows()));
    if (tokens->value.cols() != static_cast<std::size_t>(cfg.d_in))
        throw ShapeError("classifier_forward: token width mismatch");

    ad::Node* x = tape.add_row_bias(tape.matmul(tokens, w.w_embed), w.b_embed);
    if (cfg.pooling == Pooling::ClsToken) x = tape.prepend_row(w.cls, x);
    for (int b = 0; b < cfg.depth; ++b)
        x = block_forward_ad(tape, x, cfg, w.blocks[b], capture,
                             capture && capture->layer == b);
    ad::Node* pooled = cfg.pooling == Pooling::MeanPool ? tape.mean_rows(x)
                                                        : tape.select_row(x, 0);
    return tape.add_row_bias(tape.matmul(pooled, w.w_head), w.b_head);
}

// ---------------------------------------------------------------------------
// Synthetic dataset

struct Sample {
    Tensor tokens; // (patch_grid^2) x d_in
    int label;
};

// Class 1 embeds signal_strength * (fixed unit direction) into half of the
// patches; class 0 is pure noise. Labels alternate, so the set is balanced.
inline std::vector<Sample> make_synthetic_dataset(std::uint64_t seed, int count, int patch_grid,
                                                  int d_in, double signal_strength) {
    if (signal_strength < 0) throw ConfigError("make_synthetic_dataset: signal_strength must be >= 0");
    const std::size_t n = static_cast<std::size_t>(patch_grid) * patch_grid;
    const auto din = static_cast<std::size_t>(d_in);

    Rng dir_rng(seed);
    Tensor signal = dir_rng.normal_tensor({din});
    double norm = 0;
    for (double v : signal.data) norm += v * v;
    norm = std::sqrt(norm);
    for (double& v : signal.data) v /= norm;

    std::vector<Sample> out;
    out.reserve(count);
    for (int s = 0; s < count; ++s) {
        Rng rng = Rng::fork(seed, static_cast<std::uint64_t>(s) + 1);
        Sample smp;
        smp.tokens = rng.normal_tensor({n, din});
        smp.label = s % 2;
        if (smp.label == 1) {
            // Random half of the patches carry the signal.
            std::vector<std::size_t> idx(n);
            for (std::size_t i = 0; i < n; ++i) idx[i] = i;
            for (std::size_t i = n - 1; i > 0; --i) std::swap(idx[i], idx[rng.index(i + 1)]);
            const std::size_t k = std::max<std::size_t>(1, n / 2);
            for (std::size_t i = 0; i < k; ++i)
                for (std::size_t j = 0; j < din; ++j)
                    smp.tokens(idx[i], j) += signal_strength * signal.data[j];
        }
        out.push_back(std::move(smp));
    }
    return out;
}

inline Tensor dataset_signal_direction(std::uint64_t seed, int d_in) {
    Rng dir_rng(seed);
    Tensor signal = dir_rng.normal_tensor({static_cast<std::size_t>(d_in)});
    double norm = 0;
    for (double v : signal.data) norm += v * v;
    norm = std::sqrt(norm);
    for (double& v : signal.data) v /= norm;
    return signal;
}

// ---------------------------------------------------------------------------
// Training

struct TraceRow {
    int step;
    double loss;
    double accuracy; // minibatch accuracy at this step
};

struct TrainOptions {
    int steps = 500;
    double lr = 1e-3;
    int batch_size = 32;
    std::uint64_t seed = 0;
    double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
    int eval_every = 25; // full train-set accuracy cadence; 0 disables
};

struct TrainResult {
    std::vector<TraceRow> trace;
    ModelParams params;
    double final_train_accuracy = 0;
    double best_train_accuracy = 0;
};

inline int predict_label(const Tensor& logits) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < logits.size(); ++j)
        if (logits.data[j] > logits.data[best]) best = j;
    return static_cast<int>(best);
}

inline double evaluate_accuracy(const ModelConfig& cfg, const ModelParams& params,
                                const std::vector<Sample>& data) {
    int hits = 0;
    for (const auto& s : data) {
        ad::Tape tape;
        ModelNodes nodes = lift_params(tape, params);
        ad::Node* logits = classifier_forward_ad(tape, tape.leaf(s.tokens), cfg, nodes);
        if (predict_label(logits->value) == s.label) ++hits;
    }
    return double(hits) / double(data.size());
}

// Adam + cross-entropy on minibatches. Deterministic given the seed.
// Throws TrainingDiverged on a non-finite loss.
inline TrainResult train_toy(const ModelConfig& cfg, const std::vector<Sample>& dataset,
                             const TrainOptions& opt) {
    cfg.validate();
    if (opt.steps < 1) throw ConfigError("train_toy: steps must be >= 1");
    if (dataset.empty()) throw ConfigError("train_toy: empty dataset");

    Rng init_rng(opt.seed);
    TrainResult res;
    res.params = init_params(cfg, init_rng);

    // Adam moments, keyed by parameter name.
    std::map<std::string, Tensor> m1, m2;
    for_each_param(res.params, [&](const std::string& name, const Tensor& t) {
        m1.emplace(name, Tensor::zeros(t.shape));
        m2.emplace(name, Tensor::zeros(t.shape));
    });

    Rng batch_rng(opt.seed ^ 0x5ca1ab1eULL);
    for (int step = 1; step <= opt.steps; ++step) {
        std::map<std::string, Tensor> grads;
        for_each_param(res.params, [&](const std::string& name, const Tensor& t) {
            grads.emplace(name, Tensor::zeros(t.shape));
        });

        double loss_sum = 0;
        int hits = 0;
        for (int b = 0; b < opt.batch_size; ++b) {
            const Sample& s = dataset[batch_rng.index(dataset.size())];
            ad::Tape tape;
            ModelNodes nodes = lift_params(tape, res.params);
            ad::Node* logits = classifier_forward_ad(tape, tape.leaf(s.tokens), cfg, nodes);
            ad::Node* loss = tape.cross_entropy_with_logits(
                logits, static_cast<std::size_t>(s.label));
            loss_sum += loss->value.data[0];
            if (predict_label(logits->value) == s.label) ++hits;
            tape.backward(loss);
            for_each_node(nodes, [&](const std::string& name, ad::Node* n) {
                Tensor& g = grads.at(name);
                for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += n->grad.data[i];
            });
        }

        const double loss = loss_sum / opt.batch_size;
        if (!std::isfinite(loss)) throw TrainingDiverged(step);

        const double bc1 = 1.0 - std::pow(opt.beta1, step);
        const double bc2 = 1.0 - std::pow(opt.beta2, step);
        for_each_param(res.params, [&](const std::string& name, Tensor& t) {
            Tensor& g = grads.at(name);
            Tensor& v1 = m1.at(name);
            Tensor& v2 = m2.at(name);
            for (std::size_t i = 0; i < t.size(); ++i) {
                const double gi = g.data[i] / opt.batch_size;
                v1.data[i] = opt.beta1 * v1.data[i] + (1 - opt.beta1) * gi;
                v2.data[i] = opt.beta2 * v2.data[i] + (1 - opt.beta2) * gi * gi;
                t.data[i] -= opt.lr * (v1.data[i] / bc1) /
                             (std::sqrt(v2.data[i] / bc2) + opt.adam_eps);
            }
        });

        res.trace.push_back({step, loss, double(hits) / opt.batch_size});
        if (opt.eval_every > 0 && (step % opt.eval_every == 0 || step == opt.steps)) {
            const double acc = evaluate_accuracy(cfg, res.params, dataset);
            res.final_train_accuracy = acc;
            res.best_train_accuracy = std::max(res.best_train_accuracy, acc);
        }
    }
    if (opt.eval_every <= 0) {
        res.final_train_accuracy = evaluate_accuracy(cfg, res.params, dataset);
        res.best_train_accuracy = std::max(res.best_train_accuracy, res.final_train_accuracy);
    }
    return res;
}

// Max |Qhat Khat^T| of the first block's first head at initialization; used to
// demonstrate the unbounded-attention mechanism of the no-normalization
// ablation.
inline double attention_magnitude_at_init(const ModelConfig& cfg, std::uint64_t seed,
                                          double input_scale) {
    Rng rng(seed);
    ModelParams params = init_params(cfg, rng);
    Rng data_rng(seed ^ 0xabcdef);
    Tensor tokens = data_rng.normal_tensor(
        {static_cast<std::size_t>(cfg.patch_grid) * cfg.patch_grid,
         static_cast<std::size_t>(cfg.d_in)});
    for (double& v : tokens.data) v *= input_scale;

    const auto D = static_cast<std::size_t>(cfg.dim);
    const std::size_t d = D / cfg.heads;
    Tensor x = add_row_bias(matmul(tokens, params.w_embed), params.b_embed);
    x = layer_norm(x, params.blocks[0].ln1_gain, params.blocks[0].ln1_bias, cfg.norm_eps);
    // LayerNorm removes per-row scale, so rescale afterwards to expose the
    // raw-magnitude mechanism the ablation is about.
    for (double& v : x.data) v *= input_scale;
    Tensor qkv = add_row_bias(matmul(x, params.blocks[0].w_qkv), params.blocks[0].b_qkv);
    Tensor q = slice_cols(qkv, std::size_t(0), d);
    Tensor k = slice_cols(qkv, D, D + d);
    q = normalize_columns(q, cfg.normalization, cfg.norm_eps);
    k = normalize_columns(k, cfg.normalization, cfg.norm_eps);
    return max_abs(matmul(q, transpose(k)));
}

// ---------------------------------------------------------------------------
// Checkpoint + trace serialization (plain text, documented in the README)

inline void save_checkpoint(const ModelConfig& cfg, const ModelParams& params,
                            const std::string& path) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot open checkpoint for writing: " + path);
    f.precision(17);
    f << "sima-checkpoint 1\n";
    f << "depth " << cfg.depth << "\ndim " << cfg.dim << "\nheads " << cfg.heads
      << "\nffn_ratio " << cfg.ffn_ratio << "\nactivation "
      << (cfg.activation == Activation::Gelu ? "gelu" : "relu") << "\nvariant "
      << to_string(cfg.variant) << "\nnormalization "
      << (cfg.normalization == Normalization::L1
              ? "l1"
              : (cfg.normalization == Normalization::L2 ? "l2" : "none"))
      << "\npooling " << (cfg.pooling == Pooling::MeanPool ? "mean" : "cls") << "\npatch_grid "
      << cfg.patch_grid << "\nd_in " << cfg.d_in << "\nnum_classes " << cfg.num_classes
      << "\nqkv_bias " << (cfg.qkv_bias ? 1 : 0) << "\n";
    std::size_t count = 0;
    for_each_param(params, [&](const std::string&, const Tensor&) { ++count; });
    f << "tensors " << count << "\n";
    for_each_param(params, [&](const std::string& name, const Tensor& t) {
        f << name << " " << t.rank();
        for (auto s : t.shape) f << " " << s;
        f << "\n";
        for (std::size_t i = 0; i < t.size(); ++i) f << (i ? " " : "") << t.data[i];
        f << "\n";
    });
    if (!f) throw IoError("write failed: " + path);
}

inline std::pair<ModelConfig, ModelParams> load_checkpoint(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open checkpoint: " + path);
    std::string magic;
    int version = 0;
    f >> magic >> version;
    if (magic != "sima-checkpoint" || version != 1)
        throw IoError("not a sima checkpoint: " + path);

    ModelConfig cfg;
    std::string key;
    std::size_t tensor_count = 0;
    while (f >> key) {
        if (key == "tensors") {
            f >> tensor_count;
            break;
        }
        std::string val;
        f >> val;
        if (key == "depth") cfg.depth = std::stoi(val);
        else if (key == "dim") cfg.dim = std::stoi(val);
        else if (key == "heads") cfg.heads = std::stoi(val);
        else if (key == "ffn_ratio") cfg.ffn_ratio = std::stoi(val);
        else if (key == "activation") cfg.activation = val == "relu" ? Activation::Relu : Activation::Gelu;
        else if (key == "variant") {
            if (val == "sima") cfg.variant = AttentionVariant::SimA;
            else if (val == "msa") cfg.variant = AttentionVariant::MSA;
            else if (val == "xca") cfg.variant = AttentionVariant::XCA;
            else cfg.variant = AttentionVariant::EluLinear;
        } else if (key == "normalization")
            cfg.normalization = val == "l1" ? Normalization::L1
                                            : (val == "l2" ? Normalization::L2 : Normalization::None);
        else if (key == "pooling") cfg.pooling = val == "cls" ? Pooling::ClsToken : Pooling::MeanPool;
        else if (key == "patch_grid") cfg.patch_grid = std::stoi(val);
        else if (key == "d_in") cfg.d_in = std::stoi(val);
        else if (key == "num_classes") cfg.num_classes = std::stoi(val);
        else if (key == "qkv_bias") cfg.qkv_bias = val != "0";
        else throw IoError("unknown checkpoint key: " + key);
    }

    std::map<std::string, Tensor> tensors;
    for (std::size_t t = 0; t < tensor_count; ++t) {
        std::string name;
        std::size_t rank;
        f >> name >> rank;
        std::vector<std::size_t> shape(rank);
        for (auto& s : shape) f >> s;
        Tensor ten(shape);
        for (auto& v : ten.data) f >> v;
        tensors.emplace(name, std::move(ten));
    }
    if (!f) throw IoError("truncated checkpoint: " + path);

    Rng dummy(0);
    ModelParams params = init_params(cfg, dummy);
    if (cfg.pooling == Pooling::ClsToken) params.cls = Tensor::zeros({1, std::size_t(cfg.dim)});
    for_each_param(params, [&](const std::string& name, Tensor& t) {
        auto it = tensors.find(name);
        if (it == tensors.end()) throw IoError("checkpoint missing tensor: " + name);
        if (it->second.shape != t.shape) throw IoError("checkpoint shape mismatch for " + name);
        t = it->second;
    });
    return {cfg, params};
}

inline void save_trace_csv(const std::vector<TraceRow>& trace, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot open trace for writing: " + path);
    f << "step,loss,accuracy\n";
    f.precision(10);
    for (const auto& r : trace) f << r.step << "," << r.loss << "," << r.accuracy << "\n";
    if (!f) throw IoError("write failed: " + path);
}

} // namespace sima
