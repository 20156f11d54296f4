#include <cstdlib>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "sima/bench.hpp"
#include "sima/checks.hpp"
#include "sima/model.hpp"
#include "sima/viz.hpp"

using namespace sima;

namespace {

constexpr const char* kSupportedVariants = "sima, msa, xca, elu";

AttentionVariant parse_variant(const std::string& s) {
    if (s == "sima") return AttentionVariant::SimA;
    if (s == "msa") return AttentionVariant::MSA;
    if (s == "xca") return AttentionVariant::XCA;
    if (s == "elu") return AttentionVariant::EluLinear;
    throw CLI::ValidationError("--variant",
                               "unknown variant '" + s + "'; supported: " + kSupportedVariants);
}

std::vector<int> parse_int_list(const std::string& s, const std::string& flag) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t pos = 0;
            const int v = std::stoi(item, &pos);
            if (pos != item.size()) throw std::invalid_argument(item);
            out.push_back(v);
        } catch (const std::exception&) {
            throw CLI::ValidationError(flag, "expected a comma-separated integer list, got '" +
                                                 s + "'");
        }
    }
    if (out.empty()) throw CLI::ValidationError(flag, "empty list");
    return out;
}

std::uint64_t default_seed() {
    if (const char* env = std::getenv("SIMA_SEED")) {
        try {
            return std::stoull(env);
        } catch (const std::exception&) {
            std::cerr << "warning: ignoring non-numeric SIMA_SEED\n";
        }
    }
    return 0;
}

// ---------------------------------------------------------------------------

int cmd_check(std::uint64_t seed, int trials, const std::string& sizes_str) {
    checks::Options opt;
    opt.seed = seed;
    opt.trials = trials;
    if (!sizes_str.empty()) opt.sizes = parse_int_list(sizes_str, "--sizes");
    if (trials < 0) throw CLI::ValidationError("--trials", "must be >= 0");
    if (trials == 0) {
        std::cout << "warning: --trials 0 requested; all properties pass vacuously\n";
        return 0;
    }
    const auto results = checks::run_all(opt);
    bool all = true;
    for (const auto& r : results) {
        std::cout << std::left << std::setw(28) << r.name << (r.passed ? "PASS" : "FAIL")
                  << "  max_error=" << format_sig6(r.max_error);
        if (!r.passed && !r.detail.empty()) std::cout << "  (" << r.detail << ")";
        std::cout << "\n";
        all = all && r.passed;
    }
    return all ? 0 : 1;
}

int cmd_bench(std::uint64_t seed, int precision, const std::string& variants_str,
              const std::string& n_str, const std::string& d_str, int heads, int repeats,
              int warmup, bool fix_ordering, const std::string& csv_path,
              const std::string& plot_path) {
    BenchSpec spec;
    spec.seed = seed;
    spec.precision = precision;
    std::stringstream ss(variants_str);
    std::string item;
    while (std::getline(ss, item, ',')) spec.variants.push_back(parse_variant(item));
    spec.n_values = parse_int_list(n_str, "--n-sweep");
    spec.d_values = parse_int_list(d_str, "--d-sweep");
    spec.heads = heads;
    spec.repeats = repeats;
    spec.warmup = warmup;
    spec.fix_ordering = fix_ordering;

    const BenchOutput out = run_bench(spec);
    for (const auto& w : out.warnings) std::cerr << "warning: " << w << "\n";
    std::cout << csv_header() << "\n";
    for (const auto& r : out.records)
        std::cout << to_string(r.variant) << "," << r.n << "," << r.d << "," << r.h << ","
                  << (r.ordering_used ? to_string(*r.ordering_used) : "NotApplicable") << "," << format_sig6(r.mean_ms) << ","
                  << format_sig6(r.min_ms) << "," << format_sig6(r.stddev_ms) << "," << r.exp_ops
                  << "," << r.mul_adds << "\n";
    if (!csv_path.empty()) emit_csv(out.records, csv_path);
    if (!plot_path.empty()) emit_plotdata(out.records, plot_path);
    return 0;
}

int cmd_train(std::uint64_t seed, const std::string& variant, int heads,
              const std::string& activation, const std::string& norm, int depth, int dim,
              int steps, double lr, int grid, double signal, int samples,
              const std::string& out_prefix) {
    ModelConfig cfg;
    cfg.variant = parse_variant(variant);
    cfg.heads = heads;
    cfg.depth = depth;
    cfg.dim = dim;
    cfg.patch_grid = grid;
    if (activation == "gelu") cfg.activation = Activation::Gelu;
    else if (activation == "relu") cfg.activation = Activation::Relu;
    else throw CLI::ValidationError("--activation", "expected gelu or relu");
    if (norm == "l1") cfg.normalization = Normalization::L1;
    else if (norm == "l2") cfg.normalization = Normalization::L2;
    else if (norm == "none") cfg.normalization = Normalization::None;
    else throw CLI::ValidationError("--norm", "expected l1, l2 or none");

    const auto data = make_synthetic_dataset(seed, samples, cfg.patch_grid, cfg.d_in, signal);
    TrainOptions opt;
    opt.steps = steps;
    opt.lr = lr;
    opt.seed = seed;

    try {
        const TrainResult res = train_toy(cfg, data, opt);
        std::cout << "trained " << steps << " steps: final_accuracy="
                  << format_sig6(res.final_train_accuracy)
                  << " best_accuracy=" << format_sig6(res.best_train_accuracy) << "\n";
        if (!out_prefix.empty()) {
            save_trace_csv(res.trace, out_prefix + ".trace.csv");
            save_checkpoint(cfg, res.params, out_prefix + ".ckpt");
            std::cout << "wrote " << out_prefix << ".trace.csv and " << out_prefix << ".ckpt\n";
        }
        return 0;
    } catch (const TrainingDiverged& e) {
        std::cerr << "training diverged at step " << e.step << "\n";
        return 1;
    }
}

int cmd_saliency(std::uint64_t seed, const std::string& ckpt_path, int layer,
                 const std::string& matrix, const std::string& input_path,
                 const std::string& out_path, int upscale) {
    if (matrix != "q" && matrix != "k")
        throw CLI::ValidationError("--matrix", "expected q or k");
    const auto [cfg, params] = load_checkpoint(ckpt_path);
    if (layer < 0 || layer >= cfg.depth)
        throw CLI::ValidationError("--layer", "out of range; checkpoint has depth " +
                                                  std::to_string(cfg.depth));
    const auto g = static_cast<std::size_t>(cfg.patch_grid);
    const auto din = static_cast<std::size_t>(cfg.d_in);

    Tensor tokens({g * g, din});
    if (!input_path.empty()) {
        // grayscale PGM; each pixel becomes one token with its value
        // broadcast across the input channels
        const Tensor img = read_pgm(input_path);
        if (img.rows() != g || img.cols() != g)
            throw CLI::ValidationError("--input", "PGM must be " + std::to_string(g) + "x" +
                                                      std::to_string(g) +
                                                      " to match the checkpoint's patch grid");
        for (std::size_t t = 0; t < g * g; ++t)
            for (std::size_t j = 0; j < din; ++j) tokens.data[t * din + j] = img.data[t];
    } else {
        const auto data = make_synthetic_dataset(seed, 1, cfg.patch_grid, cfg.d_in, 3.0);
        tokens = data[0].tokens;
    }

    Capture capture;
    capture.layer = layer;
    capture.matrix = matrix[0];
    ad::Tape tape;
    ModelNodes nodes = lift_params(tape, params);
    classifier_forward_ad(tape, tape.leaf(tokens), cfg, nodes, &capture);

    Tensor m = capture.out;
    if (cfg.pooling == Pooling::ClsToken) {
        // drop the class token; the map covers the patch grid only
        Tensor patches({g * g, m.cols()});
        for (std::size_t i = 0; i < g * g; ++i)
            for (std::size_t j = 0; j < m.cols(); ++j) patches(i, j) = m(i + 1, j);
        m = patches;
    }
    SaliencyMap map = token_saliency(m, g);
    map.source = matrix[0];
    map.layer = layer;
    write_pgm(map, out_path, upscale);
    std::cout << "wrote " << out_path << " (" << g * std::size_t(upscale) << "x"
              << g * std::size_t(upscale) << ", layer " << layer << ", matrix " << matrix << ")\n";
    return 0;
}

int cmd_flops(const std::string& variant_str, int n, int d, int heads,
              const std::string& ordering_str) {
    const AttentionVariant variant = parse_variant(variant_str);
    if (n < 1 || d < 1 || heads < 1 || d % heads != 0)
        throw CLI::ValidationError("--n/--d/--heads",
                                   "need positive N, D, heads with heads dividing D");
    OrderingPolicy policy = OrderingPolicy::Auto;
    if (ordering_str == "tokens-first") policy = OrderingPolicy::TokensFirst;
    else if (ordering_str == "channels-first") policy = OrderingPolicy::ChannelsFirst;
    else if (ordering_str != "auto")
        throw CLI::ValidationError("--ordering", "expected auto, tokens-first or channels-first");

    const auto N = std::uint64_t(n), D = std::uint64_t(d), H = std::uint64_t(heads);
    const std::uint64_t dh = D / H;
    const ExpCount exps = count_exp_ops(variant, N, D, H);

    std::cout << "variant " << to_string(variant) << "  N=" << n << " D=" << d << " H=" << heads
              << " d_head=" << dh << "\n";
    switch (variant) {
        case AttentionVariant::MSA:
            std::cout << "exp_ops nominal:      H*N^2 = " << exps.nominal << "\n"
                      << "exp_ops instrumented: H*N^2 = " << exps.instrumented << "\n";
            break;
        case AttentionVariant::XCA:
            std::cout << "exp_ops nominal:      H*D^2 = " << exps.nominal << "\n"
                      << "exp_ops instrumented: H*(D/H)^2 = " << exps.instrumented << "\n";
            break;
        case AttentionVariant::SimA:
            std::cout << "exp_ops nominal:      0\n"
                      << "exp_ops instrumented: 0\n";
            break;
        case AttentionVariant::EluLinear:
            std::cout << "exp_ops nominal:      <= 2*N*D = " << exps.nominal << "\n"
                      << "exp_ops instrumented: <= 2*N*D = " << exps.instrumented
                      << " (one exp per negative pre-activation)\n";
            break;
    }
    std::cout << "mul_adds tokens-first:   2*H*N^2*d_head = "
              << flops_estimate(variant, N, D, H, Ordering::TokensFirst) << "\n"
              << "mul_adds channels-first: 2*H*N*d_head^2 = "
              << flops_estimate(variant, N, D, H, Ordering::ChannelsFirst) << "\n";
    const Ordering rec = resolve_ordering(policy, std::size_t(N), std::size_t(dh));
    std::cout << (policy == OrderingPolicy::Auto ? "auto ordering: " : "forced ordering: ")
              << to_string(rec) << "\n";

    // the cosine re-weighting comparison: 4 regrouped products per QK product
    const std::uint64_t sima_qk = H * N * N * dh;
    std::cout << "cosformer qk-product mul_adds: " << cosformer_flops_factor() * sima_qk << " ("
              << cosformer_flops_factor() << "x sima's " << sima_qk << ")\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"sima: softmax-free attention library tools"};
    app.require_subcommand(1);

    std::uint64_t seed = default_seed();
    int precision = 32;
    app.add_option("--seed", seed, "global RNG seed (falls back to SIMA_SEED)");

    // check
    auto* check = app.add_subcommand("check", "run the invariant and property suites")->fallthrough();
    int trials = 5;
    std::string sizes_str;
    check->add_option("--trials", trials, "random trials per property");
    check->add_option("--sizes", sizes_str, "comma-separated matrix sizes");

    // bench
    auto* bench = app.add_subcommand("bench", "time attention variants and emit CSV/plot data")->fallthrough();
    std::string variants_str = "sima,msa,xca,elu";
    std::string n_str = "256", d_str = "64";
    int heads = 8, repeats = 1000, warmup = 50;
    bool fix_ordering = true;
    std::string csv_path, plot_path;
    bench->add_option("--variants", variants_str, "comma list of: " + std::string(kSupportedVariants));
    bench->add_option("--n-sweep", n_str, "comma list of token counts");
    bench->add_option("--d-sweep", d_str, "comma list of model widths");
    bench->add_option("--heads", heads, "head count");
    bench->add_option("--repeats", repeats, "timed repetitions");
    bench->add_option("--warmup", warmup, "untimed warmup passes");
    bench->add_flag("--fix-ordering,!--no-fix-ordering", fix_ordering,
                    "force one product order across variants (default on)");
    bench->add_option("--precision", precision, "32 or 64 bit floats");
    bench->add_option("--csv", csv_path, "write records to this CSV file");
    bench->add_option("--plotdata", plot_path, "write per-variant series to this file");

    // train
    auto* train = app.add_subcommand("train", "train the toy classifier on synthetic data")->fallthrough();
    std::string variant = "sima", activation = "gelu", norm = "l1", out_prefix;
    int t_heads = 4, depth = 2, dim = 32, steps = 500, grid = 4, samples = 256;
    double lr = 1e-3, signal = 3.0;
    train->add_option("--variant", variant, "attention variant");
    train->add_option("--heads", t_heads, "head count");
    train->add_option("--activation", activation, "gelu or relu");
    train->add_option("--norm", norm, "l1, l2 or none");
    train->add_option("--depth", depth, "transformer blocks");
    train->add_option("--dim", dim, "model width");
    train->add_option("--steps", steps, "optimizer steps");
    train->add_option("--lr", lr, "Adam learning rate");
    train->add_option("--grid", grid, "patch grid side");
    train->add_option("--signal", signal, "dataset signal strength");
    train->add_option("--samples", samples, "dataset size");
    train->add_option("--out", out_prefix, "output prefix for trace CSV and checkpoint");

    // saliency
    auto* sal = app.add_subcommand("saliency", "export a token-saliency map as PGM")->fallthrough();
    std::string ckpt_path, matrix = "q", input_path, sal_out = "saliency.pgm";
    int layer = 0, upscale = 1;
    sal->add_option("--checkpoint", ckpt_path, "model checkpoint")->required();
    sal->add_option("--layer", layer, "block index to capture");
    sal->add_option("--matrix", matrix, "q or k");
    sal->add_option("--input", input_path, "input PGM (grid x grid); omitted = synthetic sample");
    sal->add_option("--out", sal_out, "output PGM path");
    sal->add_option("--upscale", upscale, "nearest-neighbor upscale factor");

    // flops
    auto* flops = app.add_subcommand("flops", "print exp-op and mul-add cost predictions")->fallthrough();
    std::string f_variant = "sima", ordering_str = "auto";
    int f_n = 256, f_d = 64, f_heads = 8;
    flops->add_option("--variant", f_variant, "attention variant");
    flops->add_option("--n", f_n, "token count");
    flops->add_option("--d", f_d, "model width");
    flops->add_option("--heads", f_heads, "head count");
    flops->add_option("--ordering", ordering_str, "auto, tokens-first or channels-first");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (check->parsed()) return cmd_check(seed, trials, sizes_str);
        if (bench->parsed())
            return cmd_bench(seed, precision, variants_str, n_str, d_str, heads, repeats, warmup,
                             fix_ordering, csv_path, plot_path);
        if (train->parsed())
            return cmd_train(seed, variant, t_heads, activation, norm, depth, dim, steps, lr,
                             grid, signal, samples, out_prefix);
        if (sal->parsed())
            return cmd_saliency(seed, ckpt_path, layer, matrix, input_path, sal_out, upscale);
        if (flops->parsed()) return cmd_flops(f_variant, f_n, f_d, f_heads, ordering_str);
    } catch (const CLI::ValidationError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
