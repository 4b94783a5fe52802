#include "optspa/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "optspa/checkpoint_io.hpp"
#include "optspa/errors.hpp"
#include "optspa/model.hpp"
#include "optspa/prune.hpp"
#include "optspa/quant.hpp"
#include "optspa/records.hpp"
#include "optspa/search.hpp"

namespace optspa {

namespace fs = std::filesystem;

namespace {

struct RunConfig {
    std::string model, corpus, calib, out, ledger, kv_bits_path, profile;
    std::string metric = "optspa";
    std::string bits;
    double sparsity = 0.0;
    double overall = 0.5;
    std::size_t trials = 50;
    unsigned long long seed = kDefaultSeed;
    std::size_t ctx = 0;  // 0 = model max_seq
    std::size_t samples = 256;
    bool per_matrix = false;
    bool per_row = false;
    bool record_time = false;
    ModelConfig model_config;
};

void require_input(const std::string& path, const char* flag) {
    if (path.empty()) throw CLI::ValidationError(std::string(flag) + " is required");
    if (!fs::is_regular_file(path)) throw std::runtime_error("input file '" + path + "' does not exist");
}

void require_output(const std::string& path, const char* flag) {
    if (path.empty()) throw CLI::ValidationError(std::string(flag) + " is required");
    const auto parent = fs::path(path).parent_path();
    if (!parent.empty() && !fs::is_directory(parent)) {
        throw std::runtime_error("output directory '" + parent.string() + "' does not exist");
    }
}

std::string fixed4(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

std::vector<std::uint8_t> load_corpus(const std::string& path) { return tokenize_bytes(read_text_file(path)); }

std::size_t effective_ctx(const RunConfig& rc, const Checkpoint& model) {
    return rc.ctx == 0 ? model.config.max_seq : rc.ctx;
}

std::vector<int> parse_bit_list(const std::string& text) {
    std::vector<int> bits;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        int b = 0;
        const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), b);
        if (ec != std::errc() || ptr != item.data() + item.size()) {
            throw CLI::ValidationError("--bits: '" + item + "' is not an integer");
        }
        bits.push_back(b);
    }
    if (bits.empty()) throw CLI::ValidationError("--bits: empty list");
    return bits;
}

KVCacheConfig kv_from_flags(const RunConfig& rc, const Checkpoint& model) {
    const std::size_t L = model.config.n_layers;
    if (!rc.kv_bits_path.empty() && !rc.bits.empty()) throw CLI::ValidationError("use --kv-bits or --bits, not both");
    if (!rc.kv_bits_path.empty()) {
        return make_kv_config(bandwidth_profile_from_json(read_text_file(rc.kv_bits_path)), L);
    }
    if (!rc.bits.empty()) {
        auto bits = parse_bit_list(rc.bits);
        if (bits.size() == 1) bits.assign(L, bits[0]);
        return make_kv_config(BandwidthProfile{bits}, L);
    }
    return KVCacheConfig::passthrough(L);
}

std::optional<CalibrationStats> calib_from_flags(const RunConfig& rc, const Checkpoint& model, MetricKind metric,
                                                 std::ostream& out) {
    if (!metric_needs_activations(metric)) return std::nullopt;
    if (!rc.calib.empty()) return load_calibration(rc.calib);
    if (rc.corpus.empty()) throw CLI::ValidationError("metric needs --calib or --corpus");
    const auto corpus = load_corpus(rc.corpus);
    const std::size_t n = std::min(rc.samples, corpus.size());
    out << "calibrating on " << n << " tokens\n";
    return calibrate(model, corpus, n);
}

int cmd_gen_model(const RunConfig& rc, std::ostream& out) {
    require_output(rc.out, "--out");
    out << "seed=" << rc.seed << "\n";
    const auto ckpt = generate_toy_model(rc.model_config, rc.seed);
    save_checkpoint(rc.out, ckpt);
    out << "wrote " << rc.out << "\n";
    return 0;
}

int cmd_calibrate(const RunConfig& rc, std::ostream& out) {
    require_input(rc.model, "--model");
    require_input(rc.corpus, "--corpus");
    require_output(rc.out, "--out");
    const auto model = load_checkpoint(rc.model);
    const auto stats = calibrate(model, load_corpus(rc.corpus), rc.samples);
    save_calibration(rc.out, stats);
    out << "calibrated " << stats.n_tokens << " tokens -> " << rc.out << "\n";
    return 0;
}

int cmd_prune(const RunConfig& rc, std::ostream& out) {
    require_input(rc.model, "--model");
    require_output(rc.out, "--out");
    if (!rc.calib.empty()) require_input(rc.calib, "--calib");
    if (!rc.profile.empty()) require_input(rc.profile, "--profile");
    const auto metric = parse_metric(rc.metric);
    const auto model = load_checkpoint(rc.model);
    const auto profile = rc.profile.empty() ? SparsityProfile::uniform(model.config.n_layers, rc.sparsity)
                                            : sparsity_profile_from_json(read_text_file(rc.profile));
    const auto calib = calib_from_flags(rc, model, metric, out);
    const auto result = apply_profile(model, profile, calib ? &*calib : nullptr, metric,
                                      rc.per_row ? MaskGrouping::row : MaskGrouping::matrix);
    save_checkpoint(rc.out, result.model);
    const auto rep = measure_sparsity(result.masks);
    out << "matrix,sparsity\n";
    for (const auto& [name, r] : rep.per_matrix) out << name << "," << fixed4(r) << "\n";
    out << "overall," << fixed4(rep.overall) << "\n";
    return 0;
}

int cmd_eval(const RunConfig& rc, std::ostream& out) {
    require_input(rc.model, "--model");
    require_input(rc.corpus, "--corpus");
    if (!rc.kv_bits_path.empty()) require_input(rc.kv_bits_path, "--kv-bits");
    const auto model = load_checkpoint(rc.model);
    const auto kv = kv_from_flags(rc, model);
    out << fixed4(perplexity(model, load_corpus(rc.corpus), kv, effective_ctx(rc, model))) << "\n";
    return 0;
}

int cmd_search_sparsity(const RunConfig& rc, std::ostream& out) {
    require_input(rc.model, "--model");
    require_input(rc.corpus, "--corpus");
    if (!rc.calib.empty()) require_input(rc.calib, "--calib");
    require_output(rc.out, "--out");
    require_output(rc.ledger, "--ledger");
    out << "seed=" << rc.seed << "\n";
    const auto metric = parse_metric(rc.metric);
    const auto model = load_checkpoint(rc.model);
    const auto corpus = load_corpus(rc.corpus);
    const auto calib = calib_from_flags(rc, model, metric, out);
    const auto space = make_sparsity_space(model.config, rc.overall, rc.per_matrix);

    SparsityObjectiveConfig oc;
    oc.metric = metric;
    oc.grouping = rc.per_row ? MaskGrouping::row : MaskGrouping::matrix;
    oc.ctx = effective_ctx(rc, model);
    const auto objective = sparsity_objective(model, corpus, calib ? &*calib : nullptr, space, oc);

    SearchOptions opts;
    opts.trials = rc.trials;
    opts.seed = rc.seed;
    opts.record_time = rc.record_time;
    const auto result = run_search(space, objective, opts);

    write_text_file(rc.ledger, ledger_text(space, result.ledger));
    write_text_file(rc.out, sparsity_profile_to_json(to_sparsity_profile(space, result.best, model.config.n_layers)));
    out << "trials=" << result.ledger.size() << " evaluations=" << result.evaluations << "\n";
    out << "best_ppl=" << fixed4(result.best_objective) << "\n";
    return 0;
}

int cmd_search_bandwidth(const RunConfig& rc, std::ostream& out) {
    require_input(rc.model, "--model");
    require_input(rc.corpus, "--corpus");
    require_output(rc.out, "--out");
    require_output(rc.ledger, "--ledger");
    out << "seed=" << rc.seed << "\n";
    const auto model = load_checkpoint(rc.model);
    const auto corpus = load_corpus(rc.corpus);
    const std::size_t ctx = effective_ctx(rc, model);
    const auto space = make_bandwidth_space(model.config.n_layers);
    const auto objective = bandwidth_objective(model, corpus, space, ctx);

    SearchOptions opts;
    opts.trials = rc.trials;
    opts.seed = rc.seed;
    opts.record_time = rc.record_time;
    const auto result = run_search(space, objective, opts);

    const auto best = to_bandwidth_profile(space, result.best);
    const auto opposite = opposite_profile(best);
    const double opposite_ppl = perplexity(model, corpus, make_kv_config(opposite, model.config.n_layers), ctx);
    write_text_file(rc.ledger, ledger_text(space, result.ledger));
    write_text_file(rc.out, bandwidth_profile_to_json(best));
    out << "trials=" << result.ledger.size() << " evaluations=" << result.evaluations << "\n";
    out << "best_ppl=" << fixed4(result.best_objective) << "\n";
    out << "opposite_ppl=" << fixed4(opposite_ppl) << "\n";
    return 0;
}

int cmd_report(const RunConfig& rc, std::ostream& out) {
    require_input(rc.ledger, "--ledger");
    const auto tables = emit_report(parse_ledger(read_text_file(rc.ledger)));
    if (rc.out.empty()) {
        out << tables.trials_csv << "\n" << tables.layers_csv;
        return 0;
    }
    require_output(rc.out, "--out");
    write_text_file(rc.out + ".trials.csv", tables.trials_csv);
    write_text_file(rc.out + ".layers.csv", tables.layers_csv);
    out << "wrote " << rc.out << ".trials.csv and " << rc.out << ".layers.csv\n";
    return 0;
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Layer-wise pruning and KV-cache bit-width search for small causal transformers", "optspa"};
    app.require_subcommand(1);
    RunConfig rc;

    auto* gen = app.add_subcommand("gen-model", "Generate a seeded toy checkpoint");
    gen->add_option("--out", rc.out, "Output checkpoint path");
    gen->add_option("--seed", rc.seed, "RNG seed");
    gen->add_option("--layers", rc.model_config.n_layers, "Decoder layers")->check(CLI::PositiveNumber);
    gen->add_option("--d-model", rc.model_config.d_model, "Model width")->check(CLI::PositiveNumber);
    gen->add_option("--heads", rc.model_config.n_heads, "Attention heads")->check(CLI::PositiveNumber);
    gen->add_option("--d-ff", rc.model_config.d_ff, "MLP hidden width")->check(CLI::PositiveNumber);
    gen->add_option("--max-seq", rc.model_config.max_seq, "Maximum sequence length")->check(CLI::PositiveNumber);

    auto* cal = app.add_subcommand("calibrate", "Capture per-feature activation norms");
    cal->add_option("--model", rc.model);
    cal->add_option("--corpus", rc.corpus);
    cal->add_option("--samples", rc.samples, "Calibration tokens")->check(CLI::PositiveNumber);
    cal->add_option("--out", rc.out);

    auto* prune = app.add_subcommand("prune", "Prune a checkpoint at a uniform ratio or a profile");
    prune->add_option("--model", rc.model);
    prune->add_option("--out", rc.out);
    prune->add_option("--calib", rc.calib);
    prune->add_option("--corpus", rc.corpus, "Calibrate on the fly when --calib is absent");
    prune->add_option("--samples", rc.samples)->check(CLI::PositiveNumber);
    prune->add_option("--metric", rc.metric)->check(CLI::IsMember({"magnitude", "wanda", "optspa"}));
    prune->add_option("--sparsity", rc.sparsity, "Uniform ratio")->check(CLI::Range(0.0, 1.0));
    prune->add_option("--profile", rc.profile, "Sparsity profile document");
    prune->add_flag("--per-row", rc.per_row, "Select masks per output row instead of per matrix");

    auto* eval = app.add_subcommand("eval", "Perplexity under a KV-cache configuration");
    eval->add_option("--model", rc.model);
    eval->add_option("--corpus", rc.corpus);
    eval->add_option("--ctx", rc.ctx)->check(CLI::PositiveNumber);
    eval->add_option("--kv-bits", rc.kv_bits_path, "Bandwidth profile document");
    eval->add_option("--bits", rc.bits, "Comma-separated per-layer bits, or one value for all layers");

    auto* ss = app.add_subcommand("search-sparsity", "TPE search over per-layer sparsity ratios");
    ss->add_option("--model", rc.model);
    ss->add_option("--corpus", rc.corpus);
    ss->add_option("--calib", rc.calib);
    ss->add_option("--samples", rc.samples)->check(CLI::PositiveNumber);
    ss->add_option("--metric", rc.metric)->check(CLI::IsMember({"magnitude", "wanda", "optspa"}));
    ss->add_option("--overall", rc.overall)->check(CLI::Range(0.0, 1.0));
    ss->add_option("--trials", rc.trials);
    ss->add_option("--seed", rc.seed);
    ss->add_option("--ctx", rc.ctx)->check(CLI::PositiveNumber);
    ss->add_option("--out", rc.out, "Best sparsity profile");
    ss->add_option("--ledger", rc.ledger, "Trial ledger (one JSON record per line)");
    ss->add_flag("--per-matrix", rc.per_matrix, "Search one ratio per matrix instead of per layer");
    ss->add_flag("--per-row", rc.per_row);
    ss->add_flag("--record-time", rc.record_time, "Store wall time per trial in the ledger");

    auto* sb = app.add_subcommand("search-bandwidth", "TPE search over per-layer KV bit-widths (half 8, half 6)");
    sb->add_option("--model", rc.model);
    sb->add_option("--corpus", rc.corpus);
    sb->add_option("--trials", rc.trials);
    sb->add_option("--seed", rc.seed);
    sb->add_option("--ctx", rc.ctx)->check(CLI::PositiveNumber);
    sb->add_option("--out", rc.out, "Best bandwidth profile");
    sb->add_option("--ledger", rc.ledger);
    sb->add_flag("--record-time", rc.record_time);

    auto* rep = app.add_subcommand("report", "CSV summaries of a trial ledger");
    rep->add_option("--ledger", rc.ledger);
    rep->add_option("--out", rc.out, "Prefix for <out>.trials.csv and <out>.layers.csv (stdout if absent)");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << "\n" << app.help();
        return 2;
    }

    try {
        if (gen->parsed()) return cmd_gen_model(rc, out);
        if (cal->parsed()) return cmd_calibrate(rc, out);
        if (prune->parsed()) return cmd_prune(rc, out);
        if (eval->parsed()) return cmd_eval(rc, out);
        if (ss->parsed()) return cmd_search_sparsity(rc, out);
        if (sb->parsed()) return cmd_search_bandwidth(rc, out);
        if (rep->parsed()) return cmd_report(rc, out);
    } catch (const CLI::ValidationError& e) {
        err << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}

}  // namespace optspa
