// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "optspa/checkpoint_io.hpp"
#include "optspa/model.hpp"
#include "optspa/prune.hpp"
#include "optspa/quant.hpp"
#include "optspa/records.hpp"
#include "optspa/search.hpp"
#include "oracles.hpp"

using namespace optspa;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = OPTSPA_FIXTURES;

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::vector<std::uint8_t> fixture_corpus() { return tokenize_bytes(read_text_file(kFixtures / "corpus.txt")); }

// 1. optspa scores vs a naive double loop.
Outcome metric_oracle() {
    Rng rng(101);
    double worst = 0.0;
    for (int inst = 0; inst < 50; ++inst) {
        const auto w = oracle::random_tensor(rng, 16, 16);
        std::vector<float> xnorm(16);
        for (auto& x : xnorm) x = static_cast<float>(rng.uniform(0.0, 10.0));
        const auto s = metric_optspa(w, xnorm);
        for (std::size_t i = 0; i < 16; ++i) {
            for (std::size_t j = 0; j < 16; ++j) {
                const double ref = oracle::naive_optspa(w, xnorm, i, j);
                const double rel = std::abs(double(s(i, j)) - ref) / std::max(std::abs(ref), 1e-30);
                worst = std::max(worst, rel);
            }
        }
    }
    return {worst <= 1e-6, "max relative error " + format_number(worst)};
}

// 2. zeros(select_mask(S, k/40)) == floor(k * numel / 40) for every grid ratio.
Outcome mask_exactness() {
    Rng rng(202);
    const std::pair<std::size_t, std::size_t> shapes[] = {{16, 16}, {7, 13}, {32, 128}, {1, 41}, {40, 3}};
    int checked = 0;
    for (int inst = 0; inst < 20; ++inst) {
        const auto [r, c] = shapes[inst % 5];
        auto s = oracle::random_tensor(rng, r, c, 0.0, 1.0);
        if (inst % 4 == 3) {
            for (auto& v : s.data()) v = std::round(v * 4.0f);  // heavy ties
        }
        for (std::size_t k = 0; k <= 40; ++k) {
            const double ratio = static_cast<double>(k) * 0.025;
            const std::size_t expect = k * s.numel() / 40;
            const auto m = select_mask(s, ratio);
            if (m.zeros() != expect) {
                return {false, "ratio " + format_number(ratio) + " on " + std::to_string(r) + "x" + std::to_string(c) +
                                   ": " + std::to_string(m.zeros()) + " zeros, expected " + std::to_string(expect)};
            }
            ++checked;
        }
    }
    return {true, std::to_string(checked) + " (matrix, ratio) pairs exact"};
}

// 3. Masks unchanged under W -> cW and xnorm -> c xnorm.
Outcome scale_invariance() {
    Rng rng(303);
    int checked = 0;
    for (int inst = 0; inst < 20; ++inst) {
        const auto w = oracle::random_tensor(rng, 24, 24);
        std::vector<float> xnorm(24);
        for (auto& x : xnorm) x = static_cast<float>(rng.uniform(0.1, 5.0));
        for (double c : {1e-3, 1.0, 1e3}) {
            Tensor2D wc = w;
            for (auto& v : wc.data()) v = static_cast<float>(v * c);
            std::vector<float> xc(xnorm);
            for (auto& v : xc) v = static_cast<float>(v * c);
            for (double ratio : {0.45, 0.475, 0.5, 0.525, 0.55}) {
                const auto base = select_mask(metric_optspa(w, xnorm), ratio);
                if (select_mask(metric_optspa(wc, xnorm), ratio) != base) {
                    return {false, "weight scaling by " + format_number(c) + " changed the mask"};
                }
                if (select_mask(metric_optspa(w, xc), ratio) != base) {
                    return {false, "activation scaling by " + format_number(c) + " changed the mask"};
                }
                checked += 2;
            }
        }
    }
    return {true, std::to_string(checked) + " scaled masks identical"};
}

// 4. |dequant(quant(a)) - a| <= step/2 + 4 ulp; codes in range; constant blocks lossless.
Outcome quant_roundtrip() {
    Rng rng(404);
    double worst_excess = -INFINITY;
    for (int blk = 0; blk < 10000; ++blk) {
        const std::size_t n = 1 + rng.index(64);
        const double scale = std::pow(10.0, rng.uniform(-3.0, 3.0));
        const double shift = rng.uniform(-2.0, 2.0) * scale;
        std::vector<float> a(n);
        for (auto& v : a) v = static_cast<float>(shift + scale * rng.uniform(-1.0, 1.0));
        for (int b : {2, 4, 6, 8}) {
            const auto q = quantize(a, b);
            for (auto code : q.codes) {
                if (code > (1u << b) - 1u) return {false, "code out of range"};
            }
            const auto d = dequantize(q);
            for (std::size_t i = 0; i < n; ++i) {
                const float ulp = std::nextafter(std::abs(a[i]), INFINITY) - std::abs(a[i]);
                const double bound = q.step / 2.0 + 4.0 * ulp;
                const double err = std::abs(double(d[i]) - double(a[i]));
                worst_excess = std::max(worst_excess, err - bound);
                if (err > bound) return {false, "round-trip error " + format_number(err) + " > " + format_number(bound)};
            }
        }
    }
    for (float v : {0.0f, 5.0f, -3.25f, 1e-20f, 7e30f}) {
        const std::vector<float> a(17, v);
        for (int b : {2, 4, 6, 8}) {
            if (dequantize(quantize(a, b)) != a) return {false, "constant block not lossless"};
        }
    }
    return {true, "40000 round trips in bound (max err - bound " + format_number(worst_excess) + ")"};
}

// 5. All-16 KV path equals the cache-free forward; uniform logits give 256.
Outcome kv_passthrough() {
    const auto model = load_checkpoint(kFixtures / "model8.opsc");
    const auto corpus = fixture_corpus();
    const std::size_t ctx = model.config.max_seq;
    const double cached = perplexity(model, corpus, KVCacheConfig::passthrough(model.config.n_layers), ctx);
    const double reference = oracle::teacher_forced_ppl(model, corpus, ctx);
    const double rel = std::abs(cached - reference) / reference;

    Checkpoint uniform = model;
    for (auto& v : uniform.tensor("head").data()) v = 0.0f;
    const double u = perplexity(uniform, corpus, KVCacheConfig::passthrough(model.config.n_layers), ctx);
    return {rel <= 1e-5 && u == 256.0, "cached " + format_number(cached) + " vs cache-free " + format_number(reference) +
                                           " (rel " + format_number(rel) + "); uniform-logit PPL " + format_number(u)};
}

// 6. TPE vs exhaustive enumeration on the 3-layer fixture.
Outcome exhaustive_oracle() {
    const auto model = load_checkpoint(kFixtures / "model3.opsc");
    const auto corpus = fixture_corpus();
    const auto calib = calibrate(model, corpus, 256);
    const auto space = make_sparsity_space(model.config, 0.5);
    SparsityObjectiveConfig oc;
    oc.ctx = model.config.max_seq;
    const auto objective = sparsity_objective(model, corpus, &calib, space, oc);

    double optimum = INFINITY;
    std::size_t feasible = 0;
    for (std::size_t a0 = 0; a0 < 5; ++a0)
        for (std::size_t a1 = 0; a1 < 5; ++a1)
            for (std::size_t a2 = 0; a2 < 5; ++a2) {
                const Assignment a{a0, a1, a2};
                if (!check_feasible(space, a)) continue;
                ++feasible;
                optimum = std::min(optimum, objective(a));
            }

    int hits = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        SearchOptions opts;
        opts.trials = 200;
        opts.seed = seed;
        const auto res = run_search(space, objective, opts);
        if (res.best_objective <= optimum * 1.01) ++hits;
    }
    return {hits >= 19, std::to_string(feasible) + " feasible of 125, optimum PPL " + format_number(optimum) + "; " +
                            std::to_string(hits) + "/20 seeds within 1%"};
}

// 7. Best of 30 TPE trials vs uniform 0.5 on the 8-layer fixture.
Outcome search_beats_uniform() {
    const auto model = load_checkpoint(kFixtures / "model8.opsc");
    const auto corpus = fixture_corpus();
    const auto calib = calibrate(model, corpus, 256);
    const std::size_t ctx = model.config.max_seq;
    const auto uniform = apply_profile(model, SparsityProfile::uniform(model.config.n_layers, 0.5), &calib,
                                       MetricKind::optspa);
    const double uniform_ppl = perplexity(uniform.model, corpus, KVCacheConfig::passthrough(model.config.n_layers), ctx);

    const auto space = make_sparsity_space(model.config, 0.5);
    SparsityObjectiveConfig oc;
    oc.ctx = ctx;
    const auto objective = sparsity_objective(model, corpus, &calib, space, oc);
    int wins = 0;
    std::string bests;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        SearchOptions opts;
        opts.trials = 30;
        opts.seed = seed;
        const auto res = run_search(space, objective, opts);
        if (res.best_objective <= uniform_ppl) ++wins;
        bests += (bests.empty() ? "" : " ") + format_number(std::round(res.best_objective * 100) / 100);
    }
    return {wins >= 9, "uniform PPL " + format_number(uniform_ppl) + "; " + std::to_string(wins) +
                           "/10 seeds at or below (bests: " + bests + ")"};
}

// Separable quadratic over 8 dims x 5 choices; optimum 0 at the targets.
double quadratic(const Assignment& a) {
    double f = 0.0;
    for (std::size_t d = 0; d < a.size(); ++d) {
        const double t = static_cast<double>((3 * d + 1) % 5);
        const double diff = static_cast<double>(a[d]) - t;
        f += diff * diff;
    }
    return f;
}

SearchSpace quadratic_space() {
    SearchSpace s;
    for (int d = 0; d < 8; ++d) s.dims.push_back({"x" + std::to_string(d), {0, 1, 2, 3, 4}, 1.0});
    return s;
}

// 8. TPE mean best after 30 trials < random search's, paired seeds.
Outcome tpe_beats_random() {
    const auto space = quadratic_space();
    double tpe = 0.0, rnd = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        SearchOptions opts;
        opts.trials = 30;
        opts.seed = seed;
        tpe += run_search(space, quadratic, opts).best_objective;
        opts.random_only = true;
        rnd += run_search(space, quadratic, opts).best_objective;
    }
    tpe /= 20.0;
    rnd /= 20.0;
    return {tpe < rnd, "mean best: TPE " + format_number(tpe) + ", random " + format_number(rnd)};
}

// 9. Bandwidth search: four 8-bit, four 6-bit, and no worse than its opposite.
Outcome bandwidth_contract() {
    const auto model = load_checkpoint(kFixtures / "model8.opsc");
    const auto corpus = fixture_corpus();
    const std::size_t ctx = model.config.max_seq;
    const auto space = make_bandwidth_space(model.config.n_layers);
    SearchOptions opts;
    opts.trials = 50;
    opts.seed = 1234;
    const auto res = run_search(space, bandwidth_objective(model, corpus, space, ctx), opts);
    const auto best = to_bandwidth_profile(space, res.best);
    const auto opp = opposite_profile(best);
    const double opp_ppl = perplexity(model, corpus, make_kv_config(opp, model.config.n_layers), ctx);
    const auto n8 = std::count(best.bits.begin(), best.bits.end(), 8);
    const auto n6 = std::count(best.bits.begin(), best.bits.end(), 6);
    std::string bits;
    for (int b : best.bits) bits += std::to_string(b);
    return {n8 == 4 && n6 == 4 && res.best_objective <= opp_ppl,
            "best " + bits + " PPL " + format_number(res.best_objective) + " vs opposite " + format_number(opp_ppl)};
}

// 10. Same seed, same ledger bytes; checkpoint save/load is bitwise.
Outcome determinism() {
    const auto model = load_checkpoint(kFixtures / "model3.opsc");
    const auto corpus = fixture_corpus();
    const auto calib = calibrate(model, corpus, 128);
    const std::span<const std::uint8_t> short_corpus(corpus.data(), 512);
    const auto sspace = make_sparsity_space(model.config, 0.5);
    const auto bspace = make_bandwidth_space(model.config.n_layers);
    SparsityObjectiveConfig oc;
    oc.ctx = model.config.max_seq;
    SearchOptions opts;
    opts.trials = 12;
    opts.seed = 99;

    std::string ledgers[2];
    for (auto& l : ledgers) {
        const auto s = run_search(sspace, sparsity_objective(model, short_corpus, &calib, sspace, oc), opts);
        const auto b = run_search(bspace, bandwidth_objective(model, short_corpus, bspace, oc.ctx), opts);
        l = ledger_text(sspace, s.ledger) + ledger_text(bspace, b.ledger);
    }
    if (ledgers[0] != ledgers[1]) return {false, "ledgers differ between identical runs"};

    const fs::path tmp = fs::temp_directory_path() / "optspa_acceptance_roundtrip.opsc";
    const auto original = read_file_bytes(kFixtures / "model8.opsc");
    const auto loaded = load_checkpoint(kFixtures / "model8.opsc");
    save_checkpoint(tmp, loaded);
    const bool same_bytes = read_file_bytes(tmp) == original;
    const bool same_model = load_checkpoint(tmp) == loaded;
    fs::remove(tmp);
    return {same_bytes && same_model, "ledgers identical (" + std::to_string(ledgers[0].size()) +
                                          " bytes); checkpoint round trip " + (same_bytes ? "bitwise" : "DIFFERS")};
}

struct Criterion {
    int id;
    const char* name;
    double limit_seconds;
    std::function<Outcome()> run;
};

}  // namespace

int main() {
    const Criterion criteria[] = {
        {1, "metric oracle equivalence", 1.0, metric_oracle},
        {2, "mask exactness and grid coverage", 5.0, mask_exactness},
        {3, "scale-invariance of optspa masks", 5.0, scale_invariance},
        {4, "quantizer round-trip bound", 10.0, quant_roundtrip},
        {5, "KV passthrough identity", 30.0, kv_passthrough},
        {6, "exhaustive oracle equivalence", 600.0, exhaustive_oracle},
        {7, "search beats uniform allocation", 600.0, search_beats_uniform},
        {8, "TPE beats random search", 60.0, tpe_beats_random},
        {9, "bandwidth search contract", 600.0, bandwidth_contract},
        {10, "end-to-end determinism", 60.0, determinism},
    };
    int failures = 0;
    for (const auto& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const bool in_time = secs < c.limit_seconds;
        const bool pass = o.pass && in_time;
        failures += !pass;
        std::printf("[%s] %2d %-36s %7.2fs (limit %.0fs)%s  %s\n", pass ? "PASS" : "FAIL", c.id, c.name, secs,
                    c.limit_seconds, in_time ? "" : " TIMEOUT", o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d/%zu criteria passed\n", int(std::size(criteria)) - failures, std::size(criteria));
    return failures == 0 ? 0 : 1;
}
