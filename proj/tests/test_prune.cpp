#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "optspa/checkpoint_io.hpp"
#include "optspa/errors.hpp"
#include "optspa/prune.hpp"
#include "optspa/records.hpp"
#include "optspa/rng.hpp"
#include "oracles.hpp"

using namespace optspa;

namespace {

const std::filesystem::path kFixtures = OPTSPA_FIXTURES;

Tensor2D from_rows(std::initializer_list<std::initializer_list<float>> rows) {
    Tensor2D t(rows.size(), rows.begin()->size());
    std::size_t i = 0;
    for (const auto& r : rows) {
        std::size_t j = 0;
        for (float v : r) t(i, j++) = v;
        ++i;
    }
    return t;
}

std::vector<float> positive_norms(Rng& rng, std::size_t n) {
    std::vector<float> x(n);
    for (auto& v : x) v = static_cast<float>(rng.uniform(0.1, 5.0));
    return x;
}

}  // namespace

TEST_CASE("magnitude metric") {
    CHECK(metric_magnitude(from_rows({{-2, 1}})) == from_rows({{2, 1}}));
    CHECK(metric_magnitude(Tensor2D(3, 2)) == Tensor2D(3, 2));
    Rng rng(1);
    const auto w = oracle::random_tensor(rng, 5, 7);
    const auto s = metric_magnitude(w);
    for (std::size_t i = 0; i < w.numel(); ++i) CHECK(s.data()[i] == std::abs(w.data()[i]));
}

TEST_CASE("wanda metric") {
    const std::vector<float> x{3, 1};
    CHECK(metric_wanda(from_rows({{1, -2}}), x) == from_rows({{3, 2}}));

    Rng rng(2);
    const auto w = oracle::random_tensor(rng, 4, 6);
    CHECK(metric_wanda(w, std::vector<float>(6, 1.0f)) == metric_magnitude(w));
    auto xz = positive_norms(rng, 6);
    xz[2] = 0.0f;
    const auto s = metric_wanda(w, xz);
    for (std::size_t i = 0; i < 4; ++i) CHECK(s(i, 2) == 0.0f);
    CHECK_THROWS_AS(metric_wanda(w, std::vector<float>(5, 1.0f)), invalid_input_error);
}

TEST_CASE("optspa metric examples") {
    const auto s = metric_optspa(from_rows({{2}}), std::vector<float>{4});
    CHECK(s(0, 0) == doctest::Approx(2.0 * std::log(3.0)).epsilon(1e-6));

    const auto z = metric_optspa(from_rows({{0, 1}, {0, 0}}), std::vector<float>{9, 9});
    CHECK(z(0, 0) == 0.0f);
    CHECK(z(1, 0) == 0.0f);
    CHECK(z(1, 1) == 0.0f);
    CHECK(z(0, 1) == doctest::Approx(std::log(3.0) * 3.0).epsilon(1e-6));

    CHECK(metric_optspa(Tensor2D(2, 2), std::vector<float>{1, 1}) == Tensor2D(2, 2));
    CHECK_THROWS_AS(metric_optspa(Tensor2D(2, 2), std::vector<float>{1}), invalid_input_error);
}

TEST_CASE("optspa metric matches a naive double loop") {
    Rng rng(3);
    for (int rep = 0; rep < 5; ++rep) {
        const auto w = oracle::random_tensor(rng, 16, 16);
        const auto x = positive_norms(rng, 16);
        const auto s = metric_optspa(w, x);
        for (std::size_t i = 0; i < 16; ++i)
            for (std::size_t j = 0; j < 16; ++j) {
                const double ref = oracle::naive_optspa(w, x, i, j);
                CHECK(std::abs(s(i, j) - ref) <= 1e-6 * ref);
            }
    }
    // Non-square too: row and column norms must not be swapped.
    const auto w = oracle::random_tensor(rng, 3, 9);
    const auto x = positive_norms(rng, 9);
    const auto s = metric_optspa(w, x);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 9; ++j) CHECK(s(i, j) == doctest::Approx(oracle::naive_optspa(w, x, i, j)).epsilon(1e-6));
}

TEST_CASE("optspa metric scaling properties") {
    Rng rng(4);
    for (int rep = 0; rep < 10; ++rep) {
        const auto w = oracle::random_tensor(rng, 8, 12);
        const auto x = positive_norms(rng, 12);
        const auto base = metric_optspa(w, x);
        const auto base_mask = select_mask(base, 0.4);

        // Power-of-two scalings are exact in float, so scores must match exactly.
        for (float c : {0.25f, 2.0f, 1024.0f}) {
            Tensor2D cw = w;
            for (auto& v : cw.data()) v *= c;
            CHECK(metric_optspa(cw, x) == base);
        }
        // Arbitrary c: ratios cancel up to rounding, and the mask is unchanged.
        Tensor2D cw = w;
        for (auto& v : cw.data()) v *= 3.7f;
        const auto s37 = metric_optspa(cw, x);
        for (std::size_t i = 0; i < s37.numel(); ++i)
            CHECK(s37.data()[i] == doctest::Approx(base.data()[i]).epsilon(1e-5));

        std::vector<float> x4 = x;
        for (auto& v : x4) v *= 4.0f;
        const auto s4 = metric_optspa(w, x4);
        for (std::size_t i = 0; i < s4.numel(); ++i) CHECK(s4.data()[i] == 2.0f * base.data()[i]);
        CHECK(select_mask(s4, 0.4) == base_mask);
    }
}

TEST_CASE("optspa metric is nonnegative and zero exactly on zero weight or activation") {
    Rng rng(5);
    auto w = oracle::random_tensor(rng, 10, 10);
    for (int k = 0; k < 15; ++k) w(rng.index(10), rng.index(10)) = 0.0f;
    auto x = positive_norms(rng, 10);
    x[3] = 0.0f;
    const auto s = metric_optspa(w, x);
    for (std::size_t i = 0; i < 10; ++i)
        for (std::size_t j = 0; j < 10; ++j) {
            CHECK(s(i, j) >= 0.0f);
            CHECK((s(i, j) == 0.0f) == (w(i, j) == 0.0f || x[j] == 0.0f));
        }
}

TEST_CASE("select_mask examples") {
    const auto s = from_rows({{1, 2}, {3, 4}});
    const auto m = select_mask(s, 0.5);
    CHECK(m.keep == std::vector<std::uint8_t>{0, 0, 1, 1});
    CHECK(select_mask(s, 0.0).zeros() == 0);
    CHECK(select_mask(s, 1.0).zeros() == 4);
    CHECK(select_mask(s, 0.74).zeros() == 2);

    // Ties: lower row-major index goes first.
    const auto t = from_rows({{5, 5}, {5, 5}});
    CHECK(select_mask(t, 0.5).keep == std::vector<std::uint8_t>{0, 0, 1, 1});
    CHECK(select_mask(t, 0.25).keep == std::vector<std::uint8_t>{0, 1, 1, 1});

    // Row grouping keeps per-row counts.
    const auto r = from_rows({{1, 2, 3, 4}, {40, 30, 20, 10}});
    CHECK(select_mask(r, 0.5, MaskGrouping::row).keep == std::vector<std::uint8_t>{0, 0, 1, 1, 1, 1, 0, 0});
    CHECK(select_mask(r, 0.5, MaskGrouping::matrix).keep == std::vector<std::uint8_t>{0, 0, 0, 0, 1, 1, 1, 1});

    CHECK_THROWS_AS(select_mask(s, 1.5), invalid_input_error);
    CHECK_THROWS_AS(select_mask(s, -0.1), invalid_input_error);
}

TEST_CASE("select_mask count is exact on the search grid and masks nest") {
    Rng rng(6);
    const auto s = oracle::random_tensor(rng, 32, 128, 0.0, 1.0);
    BinaryMask prev(32, 128, 1);
    for (int k = 0; k <= 40; ++k) {
        const double r = 0.025 * k;
        const auto m = select_mask(s, r);
        const auto expect = static_cast<std::size_t>(std::floor(k * 0.025 * 4096 + 1e-9));
        CHECK(m.zeros() == expect);
        CHECK(std::abs(double(m.zeros()) / 4096.0 - r) <= 1.0 / 4096.0);
        for (std::size_t i = 0; i < m.numel(); ++i) {
            if (!prev.keep[i]) CHECK(!m.keep[i]);
        }
        prev = m;
    }
    // Decimal grid values that are not exact in binary.
    CHECK(pruned_count(0.575, 1000) == 575);
    CHECK(pruned_count(0.525, 40) == 21);
    CHECK(pruned_count(0.45, 20) == 9);
}

TEST_CASE("apply_profile") {
    const auto m = load_checkpoint(kFixtures / "model3.opsc");
    const auto calib = calibrate(m, tokenize_bytes(read_text_file(kFixtures / "corpus.txt")), 128);

    SUBCASE("zero profile is the identity") {
        for (auto metric : {MetricKind::magnitude, MetricKind::wanda, MetricKind::optspa}) {
            const auto r = apply_profile(m, SparsityProfile::uniform(3, 0.0), &calib, metric);
            CHECK(r.model == m);
            CHECK(encode_checkpoint(r.model) == encode_checkpoint(m));
        }
    }
    SUBCASE("uniform 0.5") {
        const auto r = apply_profile(m, SparsityProfile::uniform(3, 0.5), &calib, MetricKind::optspa);
        const auto rep = measure_sparsity(r.model);
        for (const auto& name : prunable_names(m.config)) {
            const auto n = double(m.tensor(name).numel());
            CHECK(std::abs(rep.per_matrix.at(name) - 0.5) <= 1.0 / n);
            CHECK(r.masks.at(name).rows == m.tensor(name).rows());
            // Kept weights are untouched, pruned ones are zero.
            const auto& w0 = m.tensor(name);
            const auto& w1 = r.model.tensor(name);
            for (std::size_t i = 0; i < w0.numel(); ++i)
                CHECK(w1.data()[i] == (r.masks.at(name).keep[i] ? w0.data()[i] : 0.0f));
        }
        CHECK(r.model.tensor("embed") == m.tensor("embed"));
        CHECK(r.model.tensor("L1.attn_norm") == m.tensor("L1.attn_norm"));
        CHECK(std::abs(rep.overall - 0.5) <= 1e-3);
        CHECK(measure_sparsity(r.masks).overall == rep.overall);
    }
    SUBCASE("per-matrix ratios") {
        SparsityProfile p = SparsityProfile::uniform(3, 0.45);
        p.overall = 0.45;
        for (auto& l : p.layers) {
            l.per_matrix = true;
            l.ratios[static_cast<std::size_t>(MatrixKind::Wq)] = 0.55;
        }
        const auto r = apply_profile(m, p, &calib, MetricKind::wanda);
        const auto rep = measure_sparsity(r.masks);
        for (std::size_t l = 0; l < 3; ++l)
            for (auto k : kMatrixKinds) {
                const auto name = matrix_name(l, k);
                const double want = k == MatrixKind::Wq ? 0.55 : 0.45;
                CHECK(std::abs(rep.per_matrix.at(name) - want) <= 1.0 / double(m.tensor(name).numel()));
            }
    }
    SUBCASE("scores each matrix along its input features") {
        // A zero activation norm for input feature 0 of L0.Wq makes that whole
        // input row (stored input-major) the first to go under optspa.
        CalibrationStats c = calib;
        c.input_norms["L0.Wq"][0] = 0.0f;
        const auto r = apply_profile(m, SparsityProfile::uniform(3, 1.0 / 32.0), &c, MetricKind::optspa);
        const auto& mask = r.masks.at("L0.Wq");
        for (std::size_t j = 0; j < mask.cols; ++j) CHECK(mask(0, j) == 0);
        CHECK(mask.zeros() == 32);
    }
    SUBCASE("errors") {
        SparsityProfile p = SparsityProfile::uniform(3, 0.5);
        p.layers.pop_back();
        CHECK_THROWS_AS(apply_profile(m, p, &calib, MetricKind::optspa), invalid_input_error);
        CHECK_THROWS_AS(apply_profile(m, SparsityProfile::uniform(3, 0.5), nullptr, MetricKind::wanda),
                        invalid_input_error);
        CHECK_NOTHROW(apply_profile(m, SparsityProfile::uniform(3, 0.5), nullptr, MetricKind::magnitude));
    }
}

TEST_CASE("sparsity profile budget") {
    ModelConfig c;
    c.n_layers = 2;
    auto p = SparsityProfile::uniform(2, 0.5);
    CHECK(p.weighted_mean(c) == doctest::Approx(0.5));
    CHECK(p.meets_budget(c));
    p.layers[0].ratios.fill(0.475);
    CHECK_FALSE(p.meets_budget(c));
    p.layers[1].ratios.fill(0.525);
    CHECK(p.meets_budget(c));
    // Wup and Wdown carry 4x the elements of the attention matrices.
    p.layers[0].per_matrix = true;
    p.layers[1].ratios.fill(0.5);
    p.layers[0].ratios = {0.6, 0.6, 0.6, 0.6, 0.45, 0.45};
    CHECK(p.weighted_mean(c) == doctest::Approx(0.5));
    CHECK(p.meets_budget(c));
    p.layers[0].ratios = {0.6, 0.6, 0.6, 0.6, 0.425, 0.425};
    CHECK(p.weighted_mean(c) == doctest::Approx((4 * 0.6 + 8 * 0.425) / 12 / 2 + 0.25));
    CHECK_FALSE(p.meets_budget(c));
}

TEST_CASE("measure_sparsity") {
    const auto m = load_checkpoint(kFixtures / "model8.opsc");
    const auto dense = measure_sparsity(m);
    CHECK(dense.overall == 0.0);
    for (const auto& [name, r] : dense.per_matrix) CHECK(r == 0.0);
    CHECK(dense.per_matrix.size() == 48);

    Checkpoint z = m;
    for (const auto& name : prunable_names(z.config))
        for (auto& v : z.tensor(name).data()) v = 0.0f;
    const auto zeros = measure_sparsity(z);
    CHECK(zeros.overall == 1.0);
    for (const auto& [name, r] : zeros.per_matrix) CHECK(r == 1.0);

    const auto pruned = apply_profile(m, SparsityProfile::uniform(8, 0.5), nullptr, MetricKind::magnitude);
    std::size_t total = 0;
    for (const auto& name : prunable_names(m.config)) total += m.tensor(name).numel();
    CHECK(std::abs(measure_sparsity(pruned.model).overall - 0.5) <= 1.0 / double(total));
}
