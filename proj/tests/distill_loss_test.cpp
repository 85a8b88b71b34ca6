#include <doctest.h>

#include <cmath>

#include "mtkd/errors.hpp"
#include "mtkd/loss.hpp"
#include "testutil.hpp"

using namespace mtkd;

namespace {

// Independent oracle: direct double sums with no max-subtraction trick.
double brute_force_cross_entropy(const std::vector<std::vector<double>>& logits,
                                 const std::vector<std::vector<double>>& q_full) {
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        double z = 0.0;
        for (const double l : logits[i]) z += std::exp(l);
        for (std::size_t j = 0; j < logits[i].size(); ++j) {
            if (q_full[i][j] == 0.0) continue;
            total += q_full[i][j] * std::log(std::exp(logits[i][j]) / z);
        }
    }
    return -total / static_cast<double>(logits.size());
}

TopKPrediction make_pred(std::vector<TokenId> ids, std::vector<float> logits,
                         std::uint32_t position = 0) {
    TopKPrediction p;
    p.position = position;
    p.ids = std::move(ids);
    p.logits = std::move(logits);
    return p;
}

NormalizedTeacherDist one_hot(TokenId id, std::uint32_t position = 0) {
    NormalizedTeacherDist d;
    d.position = position;
    d.ids = {id};
    d.probs = {1.0};
    return d;
}

}  // namespace

TEST_SUITE("distill_loss") {

TEST_CASE("normalize_topk softmaxes the stored logits") {
    const auto even = normalize_topk(make_pred({3, 7}, {0.0f, 0.0f}));
    CHECK(even.probs[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(even.probs[1] == doctest::Approx(0.5).epsilon(1e-12));

    const auto skewed = normalize_topk(make_pred({1, 2}, {2.0f, 0.0f}));
    CHECK(skewed.probs[0] == doctest::Approx(0.8808).epsilon(1e-3));
    CHECK(skewed.probs[1] == doctest::Approx(0.1192).epsilon(1e-3));

    const auto single = normalize_topk(make_pred({9}, {-4.5f}));
    CHECK(single.probs[0] == doctest::Approx(1.0).epsilon(1e-12));

    CHECK_THROWS_AS(normalize_topk(TopKPrediction{}), validation_error);
}

TEST_CASE("l_mlm matches hand-computed values") {
    // Student prob 0.7 on gold: logits (ln 0.7, ln 0.3) over two ids.
    const std::vector<std::vector<double>> rows = {{std::log(0.7), std::log(0.3)}};
    const std::vector<TokenId> gold = {0};
    CHECK(l_mlm(rows, gold) == doctest::Approx(0.3567).epsilon(1e-3));

    // Certain prediction -> 0 (build via a huge margin).
    const std::vector<std::vector<double>> sure = {{50.0, -50.0}, {60.0, -60.0}};
    const std::vector<TokenId> gold2 = {0, 0};
    CHECK(l_mlm(sure, gold2) == doctest::Approx(0.0).epsilon(1e-12));

    // Uniform student over |v| = 3 -> ln 3.
    const std::vector<std::vector<double>> uniform = {{1.0, 1.0, 1.0}};
    const std::vector<TokenId> gold3 = {2};
    CHECK(l_mlm(uniform, gold3) == doctest::Approx(std::log(3.0)).epsilon(1e-12));

    const std::vector<TokenId> bad = {7};
    CHECK_THROWS_AS(l_mlm(uniform, bad), validation_error);
}

TEST_CASE("l_kd matches hand-computed values") {
    // Student probs (0.7, 0.2, 0.1); teacher (0.5, 0.5) on the first two ids.
    const std::vector<std::vector<double>> rows = {
        {std::log(0.7), std::log(0.2), std::log(0.1)}};
    NormalizedTeacherDist d;
    d.ids = {0, 1};
    d.probs = {0.5, 0.5};
    const std::vector<NormalizedTeacherDist> dists = {d};
    CHECK(l_kd(rows, dists) == doctest::Approx(0.9831).epsilon(1e-3));
}

TEST_CASE("one-hot teachers reduce l_kd to l_mlm") {
    SplitMix64 rng(31);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t v = 2 + rng.next_below(7);   // |v| <= 8
        const std::size_t n = 1 + rng.next_below(3);   // n <= 3
        std::vector<std::vector<double>> rows;
        std::vector<TokenId> gold;
        std::vector<NormalizedTeacherDist> dists;
        for (std::size_t i = 0; i < n; ++i) {
            rows.push_back(test::random_vector(rng, v, -5.0, 5.0));
            gold.push_back(static_cast<TokenId>(rng.next_below(v)));
            dists.push_back(one_hot(gold.back(), static_cast<std::uint32_t>(i)));
        }
        CHECK(l_kd(rows, dists) == doctest::Approx(l_mlm(rows, gold)).epsilon(1e-9));
    }
}

TEST_CASE("losses match the brute-force double-sum oracle") {
    SplitMix64 rng(32);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t v = 2 + rng.next_below(7);
        const std::size_t n = 1 + rng.next_below(3);
        std::vector<std::vector<double>> rows;
        std::vector<TokenId> gold;
        std::vector<NormalizedTeacherDist> dists;
        std::vector<std::vector<double>> q_full_kd;
        std::vector<std::vector<double>> q_full_gold;
        for (std::size_t i = 0; i < n; ++i) {
            rows.push_back(test::random_vector(rng, v, -4.0, 4.0));
            gold.push_back(static_cast<TokenId>(rng.next_below(v)));

            // Teacher supported on a random subset, normalized by hand.
            const std::size_t support = 1 + rng.next_below(v);
            std::vector<TokenId> ids(v);
            for (TokenId j = 0; j < v; ++j) ids[j] = j;
            shuffle(ids, rng);
            ids.resize(support);
            std::vector<double> mass(support);
            double z = 0.0;
            for (auto& q : mass) {
                q = 0.05 + rng.next_double();
                z += q;
            }
            NormalizedTeacherDist d;
            d.position = static_cast<std::uint32_t>(i);
            d.ids = ids;
            for (const double q : mass) d.probs.push_back(q / z);
            dists.push_back(d);

            std::vector<double> full(v, 0.0);
            for (std::size_t j = 0; j < support; ++j) full[ids[j]] = d.probs[j];
            q_full_kd.push_back(full);

            std::vector<double> hot(v, 0.0);
            hot[gold.back()] = 1.0;
            q_full_gold.push_back(hot);
        }

        CHECK(l_mlm(rows, gold) ==
              doctest::Approx(brute_force_cross_entropy(rows, q_full_gold)).epsilon(1e-9));
        CHECK(l_kd(rows, dists) ==
              doctest::Approx(brute_force_cross_entropy(rows, q_full_kd)).epsilon(1e-9));
        CHECK(l_mlm(rows, gold) >= 0.0);
        CHECK(l_kd(rows, dists) >= 0.0);
    }
}

TEST_CASE("losses are invariant to per-position logit shifts") {
    SplitMix64 rng(33);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t v = 2 + rng.next_below(7);
        std::vector<std::vector<double>> rows = {test::random_vector(rng, v, -4.0, 4.0)};
        std::vector<std::vector<double>> shifted = rows;
        const double c = rng.next_double(-30.0, 30.0);
        for (auto& x : shifted[0]) x += c;

        const std::vector<TokenId> gold = {static_cast<TokenId>(rng.next_below(v))};
        CHECK(l_mlm(rows, gold) == doctest::Approx(l_mlm(shifted, gold)).epsilon(1e-9));

        const std::vector<NormalizedTeacherDist> dists = {one_hot(gold[0])};
        CHECK(l_kd(rows, dists) == doctest::Approx(l_kd(shifted, dists)).epsilon(1e-9));
    }
}

TEST_CASE("l_all weights languages and collapses at the endpoints") {
    std::vector<LanguageLossTerms> one(1);
    one[0].language = "aa";
    one[0].mlm = 0.3567;
    one[0].kd_per_teacher = {{"t0", 0.9831}};

    CHECK(l_all(one, 0.0) == doctest::Approx(0.3567).epsilon(1e-12));
    CHECK(l_all(one, 1.0) == doctest::Approx(0.9831).epsilon(1e-12));
    CHECK(l_all(one, 0.5) == doctest::Approx(0.6699).epsilon(1e-3));

    // Two teachers average before weighting; two languages average after.
    std::vector<LanguageLossTerms> two(2);
    two[0].mlm = 1.0;
    two[0].kd_per_teacher = {{"t0", 2.0}, {"t1", 4.0}};
    two[1].mlm = 3.0;
    two[1].kd_per_teacher = {{"t2", 6.0}};
    // lang0: 0.5*3 + 0.5*1 = 2 ; lang1: 0.5*6 + 0.5*3 = 4.5 ; mean = 3.25
    CHECK(l_all(two, 0.5) == doctest::Approx(3.25).epsilon(1e-12));

    CHECK_THROWS_AS(l_all(one, -0.1), validation_error);
    CHECK_THROWS_AS(l_all(one, 1.1), validation_error);
}

TEST_CASE("lambda_at anneals linearly from 1 to 0") {
    CHECK(lambda_at(0, 100) == doctest::Approx(1.0));
    CHECK(lambda_at(100, 100) == doctest::Approx(0.0));
    CHECK(lambda_at(50, 100) == doctest::Approx(0.5));
    CHECK_THROWS_AS(lambda_at(101, 100), validation_error);
    CHECK_THROWS_AS(lambda_at(0, 0), validation_error);
}

TEST_CASE("position gradient matches finite differences of the weighted loss") {
    SplitMix64 rng(34);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t v = 3 + rng.next_below(6);
        std::vector<double> logits = test::random_vector(rng, v, -3.0, 3.0);
        const TokenId gold = static_cast<TokenId>(rng.next_below(v));
        NormalizedTeacherDist d;
        d.ids = {static_cast<TokenId>(rng.next_below(v)),
                 static_cast<TokenId>(rng.next_below(v))};
        while (d.ids[1] == d.ids[0]) d.ids[1] = static_cast<TokenId>(rng.next_below(v));
        const double q0 = rng.next_double(0.1, 0.9);
        d.probs = {q0, 1.0 - q0};
        const double w_mlm = rng.next_double(0.0, 1.0);
        const double w_kd = rng.next_double(0.0, 1.0);

        const auto loss_at = [&](const std::vector<double>& row) {
            const std::vector<std::vector<double>> rows = {row};
            const std::vector<TokenId> g = {gold};
            const std::vector<NormalizedTeacherDist> dd = {d};
            return w_mlm * l_mlm(rows, g) + w_kd * l_kd(rows, dd);
        };

        std::vector<double> grad(v, 0.0);
        add_position_loss_grad(logits, gold, &d, w_mlm, w_kd, grad);

        const double h = 1e-6;
        for (std::size_t j = 0; j < v; ++j) {
            auto up = logits, down = logits;
            up[j] += h;
            down[j] -= h;
            const double fd = (loss_at(up) - loss_at(down)) / (2.0 * h);
            CHECK(grad[j] == doctest::Approx(fd).epsilon(1e-5));
        }
    }
}

}  // TEST_SUITE
