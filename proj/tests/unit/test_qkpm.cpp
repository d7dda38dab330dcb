#include <doctest.h>

#include <cmath>
#include <set>

#include "caki/error.hpp"
#include "caki/qkpm.hpp"
#include "caki/random.hpp"
#include "caki/synthetic_world.hpp"
#include "oracle.hpp"

using namespace caki;

namespace {

PromptBank key_only_bank(const std::vector<Vector>& keys) {
    PromptBank b;
    b.shared_prompt = TokenMatrix(1, 1);
    for (std::size_t i = 0; i < keys.size(); ++i) {
        b.entries.push_back({"k" + std::to_string(i), keys[i], TokenMatrix(1, 1)});
    }
    return b;
}

Vector random_unit(Rng& rng, std::size_t n) {
    Vector v(n);
    for (double& x : v) x = gaussian(rng);
    return normalized(v);
}

struct Trained {
    SyntheticWorld world;
    PromptBank bank;
};

// A bank over the whole catalog with perturbed template prompts; enough
// structure for the inference paths without running training.
Trained small_bank(std::uint32_t classes = 8, std::uint64_t seed = 7) {
    SyntheticWorldSpec s;
    s.seed = seed;
    s.classes = classes;
    SyntheticWorld w = make_synthetic_world(s);
    Rng rng(seed * 31 + 1);
    TokenMatrix shared = template_prompt(4, 16);
    for (double& x : shared.values()) x += 0.1 * gaussian(rng);
    std::vector<TokenMatrix> prompts;
    for (std::uint32_t c = 0; c < classes; ++c) {
        TokenMatrix p = shared;
        for (double& x : p.values()) x += 0.3 * gaussian(rng);
        prompts.push_back(p);
    }
    PromptBank bank = build_bank(*w.encoder, w.catalog, shared, prompts);
    return {std::move(w), std::move(bank)};
}

}  // namespace

TEST_CASE("strategy and mode names") {
    CHECK(parse_strategy("m") == Strategy::matching);
    CHECK(parse_strategy("R") == Strategy::random);
    CHECK(parse_strategy("a") == Strategy::all);
    CHECK(to_string(Strategy::matching) == "M");
    CHECK_THROWS_AS(parse_strategy("x"), InvalidArgument);
    CHECK(parse_gamma_mode("topk") == GammaMode::topk);
    CHECK_THROWS_AS(parse_gamma_mode("soft"), InvalidArgument);
    CHECK(parse_key_template("handcrafted") == KeyTemplate::handcrafted);
    CHECK(to_string(KeyTemplate::shared) == "shared");
}

TEST_CASE("qkpm config defaults and validation") {
    QkpmConfig c;
    CHECK(c.top_k == 3);
    CHECK(c.beta == 0.3);
    CHECK(c.temperature == 1.0);
    CHECK(c.gamma_mode == GammaMode::raw);
    c.top_k = 0;
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
    c = QkpmConfig{};
    c.beta = -0.1;
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
    c = QkpmConfig{};
    c.temperature = 0.0;
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
}

TEST_CASE("match_topk") {
    SUBCASE("single entry") {
        const PromptBank b = key_only_bank({normalized(Vector{1.0, 1.0})});
        const auto m = match_topk(normalized(Vector{1.0, 0.0}), b, 1, 20.0, 1.0);
        REQUIRE(m.size() == 1);
        CHECK(m[0].cache_index == 0);
        CHECK(m[0].gamma == 1.0);
    }
    SUBCASE("self match on orthogonal keys") {
        std::vector<Vector> keys;
        for (std::size_t i = 0; i < 8; ++i) {
            Vector e(8, 0.0);
            e[i] = 1.0;
            keys.push_back(e);
        }
        const auto m = match_topk(keys[3], key_only_bank(keys), 1, 1.0, 1.0);
        CHECK(m[0].cache_index == 3);
    }
    SUBCASE("ties go to the lower index") {
        const PromptBank b = key_only_bank({Vector{0, 1}, Vector{1, 0}, Vector{1, 0}, Vector{1, 0}});
        const auto m = match_topk(Vector{1, 0}, b, 2, 1.0, 1.0);
        CHECK(m[0].cache_index == 1);
        CHECK(m[1].cache_index == 2);
    }
    SUBCASE("K above the bank size is clamped") {
        const PromptBank b = key_only_bank({Vector{0, 1}, Vector{1, 0}});
        CHECK(match_topk(Vector{1, 0}, b, 5, 1.0, 1.0).size() == 2);
    }
    SUBCASE("scores sum to one and agree with the brute-force sort") {
        Rng rng(1);
        for (int t = 0; t < 200; ++t) {
            const std::size_t n = 1 + uniform_index(rng, 64);
            std::vector<Vector> keys;
            for (std::size_t i = 0; i < n; ++i) keys.push_back(random_unit(rng, 8));
            const PromptBank b = key_only_bank(keys);
            const Vector q = random_unit(rng, 8);
            const Vector gamma = match_scores(q, b, 20.0, 1.0);
            double sum = 0.0;
            for (double g : gamma) sum += g;
            CHECK(std::abs(sum - 1.0) < 1e-12);
            const std::size_t k = 1 + uniform_index(rng, n);
            const auto m = match_topk(q, b, k, 20.0, 1.0);
            const auto ref = oracle::brute_topk(gamma, k);
            REQUIRE(m.size() == ref.size());
            for (std::size_t i = 0; i < m.size(); ++i) {
                CHECK(m[i].cache_index == ref[i]);
                CHECK(m[i].gamma == gamma[ref[i]]);
                CHECK(m[i].gamma > 0.0);
                CHECK(m[i].gamma <= 1.0);
            }
        }
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(match_topk(Vector{1, 0}, PromptBank{}, 1, 1.0, 1.0), EmptyBank);
        CHECK_THROWS_AS(match_topk(Vector{1, 0}, key_only_bank({Vector{1, 0}}), 0, 1.0, 1.0),
                        InvalidArgument);
    }
}

TEST_CASE("refine") {
    const Prediction coarse{{0.6, 0.4}, true};
    const Prediction r = refine(coarse, Vector{0.1, 0.9}, 0.5);
    CHECK(r.scores[0] == doctest::Approx(0.65));
    CHECK(r.scores[1] == doctest::Approx(0.85));
    CHECK(!r.normalized);
    CHECK(argmax(coarse.scores) == 0);
    CHECK(argmax(r.scores) == 1);
    CHECK(refine(coarse, Vector{0.1, 0.9}, 0.0).scores == coarse.scores);
    CHECK_THROWS_AS(refine(coarse, Vector{1.0}, 0.3), InvalidArgument);
}

TEST_CASE("fine_ensemble") {
    const Trained t = small_bank();
    const auto& enc = *t.world.encoder;
    const auto& cat = t.world.catalog;
    const Embedding img = enc.encode_image({3, 11});

    SUBCASE("one match with weight one is that prompt's distribution") {
        const MatchResult m[] = {{2, 1.0}};
        const Vector f = fine_ensemble(enc, t.bank, m, cat, img, 1.0);
        CHECK(f == class_probabilities(enc, t.bank.entries[2].value, cat, img, 1.0).scores);
    }
    SUBCASE("equal halves of identical prompts") {
        PromptBank twin = t.bank;
        twin.entries[1].value = twin.entries[0].value;
        const MatchResult m[] = {{0, 0.5}, {1, 0.5}};
        const Vector f = fine_ensemble(enc, twin, m, cat, img, 1.0);
        const Vector p = class_probabilities(enc, twin.entries[0].value, cat, img, 1.0).scores;
        for (std::size_t j = 0; j < f.size(); ++j) CHECK(std::abs(f[j] - p[j]) < 1e-15);
    }
    SUBCASE("three-term summation oracle and convexity bound") {
        const auto matches = match_topk(img, t.bank, 3, enc.logit_scale(), 1.0);
        const Vector f = fine_ensemble(enc, t.bank, matches, cat, img, 1.0);
        std::vector<Vector> preds;
        Vector gammas;
        double total = 0.0;
        for (const auto& m : matches) {
            preds.push_back(class_probabilities(enc, t.bank.entries[m.cache_index].value, cat, img, 1.0).scores);
            gammas.push_back(m.gamma);
            total += m.gamma;
        }
        const Vector ref = oracle::explicit_refine(preds, gammas, Vector(cat.size(), 0.0), 1.0);
        for (std::size_t j = 0; j < f.size(); ++j) {
            CHECK(std::abs(f[j] - ref[j]) < 1e-14);
            CHECK(f[j] >= 0.0);
            CHECK(f[j] <= total + 1e-15);
        }
        CHECK(total <= 1.0 + 1e-12);
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(fine_ensemble(enc, t.bank, {}, cat, img, 1.0), InvalidArgument);
        const MatchResult bad[] = {{99, 1.0}};
        CHECK_THROWS_AS(fine_ensemble(enc, t.bank, bad, cat, img, 1.0), InvalidArgument);
    }
}

TEST_CASE("coarse prediction") {
    const Trained t = small_bank();
    const auto& enc = *t.world.encoder;
    const Embedding img = enc.encode_image({1, 4});
    const Prediction c = coarse_predict(enc, t.bank.shared_prompt, t.world.catalog, img, 1.0);
    CHECK(c.normalized);
    CHECK(c.scores == class_probabilities(enc, t.bank.shared_prompt, t.world.catalog, img, 1.0).scores);

    const std::size_t one[] = {5};
    CHECK(coarse_predict(enc, t.bank.shared_prompt, t.world.catalog.subset(one), img, 1.0).scores ==
          Vector{1.0});

    SUBCASE("aligned world") {
        SyntheticWorldSpec s;
        s.classes = 6;
        s.sigma = 0.0;
        s.domain_shift_scale = 0.0;
        s.class_shift_scale = 0.0;
        const SyntheticWorld w = make_synthetic_world(s);
        for (std::uint32_t k = 0; k < 6; ++k) {
            const Prediction p =
                coarse_predict(*w.encoder, TokenMatrix(4, 16), w.catalog, w.encoder->encode_image({k, 0}), 1.0);
            CHECK(argmax(p.scores) == k);
        }
    }
}

TEST_CASE("matching scores coincide with the coarse prediction on the bank catalog") {
    const Trained t = small_bank();
    const auto& enc = *t.world.encoder;
    for (std::uint32_t c = 0; c < 8; ++c) {
        const Embedding img = enc.encode_image({c, 2});
        const Prediction coarse = coarse_predict(enc, t.bank.shared_prompt, t.world.catalog, img, 1.0);
        for (const auto& m : match_topk(img, t.bank, 3, enc.logit_scale(), 1.0)) {
            CHECK(std::abs(m.gamma - coarse.scores[m.cache_index]) < 1e-12);
        }
    }
}

TEST_CASE("classify") {
    const Trained t = small_bank();
    const auto& enc = *t.world.encoder;
    const auto& cat = t.world.catalog;
    QkpmConfig cfg;

    SUBCASE("A uses every entry with softmax weights") {
        const Embedding img = enc.encode_image({4, 1});
        const Classification r = classify(enc, t.bank, cat, img, cfg, Strategy::all);
        REQUIRE(r.matches.size() == t.bank.size());
        const Vector gamma = match_scores(img, t.bank, enc.logit_scale(), 1.0);
        for (std::size_t i = 0; i < gamma.size(); ++i) {
            CHECK(r.matches[i].cache_index == i);
            CHECK(r.matches[i].gamma == gamma[i]);
        }
    }
    SUBCASE("M is top-K matching and the pipeline equals the explicit oracle") {
        for (std::uint32_t c = 0; c < 8; ++c) {
            const Embedding img = enc.encode_image({c, 9});
            const Classification r = classify(enc, t.bank, cat, img, cfg, Strategy::matching);
            CHECK(r.matches == match_topk(img, t.bank, 3, enc.logit_scale(), 1.0));
            std::vector<Vector> preds;
            Vector gammas;
            for (const auto& m : r.matches) {
                preds.push_back(class_probabilities(enc, t.bank.entries[m.cache_index].value, cat, img, 1.0).scores);
                gammas.push_back(m.gamma);
            }
            const Vector ref = oracle::explicit_refine(preds, gammas, r.coarse.scores, cfg.beta);
            for (std::size_t j = 0; j < ref.size(); ++j) CHECK(std::abs(r.refined.scores[j] - ref[j]) < 1e-12);
            CHECK(r.label == argmax(r.refined.scores));
        }
    }
    SUBCASE("beta zero reduces to the coarse prediction") {
        cfg.beta = 0.0;
        for (Strategy s : {Strategy::matching, Strategy::random, Strategy::all}) {
            for (std::uint32_t c = 0; c < 8; ++c) {
                const Classification r = classify(enc, t.bank, cat, enc.encode_image({c, 5}), cfg, s, c);
                CHECK(r.refined.scores == r.coarse.scores);
                CHECK(r.label == argmax(r.coarse.scores));
            }
        }
    }
    SUBCASE("R draws K distinct entries with uniform weights, seeded by the sample key") {
        const Embedding img = enc.encode_image({0, 0});
        const Classification a = classify(enc, t.bank, cat, img, cfg, Strategy::random, 42);
        const Classification b = classify(enc, t.bank, cat, img, cfg, Strategy::random, 42);
        CHECK(a.matches == b.matches);
        REQUIRE(a.matches.size() == 3);
        std::set<std::size_t> seen;
        for (const auto& m : a.matches) {
            seen.insert(m.cache_index);
            CHECK(m.gamma == doctest::Approx(1.0 / 3.0));
        }
        CHECK(seen.size() == 3);
        bool differs = false;
        for (std::uint64_t key = 0; key < 20 && !differs; ++key) {
            differs = classify(enc, t.bank, cat, img, cfg, Strategy::random, key).matches != a.matches;
        }
        CHECK(differs);
    }
    SUBCASE("top-K renormalization") {
        cfg.gamma_mode = GammaMode::topk;
        const Classification r = classify(enc, t.bank, cat, enc.encode_image({2, 3}), cfg, Strategy::matching);
        double sum = 0.0;
        for (const auto& m : r.matches) sum += m.gamma;
        CHECK(std::abs(sum - 1.0) < 1e-12);
    }
    SUBCASE("novel catalog against a base bank") {
        const std::size_t novel[] = {6, 7};
        const Classification r =
            classify(enc, t.bank, cat.subset(novel), enc.encode_image({7, 1}), cfg, Strategy::matching);
        CHECK(r.refined.scores.size() == 2);
        CHECK(r.label < 2);
    }
    SUBCASE("empty bank") {
        CHECK_THROWS_AS(classify(enc, PromptBank{}, cat, enc.encode_image({0, 0}), cfg, Strategy::matching),
                        EmptyBank);
    }
}
