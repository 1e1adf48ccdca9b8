#include "doctest.h"
#include "../oracles.hpp"
#include "support.hpp"

#include "reml/attack.hpp"

#include <cmath>
#include <fstream>
#include <regex>
#include <sstream>

using namespace reml;

namespace {

/// Single linear layer: logits = W x + b.
Surrogate linear_surrogate(const std::vector<double> &w, const std::vector<double> &b) {
    DenseLayer layer;
    layer.inputs = w.size() / 2;
    layer.outputs = 2;
    layer.weights = w;
    layer.bias = b;
    layer.activation = Activation::linear;
    return Surrogate(Mlp({layer}));
}

Surrogate random_surrogate(std::size_t d, std::uint64_t seed) {
    const std::vector<std::size_t> widths{d, 12, 2};
    const std::vector<Activation> acts{Activation::tanh, Activation::linear};
    auto net = Mlp::glorot(widths, acts, seed);
    oracle::jitter_biases(net, seed);
    return Surrogate(std::move(net));
}

const Surrogate &trained_surrogate() {
    static const Surrogate s = [] {
        const auto split = test::synthetic_split(2000, 16, 1.5, 0.02, 42);
        TrainConfig tc;
        tc.epochs = 60;
        tc.learning_rate = 3e-3;
        tc.seed = 8;
        return train_classifier(split.train.features, split.train.labels, 32, tc);
    }();
    return s;
}

}  // namespace

TEST_CASE("jsma parameters") {
    JsmaParams p;
    CHECK_NOTHROW(p.validate());
    CHECK(p.max_features(16) == 2);
    CHECK(p.max_features(10) == 1);
    CHECK(p.max_features(11) == 2);
    p.gamma = 1e-9;
    CHECK(p.max_features(100) == 1);
    p.gamma = 1.0;
    CHECK(p.max_features(7) == 7);
    for (const double bad : {0.0, -0.1, 1.5}) {
        JsmaParams q;
        q.theta = bad;
        CHECK_THROWS_AS(q.validate(), InvalidConfig);
        q = {};
        q.gamma = bad;
        CHECK_THROWS_AS(q.validate(), InvalidConfig);
    }
}

TEST_CASE("jacobian shape, normalization and finite differences") {
    const auto s = random_surrogate(6, 3);
    Rng rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> x(6);
        for (auto &v : x) {
            v = rng.uniform(0.0, 1.0);
        }
        const auto j = jacobian(s, x);
        REQUIRE(j.rows() == 2);
        REQUIRE(j.cols() == 6);
        const auto fd = oracle::numeric_jacobian(s, x);
        for (std::size_t i = 0; i < 6; ++i) {
            CHECK(std::abs(j(0, i) + j(1, i)) < 1e-12);
            for (std::size_t c = 0; c < 2; ++c) {
                CHECK(oracle::rel_err(j(c, i), fd(c, i)) < 1e-4);
            }
        }
    }
}

TEST_CASE("saliency map") {
    // rows are classes; target benign is row 0
    const Matrix jac(2, 2, std::vector<double>{0.2, -0.1, -0.3, 0.4});
    const auto s = saliency_map(jac, kBenign);
    CHECK(s[0] == doctest::Approx(0.06).epsilon(1e-12));
    CHECK(s[1] == 0.0);

    const Matrix negative(2, 3, std::vector<double>{-0.1, -0.2, -0.3, 0.1, 0.2, 0.3});
    for (const double v : saliency_map(negative, kBenign)) {
        CHECK(v == 0.0);
    }
    CHECK_THROWS_AS(saliency_map(Matrix(3, 2), kBenign), DimensionMismatch);

    const auto net = random_surrogate(8, 5);
    Rng rng(6);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> x(8);
        for (auto &v : x) {
            v = rng.uniform(0.0, 1.0);
        }
        for (const double v : saliency_map(jacobian(net, x), static_cast<Label>(trial % 2))) {
            CHECK(v >= 0.0);
        }
    }
}

TEST_CASE("no-op when the surrogate already predicts the target") {
    // benign logit dominates everywhere on [0,1]^2
    const auto s = linear_surrogate({1, 1, 0, 0}, {5, 0});
    const std::vector<double> x{0.3, 0.7};
    const auto r = jsma_perturb(s, x, JsmaParams{});
    CHECK(r.success);
    CHECK(r.changed_count == 0);
    CHECK(r.steps == 0);
    CHECK(r.x_adv == x);
}

TEST_CASE("greedy flips a linear surrogate with the fewest features") {
    // With theta=1 each chosen feature jumps from 0 to 1, so the outcome of a
    // run is a feature subset; enumerate all of them.
    constexpr std::size_t d = 4;
    JsmaParams p;
    p.theta = 1.0;
    p.gamma = 1.0;
    Rng rng(99);
    std::size_t flippable = 0;
    for (int trial = 0; trial < 500; ++trial) {
        std::vector<double> w(2 * d);
        for (auto &v : w) {
            v = rng.uniform(-2.0, 2.0);
        }
        const std::vector<double> b{0.0, rng.uniform(0.1, 3.0)};
        const auto s = linear_surrogate(w, b);
        const std::vector<double> x(d, 0.0);
        REQUIRE(s.predict(x) == kAttack);

        std::size_t best = d + 1;
        for (std::uint32_t mask = 0; mask < (1u << d); ++mask) {
            std::vector<double> cand(d, 0.0);
            std::size_t size = 0;
            for (std::size_t i = 0; i < d; ++i) {
                if ((mask >> i) & 1u) {
                    cand[i] = 1.0;
                    ++size;
                }
            }
            if (s.predict(cand) == kBenign) {
                best = std::min(best, size);
            }
        }
        const auto r = jsma_perturb(s, x, p);
        CHECK(r.success == (best <= d));
        if (best <= d) {
            ++flippable;
            CHECK(r.changed_count == best);
            CHECK(s.predict(r.x_adv) == kBenign);
        }
        for (const double v : r.x_adv) {
            CHECK((v == 0.0 || v == 1.0));
        }
    }
    CHECK(flippable > 100);
}

TEST_CASE("budget and range hold over random inputs") {
    const std::size_t d = 20;
    const auto s = random_surrogate(d, 12);
    Rng rng(13);
    for (const double gamma : {0.1, 0.25}) {
        JsmaParams p;
        p.gamma = gamma;
        const auto budget = p.max_features(d);
        for (int trial = 0; trial < 1000; ++trial) {
            std::vector<double> x(d);
            for (auto &v : x) {
                v = rng.uniform(0.0, 1.0);
            }
            const auto r = jsma_perturb(s, x, p);
            REQUIRE(r.changed_count <= budget);
            std::size_t differing = 0;
            for (std::size_t i = 0; i < d; ++i) {
                REQUIRE(r.x_adv[i] >= 0.0);
                REQUIRE(r.x_adv[i] <= 1.0);
                differing += r.x_adv[i] != x[i] ? 1 : 0;
            }
            CHECK(differing <= r.changed_count);
            if (r.success) {
                CHECK(s.predict(r.x_adv) == p.target);
            }
        }
    }
}

TEST_CASE("crafting perturbs attack rows only") {
    const auto split = test::synthetic_split(600, 16, 1.5, 0.02, 42);
    const auto &s = trained_surrogate();

    SUBCASE("benign rows are copied bit for bit") {
        const auto adv = craft_adversarial_testset(s, split.test, JsmaParams{});
        CHECK(adv.data.labels == split.test.labels);
        for (std::size_t r = 0; r < split.test.rows(); ++r) {
            CHECK(adv.meta[r].perturbed == (split.test.labels[r] == kAttack));
            if (split.test.labels[r] == kBenign) {
                for (std::size_t j = 0; j < split.test.dim(); ++j) {
                    CHECK(adv.data.features(r, j) == split.test.features(r, j));
                }
            }
            CHECK(adv.meta[r].changed_count <= 2);
        }
    }
    SUBCASE("zero attack rows leaves the set unchanged") {
        std::vector<std::size_t> benign;
        for (std::size_t r = 0; r < split.test.rows(); ++r) {
            if (split.test.labels[r] == kBenign) {
                benign.push_back(r);
            }
        }
        const auto only = split.test.subset(benign);
        const auto adv = craft_adversarial_testset(s, only, JsmaParams{});
        CHECK(adv.data == only);
        CHECK(adv.success_rate() == 0.0);
    }
    SUBCASE("a one-feature budget changes at most one feature") {
        JsmaParams p;
        p.gamma = 1e-6;
        const auto adv = craft_adversarial_testset(s, split.test, p);
        for (std::size_t r = 0; r < split.test.rows(); ++r) {
            std::size_t differing = 0;
            for (std::size_t j = 0; j < split.test.dim(); ++j) {
                differing += adv.data.features(r, j) != split.test.features(r, j) ? 1 : 0;
            }
            CHECK(differing <= 1);
        }
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(craft_adversarial_testset(s, split.test.subset(std::vector<std::size_t>{}), JsmaParams{}), DataError);
        const auto narrow = test::synthetic_split(200, 8, 1.5, 0.02, 1);
        CHECK_THROWS_AS(craft_adversarial_testset(s, narrow.test, JsmaParams{}), DimensionMismatch);
    }
}

TEST_CASE("default parameters evade the trained surrogate on most attack rows") {
    const auto split = test::synthetic_split(2000, 16, 1.5, 0.02, 42);
    const auto adv = craft_adversarial_testset(trained_surrogate(), split.test, JsmaParams{});
    CHECK(adv.success_rate() >= 0.5);
}

TEST_CASE("adversarial set round trip through csv and sidecar") {
    const auto split = test::synthetic_split(400, 16, 1.5, 0.02, 42);
    const auto adv = craft_adversarial_testset(trained_surrogate(), split.test, JsmaParams{});
    test::TempDir dir("attack");
    save_adversarial(dir.path() / "adv.csv", dir.path() / "adv.json", adv, "feedc0de12345678");
    AdversarialTestSet back;
    CHECK(load_adversarial(dir.path() / "adv.csv", dir.path() / "adv.json", back) == "feedc0de12345678");
    CHECK(back.data.features == adv.data.features);
    CHECK(back.data.labels == adv.data.labels);
    CHECK(back.meta == adv.meta);
    CHECK(back.params.theta == adv.params.theta);
    CHECK(back.params.gamma == adv.params.gamma);

    std::ofstream(dir.path() / "bad.json") << "{\"rows\": 3}";
    CHECK_THROWS_AS(load_adversarial(dir.path() / "adv.csv", dir.path() / "bad.json", back), DataError);
}

TEST_CASE("the attacker has no dependency on deployed models") {
    const std::filesystem::path root = REML_SOURCE_DIR;
    const std::regex forbidden(R"(#\s*include\s*[<"]reml/(dagt|mtd|quant|forest|eval|feedback|pipeline)\.hpp[>"])");
    const std::regex local(R"(#\s*include\s*"reml/([a-z_]+)\.hpp")");
    for (const auto &file : {root / "src" / "attack.cpp", root / "include" / "reml" / "attack.hpp"}) {
        std::ifstream in(file);
        REQUIRE(in.good());
        std::stringstream ss;
        ss << in.rdbuf();
        const auto text = ss.str();
        CHECK_MESSAGE(!std::regex_search(text, forbidden), file.string());
        // one level down: the headers it pulls in stay clear of models too
        for (std::sregex_iterator it(text.begin(), text.end(), local), end; it != end; ++it) {
            std::ifstream dep(root / "include" / "reml" / ((*it)[1].str() + ".hpp"));
            std::stringstream ds;
            ds << dep.rdbuf();
            const auto dep_text = ds.str();
            CHECK_MESSAGE(!std::regex_search(dep_text, forbidden), (*it)[1].str());
        }
    }
}
