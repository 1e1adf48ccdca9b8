#include "doctest.h"
#include "support.hpp"

#include "reml/feedback.hpp"

#include <fstream>

using namespace reml;

namespace {

DiversificationPolicy small_policy() {
    DiversificationPolicy p;
    p.rf.n_trees = 20;
    p.rf.max_depth = 10;
    p.tc.epochs = 40;
    return p;
}

RepositoryBuilder counting_builder(std::size_t &calls, std::vector<std::uint64_t> *seeds = nullptr) {
    return [&calls, seeds](const Dataset &train, std::uint64_t seed) {
        ++calls;
        if (seeds != nullptr) {
            seeds->push_back(seed);
        }
        return build_repository(train, 3, small_policy(), seed);
    };
}

}  // namespace

TEST_CASE("parameter validation") {
    DriftParams p;
    CHECK_NOTHROW(p.validate());
    p.drift_k = 1.0;
    CHECK_THROWS_AS(p.validate(), InvalidConfig);
    p = {};
    p.min_samples = 0;
    CHECK_THROWS_AS(DriftDetector{p}, InvalidConfig);
    CHECK(parse_refresh_mode("reselect") == RefreshMode::reselect);
    CHECK_THROWS_AS(parse_refresh_mode("retrain"), InvalidConfig);
}

TEST_CASE("a perfect stream stays stable") {
    DriftDetector det;
    for (int i = 0; i < 1000; ++i) {
        CHECK(drift_update(det, true) == DriftStatus::stable);
        CHECK(det.p() >= 0.0);
        CHECK(det.p() <= 1.0);
    }
}

TEST_CASE("the detector is unarmed below the minimum sample count") {
    DriftDetector det;
    for (int i = 0; i < 29; ++i) {
        CHECK(det.update(false) == DriftStatus::stable);
    }
    CHECK(det.p_min() == std::numeric_limits<double>::infinity());
}

TEST_CASE("a jump in error rate is detected within the second phase") {
    int detected = 0;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        Rng rng(seed);
        DriftDetector det;
        for (int i = 0; i < 500; ++i) {
            det.update(!rng.bernoulli(0.05));
        }
        const bool early = det.status() == DriftStatus::drift;
        int hit = -1;
        for (int i = 0; i < 200 && hit < 0; ++i) {
            if (det.update(!rng.bernoulli(0.5)) == DriftStatus::drift) {
                hit = i;
            }
        }
        detected += (!early && hit >= 0) ? 1 : 0;
    }
    CHECK(detected == 50);
}

TEST_CASE("drift latches until reset") {
    DriftDetector det;
    for (int i = 0; i < 200; ++i) {
        det.update(true);
    }
    while (det.status() != DriftStatus::drift) {
        det.update(false);
    }
    for (int i = 0; i < 500; ++i) {
        CHECK(det.update(true) == DriftStatus::drift);
    }
    det.reset();
    CHECK(det == DriftDetector{});
}

TEST_CASE("false drift on stationary streams is rare") {
    for (const double eps : {0.01, 0.05}) {
        constexpr int kRuns = 200;
        int false_alarms = 0;
        for (int run = 0; run < kRuns; ++run) {
            Rng rng(mix_seed(static_cast<std::uint64_t>(eps * 1000), run));
            DriftDetector det;
            for (int i = 0; i < 10000; ++i) {
                if (det.update(!rng.bernoulli(eps)) == DriftStatus::drift) {
                    ++false_alarms;
                    break;
                }
            }
        }
        CAPTURE(eps);
        CHECK(false_alarms <= kRuns / 100);
    }
}

TEST_CASE("feedback loop refresh contract") {
    const auto split = test::synthetic_split(500, 8, 1.5, 0.02, 3);
    std::size_t calls = 0;
    std::vector<std::uint64_t> seeds;
    FeedbackLoop loop(split.train, counting_builder(calls, &seeds), 42);

    SUBCASE("observing without drift never builds") {
        for (int i = 0; i < 300; ++i) {
            loop.observe(true);
        }
        CHECK(calls == 0);
        CHECK(loop.refreshes() == 0);
    }
    SUBCASE("drift plus a labeled window rebuilds with a fresh seed and resets") {
        for (int i = 0; i < 200; ++i) {
            loop.observe(true);
        }
        while (loop.observe(false) != DriftStatus::drift) {
        }
        const auto window = split.test.subset(std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
        const auto out = loop.on_drift(window);
        CHECK_FALSE(out.deferred);
        REQUIRE(out.repository.has_value());
        CHECK(calls == 1);
        CHECK(out.new_seed != 42);
        CHECK(out.repository->master_seed == out.new_seed);
        CHECK(out.repository->data_fingerprint == fingerprint(concat(split.train, window)));
        CHECK(loop.detector() == DriftDetector{});
        const auto again = loop.on_drift(window);
        CHECK(again.new_seed != out.new_seed);
        CHECK(seeds == std::vector<std::uint64_t>{out.new_seed, again.new_seed});
    }
    SUBCASE("an unlabeled window defers the rebuild") {
        while (loop.observe(false) != DriftStatus::drift) {
        }
        auto window = split.test.subset(std::vector<std::size_t>{0, 1, 2});
        window.labels.clear();
        const auto out = loop.on_drift(window);
        CHECK(out.deferred);
        CHECK_FALSE(out.repository.has_value());
        CHECK(calls == 0);
        CHECK(loop.detector().status() == DriftStatus::drift);
    }
    SUBCASE("reselect keeps the repository") {
        FeedbackLoop reselect(split.train, {}, 42, DriftParams{}, RefreshMode::reselect);
        const auto out = reselect.on_drift(split.test);
        CHECK_FALSE(out.deferred);
        CHECK_FALSE(out.repository.has_value());
        CHECK(reselect.refreshes() == 1);
    }
    CHECK_THROWS_AS(FeedbackLoop(split.train, {}, 1), InvalidConfig);
}

TEST_CASE("drift transitions are logged") {
    test::TempDir dir("feedback");
    const auto split = test::synthetic_split(200, 8, 1.5, 0.02, 3);
    std::size_t calls = 0;
    {
        PredictionLog log(dir.path() / "events.jsonl");
        FeedbackLoop loop(split.train, counting_builder(calls), 1, DriftParams{}, RefreshMode::rebuild, &log);
        for (int i = 0; i < 100; ++i) {
            loop.observe(true);
        }
        while (loop.observe(false) != DriftStatus::drift) {
        }
    }
    std::ifstream in(dir.path() / "events.jsonl");
    std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CHECK(all.find("\"status\":\"drift\"") != std::string::npos);
}

TEST_CASE("a stationary stream is replayed without refreshes") {
    const auto split = test::synthetic_split(1200, 8, 4.0, 0.0, 5);
    std::size_t calls = 0;
    auto builder = counting_builder(calls);
    const auto repo = builder(split.train, 7);
    calls = 0;
    FeedbackLoop loop(split.train, builder, 7);
    StreamConfig sc;
    sc.n = 3;
    sc.m = 3;
    const auto res = replay_stream(split.test, repo, loop, sc);
    CHECK(res.drift_at.empty());
    CHECK(calls == 0);
    CHECK(res.correct > split.test.rows() * 9 / 10);
}

TEST_CASE("rebuilding after a shift restores accuracy") {
    constexpr std::size_t d = 8;
    const SynthGenerator gen(d, 2.0, 0.0, 11);
    const auto train_raw = gen.sample(800, 1);
    const auto nz = fit_normalizer(train_raw);
    const auto train = apply_normalizer(nz, train_raw);
    const auto pre = apply_normalizer(nz, gen.sample(400, 2));
    const auto post = apply_normalizer(nz, gen.sample(800, 3, true));
    const auto holdout = apply_normalizer(nz, gen.sample(600, 4, true));

    std::size_t calls = 0;
    auto builder = counting_builder(calls);
    const auto repo = builder(train, 9);
    StreamConfig sc;
    sc.n = 3;
    sc.m = 3;
    sc.deploy_seed = 2;
    sc.window = 300;
    FeedbackLoop loop(train, builder, 9);
    const auto res = replay_stream(concat(pre, post), repo, loop, sc);
    REQUIRE_FALSE(res.drift_at.empty());
    CHECK(res.drift_at.front() >= pre.rows());
    CHECK(res.refreshes >= 1);
    const double stale = ensemble_accuracy(deploy(repo, 3, 3, 2), holdout);
    const double fresh = ensemble_accuracy(res.ensemble, holdout);
    CAPTURE(stale);
    CAPTURE(fresh);
    CHECK(fresh > stale + 0.1);
}
