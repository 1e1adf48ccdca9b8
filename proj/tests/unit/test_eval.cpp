#include "doctest.h"
#include "support.hpp"

#include "reml/eval.hpp"


using namespace reml;

namespace {

EvalReport full_report() {
    EvalReport r;
    r.manifest_hash = "0123456789abcdef";
    r.manifest = {{"seed", "42"}, {"t", "9"}};
    std::size_t k = 1;
    for (const auto m : kMethods) {
        for (const auto s : kTestSets) {
            r.set(m, s, ConfusionMatrix{10 * k, k, 2 * k, 30});
            ++k;
        }
    }
    return r;
}

ComparisonConfig small_comparison() {
    ComparisonConfig c;
    c.base_rf.n_trees = 25;
    c.policy.rf.n_trees = 15;
    c.policy.rf.max_depth = 8;
    c.policy.tc.epochs = 10;
    c.t = 3;
    c.n = 3;
    c.m = 3;
    return c;
}

std::size_t count(const std::string &text, const std::string &needle) {
    std::size_t n = 0;
    for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) {
        ++n;
    }
    return n;
}

}  // namespace

TEST_CASE("confusion tallies") {
    const std::vector<Label> truth{1, 0, 0, 1, 1, 0};
    CHECK(confusion(truth, truth) == ConfusionMatrix{3, 0, 0, 3});
    std::vector<Label> inverted;
    for (const auto y : truth) {
        inverted.push_back(static_cast<Label>(1 - y));
    }
    const auto inv = confusion(inverted, truth);
    CHECK(inv.tp == 0);
    CHECK(inv.tn == 0);
    const std::vector<Label> p{1, 1, 0, 0};
    const std::vector<Label> t{1, 0, 0, 1};
    CHECK(confusion(p, t) == ConfusionMatrix{1, 1, 1, 1});
    CHECK(confusion(p, t).total() == 4);
    CHECK(confusion(p, t).accuracy() == 0.5);
    CHECK_THROWS_AS(confusion(p, std::vector<Label>{1, 0}), Error);
    CHECK_THROWS(confusion(std::vector<Label>{2}, std::vector<Label>{1}));
}

TEST_CASE("metrics arithmetic and conventions") {
    const auto m = metrics(ConfusionMatrix{50, 10, 0, 40});
    CHECK(m.precision == doctest::Approx(0.8333).epsilon(1e-4));
    CHECK(m.recall == 1.0);
    CHECK(m.f1 == doctest::Approx(0.9091).epsilon(1e-4));

    const auto none = metrics(ConfusionMatrix{0, 0, 5, 5});
    CHECK(none.precision == 0.0);
    CHECK(none.precision_undefined);
    CHECK(none.recall == 0.0);
    CHECK(none.f1 == 0.0);

    const auto empty = metrics(ConfusionMatrix{0, 0, 0, 7});
    CHECK(empty.recall_undefined);
    CHECK(empty.f1 == 0.0);
}

TEST_CASE("metric identities over every small matrix") {
    for (std::size_t tp = 0; tp <= 12; ++tp) {
        for (std::size_t fp = 0; fp <= 12; ++fp) {
            for (std::size_t fn = 0; fn <= 12; ++fn) {
                const auto m = metrics(ConfusionMatrix{tp, fp, fn, 3});
                for (const double v : {m.precision, m.recall, m.f1}) {
                    REQUIRE(v >= 0.0);
                    REQUIRE(v <= 1.0);
                }
                CHECK(m.f1 <= std::max(m.precision, m.recall) + 1e-12);
                if (m.precision + m.recall > 0.0) {
                    CHECK(m.f1 == doctest::Approx(2 * m.precision * m.recall / (m.precision + m.recall)));
                }
                if (fp == fn && tp > 0) {
                    CHECK(m.precision == m.recall);
                    CHECK(m.f1 == doctest::Approx(m.precision));
                }
            }
        }
    }
}

TEST_CASE("names and keys") {
    CHECK(cell_key(Method::reml, TestSet::adversarial) == "reml/adversarial");
    CHECK(cell_key(Method::base, TestSet::clean) == "base/clean");
    CHECK(parse_exposure("all") == Exposure::all);
    CHECK(parse_exposure("minority") == Exposure::minority);
    CHECK_THROWS_AS(parse_exposure("some"), InvalidConfig);
}

TEST_CASE("an incomplete report is refused with the missing cell named") {
    auto r = full_report();
    CHECK_NOTHROW(r.check_complete());
    r.cells[EvalReport::index(Method::rml, TestSet::adversarial)].reset();
    try {
        r.check_complete();
        FAIL("expected a missing-cell error");
    } catch (const DataError &e) {
        CHECK(std::string(e.what()).find("rml/adversarial") != std::string::npos);
    }
    CHECK_THROWS_AS(r.at(Method::rml, TestSet::adversarial), DataError);
    CHECK_THROWS_AS(report_to_json(r), DataError);
    test::TempDir dir("eval");
    CHECK_THROWS_AS(emit_report(r, dir.path()), DataError);
}

TEST_CASE("report documents") {
    const auto r = full_report();
    SUBCASE("json round trip") {
        const auto text = report_to_json(r);
        CHECK(report_from_json(text) == r);
        CHECK(report_to_json(report_from_json(text)) == text);
        CHECK_THROWS_AS(report_from_json("{\"cells\": 1}"), DataError);
    }
    SUBCASE("metrics table has a row per cell") {
        const auto csv = metrics_csv(r);
        CHECK(count(csv, "\n") == 7);
        CHECK(csv.find("reml,adversarial") != std::string::npos);
    }
    SUBCASE("heatmap has 3 x 3 x 2 cells") {
        const auto svg = heatmap_svg(r);
        CHECK(svg.rfind("<svg", 0) == 0);
        CHECK(count(svg, "class=\"cell\"") == 18);
    }
    SUBCASE("one confusion panel per cell") {
        const auto svg = confusion_svg(r);
        CHECK(count(svg, "class=\"cm-cell\"") == 6 * 4);
    }
    SUBCASE("files carry the manifest hash") {
        test::TempDir dir("eval");
        const auto paths = emit_report(r, dir.path());
        REQUIRE(paths.size() == 4);
        for (const auto &p : paths) {
            CHECK(std::filesystem::exists(p));
            CHECK(p.filename().string().find(r.manifest_hash) != std::string::npos);
        }
    }
}

TEST_CASE("comparison on identical clean and adversarial sets") {
    const auto split = test::synthetic_split(600, 12, 1.5, 0.02, 4);
    for (const auto exposure : {Exposure::minority, Exposure::all}) {
        auto cfg = small_comparison();
        cfg.exposure = exposure;
        const auto r = run_comparison(split.train, split.test, split.test, cfg);
        for (const auto m : kMethods) {
            CHECK(r.at(m, TestSet::clean) == r.at(m, TestSet::adversarial));
            CHECK(r.at(m, TestSet::clean).cm.total() == split.test.rows());
        }
    }
}

TEST_CASE("comparisons are reproducible") {
    const auto split = test::synthetic_split(400, 8, 1.5, 0.02, 6);
    auto adv = split.test;
    for (auto &v : adv.features.data()) {
        v = std::min(1.0, v + 0.1);
    }
    const auto cfg = small_comparison();
    CHECK(report_to_json(run_comparison(split.train, split.test, adv, cfg)) ==
          report_to_json(run_comparison(split.train, split.test, adv, cfg)));
}

TEST_CASE("a one-service ensemble scores like the service alone") {
    const auto split = test::synthetic_split(600, 12, 1.5, 0.02, 8);
    auto cfg = small_comparison();
    const auto repo = build_repository(split.train, 1, cfg.policy, 3);
    const auto ens = deploy(repo, 1, 1, 5);
    const auto rml = deploy(build_repository(split.train, 1, cfg.policy, 3, EncoderMode::float_path), 1, 1, 5);
    RfConfig rf;
    rf.n_trees = 10;
    const auto base = train_forest(split.train.features, split.train.labels, rf);
    const auto r = evaluate_models(base, rml, ens, split.test, split.test, Exposure::all);

    std::vector<Label> alone;
    for (std::size_t i = 0; i < split.test.rows(); ++i) {
        alone.push_back(service_predict(*repo.services[0], split.test.row(i)));
    }
    const auto cm = confusion(alone, split.test.labels);
    CHECK(r.at(Method::reml, TestSet::clean).cm == cm);
    CHECK(r.at(Method::reml, TestSet::clean).m == metrics(cm));
    CHECK(r.at(Method::base, TestSet::clean).cm == confusion(predict_forest(base, split.test), split.test.labels));
}

TEST_CASE("minority exposure: a fully corrupted adversarial row cannot flip a unanimous ensemble") {
    const auto split = test::synthetic_split(600, 12, 1.5, 0.02, 8);
    const auto cfg = small_comparison();
    const auto repo = build_repository(split.train, 5, cfg.policy, 3);
    const auto ens = deploy(repo, 5, 5, 1);
    // replace every row by a far-away point; only a minority of slots see it
    auto adv = split.test;
    for (std::size_t r = 0; r < adv.rows(); ++r) {
        for (std::size_t j = 0; j < adv.dim(); ++j) {
            adv.features(r, j) = 1.0 - adv.features(r, j);
        }
    }
    const auto clean = predict_ensemble(ens, split.test);
    const auto mixed = predict_ensemble_adversarial(ens, split.test, adv, Exposure::minority);
    for (std::size_t r = 0; r < split.test.rows(); ++r) {
        std::size_t attack = 0;
        for (const auto &svc : repo.services) {
            attack += service_predict(*svc, split.test.row(r)) == kAttack ? 1 : 0;
        }
        if (attack == 0 || attack == repo.size()) {
            CHECK(mixed[r] == clean[r]);
        }
    }
    CHECK(predict_ensemble_adversarial(ens, split.test, split.test, Exposure::all) == clean);
}

TEST_CASE("comparison config validation") {
    auto c = small_comparison();
    CHECK_NOTHROW(c.validate());
    c.m = 2;
    CHECK_THROWS_AS(c.validate(), InvalidConfig);
    c = small_comparison();
    c.n = 5;
    CHECK_THROWS_AS(c.validate(), InvalidConfig);
}
