#include "reml/eval.hpp"
#include "reml/binary_io.hpp"
#include "reml/parallel.hpp"

#include <fmt/format.h>
#include "json.hpp"

#include <algorithm>
#include <cmath>

namespace reml {

double ConfusionMatrix::accuracy() const noexcept {
    const auto n = total();
    return n == 0 ? 0.0 : static_cast<double>(tp + tn) / static_cast<double>(n);
}

ConfusionMatrix confusion(std::span<const Label> preds, std::span<const Label> truth) {
    if (preds.size() != truth.size()) {
        throw DimensionMismatch("confusion", truth.size(), preds.size());
    }
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (preds[i] > 1 || truth[i] > 1) {
            throw DataError(fmt::format("confusion: non-binary label at row {}", i));
        }
        const bool p = preds[i] == kAttack;
        const bool t = truth[i] == kAttack;
        if (p && t) {
            ++cm.tp;
        } else if (p) {
            ++cm.fp;
        } else if (t) {
            ++cm.fn;
        } else {
            ++cm.tn;
        }
    }
    return cm;
}

Metrics metrics(const ConfusionMatrix &cm) {
    Metrics m;
    const auto ratio = [](std::size_t num, std::size_t den, bool &undefined) {
        undefined = den == 0;
        return undefined ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
    };
    m.precision = ratio(cm.tp, cm.tp + cm.fp, m.precision_undefined);
    m.recall = ratio(cm.tp, cm.tp + cm.fn, m.recall_undefined);
    const double sum = m.precision + m.recall;
    m.f1_undefined = !(sum > 0.0);
    m.f1 = m.f1_undefined ? 0.0 : 2.0 * m.precision * m.recall / sum;
    return m;
}

std::string_view to_string(Method m) {
    switch (m) {
    case Method::base:
        return "base";
    case Method::rml:
        return "rml";
    case Method::reml:
        return "reml";
    }
    return "?";
}

std::string_view to_string(TestSet s) { return s == TestSet::clean ? "clean" : "adversarial"; }

std::string cell_key(Method m, TestSet s) { return fmt::format("{}/{}", to_string(m), to_string(s)); }

void EvalReport::set(Method m, TestSet s, const ConfusionMatrix &cm) { cells[index(m, s)] = EvalCell{cm, metrics(cm)}; }

const EvalCell &EvalReport::at(Method m, TestSet s) const {
    const auto &c = cells[index(m, s)];
    if (!c) {
        throw DataError(fmt::format("evaluation report is missing cell '{}'", cell_key(m, s)));
    }
    return *c;
}

void EvalReport::check_complete() const {
    for (const auto m : kMethods) {
        for (const auto s : kTestSets) {
            (void)at(m, s);
        }
    }
}

std::string_view to_string(Exposure e) { return e == Exposure::minority ? "minority" : "all"; }

Exposure parse_exposure(std::string_view s) {
    if (s == "minority") {
        return Exposure::minority;
    }
    if (s == "all") {
        return Exposure::all;
    }
    throw InvalidConfig(fmt::format("unknown exposure '{}' (expected minority or all)", s));
}

void ComparisonConfig::validate() const {
    policy.validate();
    if (t == 0) {
        throw InvalidConfig("t must be at least 1");
    }
    if (m % 2 == 0) {
        throw InvalidConfig(fmt::format("m={} is even; use m={} or m={} so binary votes cannot tie", m, m == 0 ? 1 : m - 1, m + 1));
    }
    if (n > t) {
        throw InvalidConfig(fmt::format("n={} exceeds t={}", n, t));
    }
    if (m > n) {
        throw InvalidConfig(fmt::format("m={} exceeds n={}", m, n));
    }
}

ComparisonSeeds ComparisonSeeds::derive(std::uint64_t master) {
    return {mix_seed(master, 0x62617365), mix_seed(master, 0x7265706f), mix_seed(master, 0x6465706c)};
}

std::vector<Label> predict_forest(const RandomForest &rf, const Dataset &ds) {
    std::vector<Label> out(ds.rows());
    parallel_for(ds.rows(), [&](std::size_t r) { out[r] = forest_predict(rf, ds.row(r)).label; });
    return out;
}

std::vector<Label> predict_ensemble(const DeployedEnsemble &ens, const Dataset &ds) {
    std::vector<Label> out(ds.rows());
    parallel_for(ds.rows(), [&](std::size_t r) { out[r] = ensemble_predict_at(ens, ds.row(r), r, r).final_label; });
    return out;
}

std::vector<Label> predict_ensemble_adversarial(const DeployedEnsemble &ens, const Dataset &clean, const Dataset &adv,
                                                Exposure exposure) {
    if (exposure == Exposure::all) {
        return predict_ensemble(ens, adv);
    }
    if (clean.rows() != adv.rows() || clean.dim() != adv.dim()) {
        throw DataError(fmt::format("minority exposure needs row-aligned sets ({}x{} clean vs {}x{} adversarial)", clean.rows(),
                                    clean.dim(), adv.rows(), adv.dim()));
    }
    const std::size_t exposed = ens.m() / 2;
    std::vector<Label> out(adv.rows());
    parallel_for(adv.rows(), [&](std::size_t r) {
        out[r] = ensemble_predict_exposed(ens, clean.row(r), adv.row(r), exposed, r, r).final_label;
    });
    return out;
}

EvalReport evaluate_models(const RandomForest &base, const DeployedEnsemble &rml, const DeployedEnsemble &reml,
                           const Dataset &clean_test, const Dataset &adv_test, Exposure exposure) {
    if (clean_test.dim() != adv_test.dim()) {
        throw DimensionMismatch("evaluate_models", clean_test.dim(), adv_test.dim());
    }
    EvalReport report;
    report.set(Method::base, TestSet::clean, confusion(predict_forest(base, clean_test), clean_test.labels));
    report.set(Method::base, TestSet::adversarial, confusion(predict_forest(base, adv_test), adv_test.labels));
    report.set(Method::rml, TestSet::clean, confusion(predict_ensemble(rml, clean_test), clean_test.labels));
    report.set(Method::rml, TestSet::adversarial,
               confusion(predict_ensemble_adversarial(rml, clean_test, adv_test, exposure), adv_test.labels));
    report.set(Method::reml, TestSet::clean, confusion(predict_ensemble(reml, clean_test), clean_test.labels));
    report.set(Method::reml, TestSet::adversarial,
               confusion(predict_ensemble_adversarial(reml, clean_test, adv_test, exposure), adv_test.labels));
    return report;
}

EvalReport run_comparison(const Dataset &train, const Dataset &clean_test, const Dataset &adv_test, const ComparisonConfig &cfg) {
    cfg.validate();
    if (train.dim() != clean_test.dim() || train.dim() != adv_test.dim()) {
        throw DataError(fmt::format("train/clean/adversarial dimensions differ ({}, {}, {})", train.dim(), clean_test.dim(),
                                    adv_test.dim()));
    }
    if (train.normalized != clean_test.normalized || train.normalized != adv_test.normalized) {
        throw DataError("train/clean/adversarial sets must share normalization");
    }
    const auto seeds = ComparisonSeeds::derive(cfg.seed);
    auto rf_cfg = cfg.base_rf;
    rf_cfg.seed = seeds.base_rf;
    const auto base = train_forest(train.features, train.labels, rf_cfg);
    const auto reml_repo = build_repository(train, cfg.t, cfg.policy, seeds.repository, EncoderMode::quantized);
    const auto rml_repo = build_repository(train, cfg.t, cfg.policy, seeds.repository, EncoderMode::float_path);
    const auto reml_ens = deploy(reml_repo, cfg.n, cfg.m, seeds.deploy);
    const auto rml_ens = deploy(rml_repo, cfg.n, cfg.m, seeds.deploy);
    auto report = evaluate_models(base, rml_ens, reml_ens, clean_test, adv_test, cfg.exposure);
    report.manifest["seed"] = std::to_string(cfg.seed);
    report.manifest["t"] = std::to_string(cfg.t);
    report.manifest["n"] = std::to_string(cfg.n);
    report.manifest["m"] = std::to_string(cfg.m);
    report.manifest["exposure"] = std::string(to_string(cfg.exposure));
    report.manifest["train_fingerprint"] = hex64(fingerprint(train));
    report.manifest["clean_fingerprint"] = hex64(fingerprint(clean_test));
    report.manifest["adversarial_fingerprint"] = hex64(fingerprint(adv_test));
    return report;
}

std::string report_to_json(const EvalReport &report) {
    report.check_complete();
    nlohmann::json j;
    j["manifest_hash"] = report.manifest_hash;
    j["manifest"] = report.manifest;
    auto cells = nlohmann::json::array();
    for (const auto m : kMethods) {
        for (const auto s : kTestSets) {
            const auto &c = report.at(m, s);
            nlohmann::json cell;
            cell["method"] = to_string(m);
            cell["set"] = to_string(s);
            cell["tp"] = c.cm.tp;
            cell["fp"] = c.cm.fp;
            cell["fn"] = c.cm.fn;
            cell["tn"] = c.cm.tn;
            cell["precision"] = c.m.precision;
            cell["recall"] = c.m.recall;
            cell["f1"] = c.m.f1;
            auto flags = nlohmann::json::array();
            if (c.m.precision_undefined) {
                flags.push_back("precision_undefined");
            }
            if (c.m.recall_undefined) {
                flags.push_back("recall_undefined");
            }
            if (c.m.f1_undefined) {
                flags.push_back("f1_undefined");
            }
            cell["flags"] = std::move(flags);
            cells.push_back(std::move(cell));
        }
    }
    j["cells"] = std::move(cells);
    return j.dump(2) + "\n";
}

EvalReport report_from_json(std::string_view text) {
    EvalReport report;
    try {
        const auto j = nlohmann::json::parse(text);
        report.manifest_hash = j.at("manifest_hash").get<std::string>();
        report.manifest = j.at("manifest").get<std::map<std::string, std::string>>();
        for (const auto &cell : j.at("cells")) {
            const auto method = cell.at("method").get<std::string>();
            const auto set = cell.at("set").get<std::string>();
            const auto m = std::find_if(kMethods.begin(), kMethods.end(), [&](Method x) { return to_string(x) == method; });
            const auto s = std::find_if(kTestSets.begin(), kTestSets.end(), [&](TestSet x) { return to_string(x) == set; });
            if (m == kMethods.end() || s == kTestSets.end()) {
                throw DataError(fmt::format("evaluation report has unknown cell '{}/{}'", method, set));
            }
            EvalCell c;
            c.cm = {cell.at("tp").get<std::size_t>(), cell.at("fp").get<std::size_t>(), cell.at("fn").get<std::size_t>(),
                    cell.at("tn").get<std::size_t>()};
            c.m.precision = cell.at("precision").get<double>();
            c.m.recall = cell.at("recall").get<double>();
            c.m.f1 = cell.at("f1").get<double>();
            for (const auto &f : cell.at("flags")) {
                const auto flag = f.get<std::string>();
                c.m.precision_undefined |= flag == "precision_undefined";
                c.m.recall_undefined |= flag == "recall_undefined";
                c.m.f1_undefined |= flag == "f1_undefined";
            }
            report.cells[EvalReport::index(*m, *s)] = c;
        }
    } catch (const nlohmann::json::exception &e) {
        throw DataError(fmt::format("malformed evaluation report ({})", e.what()));
    }
    report.check_complete();
    return report;
}

std::string metrics_csv(const EvalReport &report) {
    report.check_complete();
    std::string out = "method,set,tp,fp,fn,tn,precision,recall,f1\n";
    for (const auto m : kMethods) {
        for (const auto s : kTestSets) {
            const auto &c = report.at(m, s);
            out += fmt::format("{},{},{},{},{},{},{:.6f},{:.6f},{:.6f}\n", to_string(m), to_string(s), c.cm.tp, c.cm.fp,
                               c.cm.fn, c.cm.tn, c.m.precision, c.m.recall, c.m.f1);
        }
    }
    return out;
}

namespace {

constexpr std::array<std::string_view, 3> kMetricNames{"Precision", "Recall", "F1"};

std::string_view method_title(Method m) {
    switch (m) {
    case Method::base:
        return "RF";
    case Method::rml:
        return "rML";
    case Method::reml:
        return "reML";
    }
    return "?";
}

// White at 0 to dark blue at 1.
std::string ramp(double v) {
    v = std::clamp(v, 0.0, 1.0);
    const auto lerp = [v](int a, int b) { return static_cast<int>(std::lround(a + (b - a) * v)); };
    return fmt::format("#{:02x}{:02x}{:02x}", lerp(247, 8), lerp(251, 48), lerp(255, 107));
}

std::string text_color(double v) { return v > 0.55 ? "#ffffff" : "#000000"; }

}  // namespace

std::string heatmap_svg(const EvalReport &report) {
    report.check_complete();
    constexpr int cw = 84;
    constexpr int ch = 40;
    constexpr int left = 70;
    constexpr int top = 60;
    const int width = left + cw * 6 + 10;
    const int height = top + ch * 3 + 10;
    std::string svg = fmt::format(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" font-family=\"sans-serif\" font-size=\"12\">\n",
        width, height);
    for (std::size_t si = 0; si < kTestSets.size(); ++si) {
        svg += fmt::format("<text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-weight=\"bold\">{}</text>\n",
                           left + cw * (3 * static_cast<int>(si)) + cw * 3 / 2, to_string(kTestSets[si]));
        for (std::size_t k = 0; k < kMetricNames.size(); ++k) {
            svg += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
                               left + cw * static_cast<int>(3 * si + k) + cw / 2, top - 10, kMetricNames[k]);
        }
    }
    for (std::size_t mi = 0; mi < kMethods.size(); ++mi) {
        const int y = top + ch * static_cast<int>(mi);
        svg += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n", left - 8, y + ch / 2 + 4,
                           method_title(kMethods[mi]));
        for (std::size_t si = 0; si < kTestSets.size(); ++si) {
            const auto &c = report.at(kMethods[mi], kTestSets[si]);
            const std::array<double, 3> values{c.m.precision, c.m.recall, c.m.f1};
            for (std::size_t k = 0; k < values.size(); ++k) {
                const int x = left + cw * static_cast<int>(3 * si + k);
                svg += fmt::format(
                    "<rect class=\"cell\" data-key=\"{}/{}\" x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{}\" "
                    "stroke=\"#ffffff\"/>\n",
                    cell_key(kMethods[mi], kTestSets[si]), kMetricNames[k], x, y, cw, ch, ramp(values[k]));
                svg += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" fill=\"{}\">{:.3f}</text>\n", x + cw / 2,
                                   y + ch / 2 + 4, text_color(values[k]), values[k]);
            }
        }
    }
    svg += "</svg>\n";
    return svg;
}

std::string confusion_svg(const EvalReport &report) {
    report.check_complete();
    constexpr int cell = 60;
    constexpr int panel_w = 2 * cell + 90;
    constexpr int panel_h = 2 * cell + 70;
    const int width = panel_w * 2 + 20;
    const int height = panel_h * 3 + 20;
    std::string svg = fmt::format(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" font-family=\"sans-serif\" font-size=\"12\">\n",
        width, height);
    for (std::size_t mi = 0; mi < kMethods.size(); ++mi) {
        for (std::size_t si = 0; si < kTestSets.size(); ++si) {
            const auto &c = report.at(kMethods[mi], kTestSets[si]);
            const int ox = 10 + panel_w * static_cast<int>(si);
            const int oy = 10 + panel_h * static_cast<int>(mi);
            const int gx = ox + 70;
            const int gy = oy + 40;
            svg += fmt::format("<g class=\"panel\" data-key=\"{}\">\n", cell_key(kMethods[mi], kTestSets[si]));
            svg += fmt::format("<text x=\"{}\" y=\"{}\" font-weight=\"bold\">{} / {}</text>\n", ox, oy + 14,
                               method_title(kMethods[mi]), to_string(kTestSets[si]));
            svg += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">pred attack</text>\n", gx + cell / 2, gy - 6);
            svg += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">pred benign</text>\n", gx + cell * 3 / 2, gy - 6);
            svg += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"end\">attack</text>\n", gx - 6, gy + cell / 2 + 4);
            svg += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"end\">benign</text>\n", gx - 6, gy + cell * 3 / 2 + 4);
            // rows: true attack, true benign; columns: predicted attack, predicted benign
            const std::array<std::size_t, 4> counts{c.cm.tp, c.cm.fn, c.cm.fp, c.cm.tn};
            const double total = std::max<double>(1.0, static_cast<double>(c.cm.total()));
            for (int k = 0; k < 4; ++k) {
                const int x = gx + cell * (k % 2);
                const int y = gy + cell * (k / 2);
                const double v = static_cast<double>(counts[static_cast<std::size_t>(k)]) / total * 2.0;
                svg += fmt::format(
                    "<rect class=\"cm-cell\" x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{}\" stroke=\"#888888\"/>\n", x,
                    y, cell, cell, ramp(v));
                svg += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" fill=\"{}\">{}</text>\n", x + cell / 2,
                                   y + cell / 2 + 4, text_color(v), counts[static_cast<std::size_t>(k)]);
            }
            svg += "</g>\n";
        }
    }
    svg += "</svg>\n";
    return svg;
}

std::vector<std::filesystem::path> emit_report(const EvalReport &report, const std::filesystem::path &dir) {
    report.check_complete();
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) {
        throw Error(ErrorKind::runtime, fmt::format("cannot create report directory '{}': {}", dir.string(), ec.message()));
    }
    const std::string tag = report.manifest_hash.empty() ? std::string("unhashed") : report.manifest_hash;
    const std::vector<std::pair<std::string, std::string>> files{
        {fmt::format("report_{}.json", tag), report_to_json(report)},
        {fmt::format("metrics_{}.csv", tag), metrics_csv(report)},
        {fmt::format("heatmap_{}.svg", tag), heatmap_svg(report)},
        {fmt::format("confusion_{}.svg", tag), confusion_svg(report)},
    };
    std::vector<std::filesystem::path> written;
    for (const auto &[name, body] : files) {
        written.push_back(dir / name);
        write_file(written.back(), body);
    }
    return written;
}

}  // namespace reml
