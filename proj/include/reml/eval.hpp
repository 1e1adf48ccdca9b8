#pragma once

#include "reml/dagt.hpp"
#include "reml/data.hpp"
#include "reml/forest.hpp"
#include "reml/mtd.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace reml {

/// Binary tally with attack as the positive class.
struct ConfusionMatrix {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    std::size_t tn = 0;

    std::size_t total() const noexcept { return tp + fp + fn + tn; }
    double accuracy() const noexcept;
    friend bool operator==(const ConfusionMatrix &, const ConfusionMatrix &) = default;
};

ConfusionMatrix confusion(std::span<const Label> preds, std::span<const Label> truth);

/// Zero denominators yield 0 and set the matching flag.
struct Metrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    bool precision_undefined = false;
    bool recall_undefined = false;
    bool f1_undefined = false;

    friend bool operator==(const Metrics &, const Metrics &) = default;
};

Metrics metrics(const ConfusionMatrix &cm);

enum class Method : std::uint8_t { base = 0, rml = 1, reml = 2 };
enum class TestSet : std::uint8_t { clean = 0, adversarial = 1 };

inline constexpr std::array<Method, 3> kMethods{Method::base, Method::rml, Method::reml};
inline constexpr std::array<TestSet, 2> kTestSets{TestSet::clean, TestSet::adversarial};

std::string_view to_string(Method m);
std::string_view to_string(TestSet s);
/// "reml/adversarial" etc.
std::string cell_key(Method m, TestSet s);

struct EvalCell {
    ConfusionMatrix cm;
    Metrics m;

    friend bool operator==(const EvalCell &, const EvalCell &) = default;
};

struct EvalReport {
    std::string manifest_hash;
    std::map<std::string, std::string> manifest;
    std::array<std::optional<EvalCell>, 6> cells;

    static std::size_t index(Method m, TestSet s) { return static_cast<std::size_t>(m) * 2 + static_cast<std::size_t>(s); }
    void set(Method m, TestSet s, const ConfusionMatrix &cm);
    /// Throws DataError naming the first missing cell.
    const EvalCell &at(Method m, TestSet s) const;
    void check_complete() const;

    friend bool operator==(const EvalReport &, const EvalReport &) = default;
};

/// How the adversarial set reaches the m selected services.
enum class Exposure : std::uint8_t {
    minority = 0,  // floor(m/2) selected services see the adversarial row, the rest the clean row
    all = 1,       // every selected service sees the adversarial row
};

std::string_view to_string(Exposure e);
Exposure parse_exposure(std::string_view s);

struct ComparisonConfig {
    RfConfig base_rf;
    DiversificationPolicy policy;
    std::size_t t = 9;
    std::size_t n = 7;
    std::size_t m = 5;
    std::uint64_t seed = 42;
    Exposure exposure = Exposure::minority;

    void validate() const;
};

/// Seeds each stochastic piece of a comparison derives from the master seed.
struct ComparisonSeeds {
    std::uint64_t base_rf = 0;
    std::uint64_t repository = 0;
    std::uint64_t deploy = 0;

    static ComparisonSeeds derive(std::uint64_t master);
};

std::vector<Label> predict_forest(const RandomForest &rf, const Dataset &ds);
/// Draw index = row index, so a run is reproducible regardless of threading.
std::vector<Label> predict_ensemble(const DeployedEnsemble &ens, const Dataset &ds);
std::vector<Label> predict_ensemble_adversarial(const DeployedEnsemble &ens, const Dataset &clean, const Dataset &adv,
                                                Exposure exposure);

/// Scores already trained models on both sets.
EvalReport evaluate_models(const RandomForest &base, const DeployedEnsemble &rml, const DeployedEnsemble &reml,
                           const Dataset &clean_test, const Dataset &adv_test, Exposure exposure);

/// Trains the base forest on raw features, builds float and int8 repositories
/// from one master seed, deploys both identically and scores all six cells.
EvalReport run_comparison(const Dataset &train, const Dataset &clean_test, const Dataset &adv_test, const ComparisonConfig &cfg);

std::string report_to_json(const EvalReport &report);
EvalReport report_from_json(std::string_view text);
std::string metrics_csv(const EvalReport &report);
std::string heatmap_svg(const EvalReport &report);
std::string confusion_svg(const EvalReport &report);

/// Writes report_<hash>.json, metrics_<hash>.csv, heatmap_<hash>.svg and
/// confusion_<hash>.svg into `dir`; returns the paths written.
std::vector<std::filesystem::path> emit_report(const EvalReport &report, const std::filesystem::path &dir);

}  // namespace reml
