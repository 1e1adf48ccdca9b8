#pragma once

// Black-box attacker. Depends only on data and the surrogate network; it has
// no access to services, encoders or forests.

#include "reml/data.hpp"
#include "reml/nn.hpp"

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace reml {

struct JsmaParams {
    double theta = 0.2;  // per-step increment
    double gamma = 0.1;  // fraction of features that may change
    Label target = kBenign;

    void validate() const;
    /// ceil(gamma * d), at least 1.
    std::size_t max_features(std::size_t d) const;
};

Matrix jacobian(const Surrogate &s, std::span<const double> x);
/// S[i] = J_t[i] * |J_o[i]| where J_t[i] >= 0 and J_o[i] <= 0, else 0.
std::vector<double> saliency_map(const Matrix &jac, Label target);

struct JsmaResult {
    std::vector<double> x_adv;
    bool success = false;
    std::size_t changed_count = 0;
    std::size_t steps = 0;
};

/// Single-feature increasing JSMA. A chosen feature may be raised again until
/// it saturates at 1; only the number of distinct features is budgeted.
JsmaResult jsma_perturb(const Surrogate &s, std::span<const double> x, const JsmaParams &p);

struct AdversarialRowMeta {
    bool perturbed = false;  // attack rows only
    std::size_t changed_count = 0;
    bool surrogate_success = false;

    friend bool operator==(const AdversarialRowMeta &, const AdversarialRowMeta &) = default;
};

struct AdversarialTestSet {
    Dataset data;  // perturbed features, original labels
    std::vector<AdversarialRowMeta> meta;
    JsmaParams params;

    /// Surrogate success over perturbed rows (0 when none).
    double success_rate() const;
};

/// Evasion: attack rows are pushed toward benign, benign rows are copied.
AdversarialTestSet craft_adversarial_testset(const Surrogate &s, const Dataset &clean_test, const JsmaParams &p);

void save_adversarial(const std::filesystem::path &csv, const std::filesystem::path &sidecar, const AdversarialTestSet &set,
                      const std::string &manifest_hash);
/// Returns the manifest hash recorded in the sidecar.
std::string load_adversarial(const std::filesystem::path &csv, const std::filesystem::path &sidecar, AdversarialTestSet &out);

}  // namespace reml
