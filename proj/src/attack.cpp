#include "reml/attack.hpp"
#include "reml/binary_io.hpp"
#include "reml/parallel.hpp"

#include <fmt/format.h>
#include "json.hpp"

#include <algorithm>
#include <cmath>

namespace reml {

void JsmaParams::validate() const {
    if (!(theta > 0.0 && theta <= 1.0)) {
        throw InvalidConfig(fmt::format("jsma theta must lie in (0,1] (got {})", theta));
    }
    if (!(gamma > 0.0 && gamma <= 1.0)) {
        throw InvalidConfig(fmt::format("jsma gamma must lie in (0,1] (got {})", gamma));
    }
    if (target > 1) {
        throw InvalidConfig("jsma target must be a binary label");
    }
}

std::size_t JsmaParams::max_features(std::size_t d) const {
    const auto budget = static_cast<std::size_t>(std::ceil(gamma * static_cast<double>(d) - 1e-12));
    return std::clamp<std::size_t>(budget, 1, d);
}

Matrix jacobian(const Surrogate &s, std::span<const double> x) { return s.input_jacobian(x); }

std::vector<double> saliency_map(const Matrix &jac, Label target) {
    if (jac.rows() != 2) {
        throw DimensionMismatch("saliency_map rows", 2, jac.rows());
    }
    const auto other = static_cast<std::size_t>(1 - target);
    std::vector<double> s(jac.cols(), 0.0);
    for (std::size_t i = 0; i < jac.cols(); ++i) {
        const double jt = jac(target, i);
        const double jo = jac(other, i);
        if (jt < 0.0 || jo > 0.0) {
            continue;
        }
        s[i] = jt * std::abs(jo);
    }
    return s;
}

JsmaResult jsma_perturb(const Surrogate &s, std::span<const double> x, const JsmaParams &p) {
    p.validate();
    const std::size_t d = x.size();
    const std::size_t budget = p.max_features(d);
    JsmaResult res;
    res.x_adv.assign(x.begin(), x.end());
    std::vector<bool> changed(d, false);

    while (true) {
        if (s.predict(res.x_adv) == p.target) {
            res.success = true;
            break;
        }
        const auto sal = saliency_map(jacobian(s, res.x_adv), p.target);
        std::size_t best = d;
        double best_score = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            const bool open = changed[i] || res.changed_count < budget;
            if (open && res.x_adv[i] < 1.0 && sal[i] > best_score) {
                best = i;
                best_score = sal[i];
            }
        }
        if (best == d) {
            break;
        }
        res.x_adv[best] = std::min(1.0, res.x_adv[best] + p.theta);
        if (!changed[best]) {
            changed[best] = true;
            ++res.changed_count;
        }
        ++res.steps;
    }
    return res;
}

double AdversarialTestSet::success_rate() const {
    std::size_t perturbed = 0;
    std::size_t ok = 0;
    for (const auto &m : meta) {
        if (m.perturbed) {
            ++perturbed;
            ok += m.surrogate_success ? 1 : 0;
        }
    }
    return perturbed == 0 ? 0.0 : static_cast<double>(ok) / static_cast<double>(perturbed);
}

AdversarialTestSet craft_adversarial_testset(const Surrogate &s, const Dataset &clean_test, const JsmaParams &p) {
    p.validate();
    if (clean_test.rows() == 0) {
        throw DataError("craft_adversarial_testset: empty test set");
    }
    if (clean_test.dim() != s.input_dim()) {
        throw DimensionMismatch("craft_adversarial_testset", s.input_dim(), clean_test.dim());
    }
    AdversarialTestSet out;
    out.data = clean_test;
    out.params = p;
    out.meta.resize(clean_test.rows());
    parallel_for(clean_test.rows(), [&](std::size_t r) {
        if (clean_test.labels[r] != kAttack) {
            return;
        }
        const auto res = jsma_perturb(s, clean_test.row(r), p);
        std::copy(res.x_adv.begin(), res.x_adv.end(), out.data.features.row(r).begin());
        out.meta[r] = {true, res.changed_count, res.success};
    });
    return out;
}

void save_adversarial(const std::filesystem::path &csv, const std::filesystem::path &sidecar, const AdversarialTestSet &set,
                      const std::string &manifest_hash) {
    write_csv(csv, set.data);
    nlohmann::json j;
    j["manifest_hash"] = manifest_hash;
    j["theta"] = set.params.theta;
    j["gamma"] = set.params.gamma;
    j["target"] = static_cast<int>(set.params.target);
    j["surrogate_success_rate"] = set.success_rate();
    auto rows = nlohmann::json::array();
    for (const auto &m : set.meta) {
        rows.push_back({{"perturbed", m.perturbed}, {"changed_count", m.changed_count}, {"success", m.surrogate_success}});
    }
    j["rows"] = std::move(rows);
    write_file(sidecar, j.dump(1) + "\n");
}

std::string load_adversarial(const std::filesystem::path &csv, const std::filesystem::path &sidecar, AdversarialTestSet &out) {
    out.data = read_dataset_csv(csv);
    out.data.normalized = true;
    out.data.validate();
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(sidecar));
        out.params.theta = j.at("theta").get<double>();
        out.params.gamma = j.at("gamma").get<double>();
        out.params.target = static_cast<Label>(j.at("target").get<int>());
        out.meta.clear();
        for (const auto &row : j.at("rows")) {
            out.meta.push_back(
                {row.at("perturbed").get<bool>(), row.at("changed_count").get<std::size_t>(), row.at("success").get<bool>()});
        }
    } catch (const nlohmann::json::exception &e) {
        throw DataError(fmt::format("{}: malformed adversarial metadata ({})", sidecar.string(), e.what()));
    }
    if (out.meta.size() != out.data.rows()) {
        throw DataError(fmt::format("{}: metadata has {} rows but the csv has {}", sidecar.string(), out.meta.size(),
                                    out.data.rows()));
    }
    return j.value("manifest_hash", std::string{});
}

}  // namespace reml
