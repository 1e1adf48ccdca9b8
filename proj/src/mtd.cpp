#include "reml/mtd.hpp"

#include <fmt/format.h>
#include "json.hpp"

#include <algorithm>
#include <cassert>

namespace reml {

namespace {

constexpr std::uint64_t kSelectStream = 0x73656c;
constexpr std::uint64_t kExposureStream = 0x657870;

}  // namespace

DeployedEnsemble::DeployedEnsemble(std::vector<std::shared_ptr<const MlService>> loaded, std::size_t m, std::uint64_t seed)
    : loaded_(std::move(loaded)), m_(m), seed_(seed), counter_(std::make_unique<std::atomic<std::uint64_t>>(0)) {
    if (m_ % 2 == 0) {
        throw InvalidConfig(fmt::format("m={} is even; use m={} or m={} so binary votes cannot tie", m_, m_ - 1, m_ + 1));
    }
    if (m_ < 1 || m_ > loaded_.size()) {
        throw InvalidConfig(fmt::format("m={} must lie in [1, n={}]", m_, loaded_.size()));
    }
}

Rng DeployedEnsemble::draw_rng(std::uint64_t draw_index) const { return Rng(mix_seed(mix_seed(seed_, kSelectStream), draw_index)); }

DeployedEnsemble deploy(const ServiceRepository &repo, std::size_t n, std::size_t m, std::uint64_t seed) {
    const auto t = repo.size();
    if (m % 2 == 0) {
        throw InvalidConfig(fmt::format("m={} is even; use m={} or m={} so binary votes cannot tie", m, m == 0 ? 1 : m - 1, m + 1));
    }
    if (n > t) {
        throw InvalidConfig(fmt::format("cannot load n={} services from a repository of t={}", n, t));
    }
    if (m > n) {
        throw InvalidConfig(fmt::format("m={} exceeds n={}", m, n));
    }
    Rng rng(mix_seed(seed, 0x6c6f6164));
    auto positions = rng.sample_without_replacement(t, n);
    std::sort(positions.begin(), positions.end());
    std::vector<std::shared_ptr<const MlService>> loaded;
    loaded.reserve(n);
    for (const auto p : positions) {
        loaded.push_back(repo.services[p]);
    }
    return DeployedEnsemble(std::move(loaded), m, seed);
}

std::vector<std::size_t> select_subset(const DeployedEnsemble &ens, Rng &rng) {
    return rng.sample_without_replacement(ens.n(), ens.m());
}

PredictionRecord vote_with(const DeployedEnsemble &ens, std::uint64_t draw_index, std::uint64_t input_id,
                           const SlotPredictor &predict) {
    auto rng = ens.draw_rng(draw_index);
    const auto subset = select_subset(ens, rng);
    PredictionRecord rec;
    rec.input_id = input_id;
    rec.counter = draw_index;
    rec.selected.reserve(subset.size());
    rec.votes.reserve(subset.size());
    for (std::size_t slot = 0; slot < subset.size(); ++slot) {
        rec.selected.push_back(ens.loaded()[subset[slot]]->id);
        rec.votes.push_back(predict(subset[slot], slot));
    }
    const auto winner = boyer_moore_majority(std::span<const Label>(rec.votes));
    // odd m with binary labels always has a strict majority
    assert(winner.has_value());
    rec.final_label = winner.value_or(kAttack);
    return rec;
}

PredictionRecord ensemble_predict_at(const DeployedEnsemble &ens, std::span<const double> x, std::uint64_t draw_index,
                                     std::uint64_t input_id) {
    return vote_with(ens, draw_index, input_id,
                     [&](std::size_t position, std::size_t) { return service_predict(*ens.loaded()[position], x); });
}

PredictionRecord ensemble_predict(const DeployedEnsemble &ens, std::span<const double> x, std::uint64_t input_id) {
    return ensemble_predict_at(ens, x, ens.next_draw(), input_id);
}

PredictionRecord ensemble_predict_exposed(const DeployedEnsemble &ens, std::span<const double> clean,
                                          std::span<const double> adversarial, std::size_t exposed, std::uint64_t draw_index,
                                          std::uint64_t input_id) {
    if (clean.size() != adversarial.size()) {
        throw DimensionMismatch("ensemble_predict_exposed", clean.size(), adversarial.size());
    }
    Rng rng(mix_seed(mix_seed(ens.seed(), kExposureStream), draw_index));
    std::vector<bool> slot_exposed(ens.m(), false);
    for (const auto slot : rng.sample_without_replacement(ens.m(), exposed)) {
        slot_exposed[slot] = true;
    }
    return vote_with(ens, draw_index, input_id, [&](std::size_t position, std::size_t slot) {
        return service_predict(*ens.loaded()[position], slot_exposed[slot] ? adversarial : clean);
    });
}

PredictionLog::PredictionLog(const std::filesystem::path &path) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    out_.open(path, std::ios::app);
    if (!out_) {
        throw Error(ErrorKind::runtime, fmt::format("cannot open prediction log '{}'", path.string()));
    }
}

std::string PredictionLog::to_json_line(const PredictionRecord &rec) {
    nlohmann::json j;
    j["type"] = "prediction";
    j["input_id"] = rec.input_id;
    j["draw"] = rec.counter;
    j["selected"] = rec.selected;
    std::vector<int> votes(rec.votes.begin(), rec.votes.end());
    j["votes"] = votes;
    j["final"] = static_cast<int>(rec.final_label);
    return j.dump();
}

void PredictionLog::append(const PredictionRecord &rec) { append_event(to_json_line(rec)); }

void PredictionLog::append_event(const std::string &json_line) {
    std::lock_guard lock(mutex_);
    out_ << json_line << '\n';
    out_.flush();
}

}  // namespace reml
