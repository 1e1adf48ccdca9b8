#pragma once

#include "reml/dagt.hpp"
#include "reml/random.hpp"

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace reml {

/// Boyer-Moore majority vote: candidate pass, then a verification pass.
/// Returns the element occurring more than len/2 times, or nullopt.
template <class T>
std::optional<T> boyer_moore_majority(std::span<const T> votes) {
    if (votes.empty()) {
        throw DataError("boyer_moore_majority: empty vote sequence");
    }
    T candidate = votes.front();
    std::size_t count = 0;
    for (const auto &v : votes) {
        if (count == 0) {
            candidate = v;
            count = 1;
        } else if (v == candidate) {
            ++count;
        } else {
            --count;
        }
    }
    std::size_t occurrences = 0;
    for (const auto &v : votes) {
        occurrences += v == candidate ? 1 : 0;
    }
    if (2 * occurrences > votes.size()) {
        return candidate;
    }
    return std::nullopt;
}

/// n services loaded from the repository, voting m at a time.
class DeployedEnsemble {
public:
    DeployedEnsemble(std::vector<std::shared_ptr<const MlService>> loaded, std::size_t m, std::uint64_t seed);

    const std::vector<std::shared_ptr<const MlService>> &loaded() const noexcept { return loaded_; }
    std::size_t n() const noexcept { return loaded_.size(); }
    std::size_t m() const noexcept { return m_; }
    std::uint64_t seed() const noexcept { return seed_; }

    /// Each call returns a unique index; safe to call concurrently.
    std::uint64_t next_draw() const noexcept { return counter_->fetch_add(1, std::memory_order_relaxed); }
    /// Counter-based stream: the draw rng for a given index.
    Rng draw_rng(std::uint64_t draw_index) const;

private:
    std::vector<std::shared_ptr<const MlService>> loaded_;
    std::size_t m_;
    std::uint64_t seed_;
    std::unique_ptr<std::atomic<std::uint64_t>> counter_;
};

DeployedEnsemble deploy(const ServiceRepository &repo, std::size_t n, std::size_t m, std::uint64_t seed);

/// Uniform m-subset of loaded positions, in draw order.
std::vector<std::size_t> select_subset(const DeployedEnsemble &ens, Rng &rng);

struct PredictionRecord {
    std::uint64_t input_id = 0;
    std::uint64_t counter = 0;  // draw index
    std::vector<std::string> selected;
    std::vector<Label> votes;
    Label final_label = kBenign;
};

/// Label the loaded service at `position` assigns; `slot` is its place in the selection.
using SlotPredictor = std::function<Label(std::size_t position, std::size_t slot)>;

PredictionRecord vote_with(const DeployedEnsemble &ens, std::uint64_t draw_index, std::uint64_t input_id,
                           const SlotPredictor &predict);

PredictionRecord ensemble_predict_at(const DeployedEnsemble &ens, std::span<const double> x, std::uint64_t draw_index,
                                     std::uint64_t input_id);
/// Draws the next index from the ensemble's counter.
PredictionRecord ensemble_predict(const DeployedEnsemble &ens, std::span<const double> x, std::uint64_t input_id);

/// Threat-model evaluation: `exposed` of the m selected services (chosen from
/// the same draw) receive `adversarial`, the rest receive `clean`.
PredictionRecord ensemble_predict_exposed(const DeployedEnsemble &ens, std::span<const double> clean,
                                          std::span<const double> adversarial, std::size_t exposed, std::uint64_t draw_index,
                                          std::uint64_t input_id);

/// Append-only JSON-lines log of predictions and drift events.
class PredictionLog {
public:
    explicit PredictionLog(const std::filesystem::path &path);

    void append(const PredictionRecord &rec);
    void append_event(const std::string &json_line);

    static std::string to_json_line(const PredictionRecord &rec);

private:
    std::mutex mutex_;
    std::ofstream out_;
};

}  // namespace reml
