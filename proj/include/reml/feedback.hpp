#pragma once

#include "reml/dagt.hpp"
#include "reml/data.hpp"
#include "reml/mtd.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string_view>
#include <vector>

namespace reml {

enum class DriftStatus : std::uint8_t { stable = 0, warning = 1, drift = 2 };

std::string_view to_string(DriftStatus s);

struct DriftParams {
    double warn_k = 2.0;
    double drift_k = 3.0;
    std::size_t min_samples = 30;
    // Beta(prior, prior) pseudo-counts on the error rate.
    double prior = 20.0;

    void validate() const;
    friend bool operator==(const DriftParams &, const DriftParams &) = default;
};

/// DDM-style error-rate monitor. Drift latches until reset().
class DriftDetector {
public:
    explicit DriftDetector(DriftParams params = {});

    DriftStatus update(bool prediction_correct);
    void reset();

    DriftStatus status() const noexcept { return status_; }
    std::size_t samples() const noexcept { return n_; }
    std::size_t errors() const noexcept { return errors_; }
    double p() const noexcept { return p_; }
    double s() const noexcept { return s_; }
    double p_min() const noexcept { return p_min_; }
    double s_min() const noexcept { return s_min_; }
    const DriftParams &params() const noexcept { return params_; }

    friend bool operator==(const DriftDetector &, const DriftDetector &) = default;

private:
    DriftParams params_;
    std::size_t n_ = 0;
    std::size_t errors_ = 0;
    double p_ = 0.0;
    double s_ = 0.0;
    double p_min_ = 0.0;
    double s_min_ = 0.0;
    DriftStatus status_ = DriftStatus::stable;
};

DriftStatus drift_update(DriftDetector &det, bool prediction_correct);

/// What a drift signal refreshes.
enum class RefreshMode : std::uint8_t {
    rebuild = 0,   // full repository rebuild on original train plus the window
    reselect = 1,  // keep the repository, redraw the loaded n-subset
};

std::string_view to_string(RefreshMode m);
RefreshMode parse_refresh_mode(std::string_view s);

using RepositoryBuilder = std::function<ServiceRepository(const Dataset &train, std::uint64_t master_seed)>;

struct RefreshOutcome {
    bool deferred = false;
    std::uint64_t new_seed = 0;
    std::optional<ServiceRepository> repository;  // set on rebuild
};

class FeedbackLoop {
public:
    FeedbackLoop(Dataset original_train, RepositoryBuilder builder, std::uint64_t seed, DriftParams params = {},
                 RefreshMode mode = RefreshMode::rebuild, PredictionLog *log = nullptr);

    /// Feeds one outcome; drift transitions are appended to the log.
    DriftStatus observe(bool prediction_correct);
    /// An unlabeled window defers the refresh and leaves the detector latched.
    RefreshOutcome on_drift(const Dataset &latest_window);

    const DriftDetector &detector() const noexcept { return det_; }
    std::size_t refreshes() const noexcept { return refreshes_; }
    std::size_t observed() const noexcept { return observed_; }

private:
    Dataset original_;
    RepositoryBuilder builder_;
    std::uint64_t seed_;
    RefreshMode mode_;
    PredictionLog *log_;
    DriftDetector det_;
    std::size_t refreshes_ = 0;
    std::size_t observed_ = 0;
};

struct StreamConfig {
    std::size_t n = 7;
    std::size_t m = 5;
    std::uint64_t deploy_seed = 0;
    std::size_t window = 400;  // labeled rows gathered after drift before refreshing
};

struct StreamResult {
    std::vector<std::size_t> drift_at;  // stream indices where drift was signaled
    std::size_t refreshes = 0;
    std::size_t correct = 0;
    ServiceRepository repository;  // as of the end of the stream
    DeployedEnsemble ensemble;
};

/// Replays a labeled stream through the ensemble and the feedback loop;
/// `on_event` (optional) is told of each drift signal.
StreamResult replay_stream(const Dataset &stream, ServiceRepository repo, FeedbackLoop &loop, const StreamConfig &cfg,
                           PredictionLog *log = nullptr,
                           const std::function<void(std::size_t, const DriftDetector &)> &on_event = {});

double ensemble_accuracy(const DeployedEnsemble &ens, const Dataset &ds);

}  // namespace reml
