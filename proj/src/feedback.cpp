#include "reml/feedback.hpp"
#include "reml/eval.hpp"

#include <fmt/format.h>
#include "json.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

namespace reml {

std::string_view to_string(DriftStatus s) {
    switch (s) {
    case DriftStatus::stable:
        return "stable";
    case DriftStatus::warning:
        return "warning";
    case DriftStatus::drift:
        return "drift";
    }
    return "?";
}

void DriftParams::validate() const {
    if (!(warn_k > 0.0) || !(drift_k > warn_k)) {
        throw InvalidConfig(fmt::format("drift multipliers need 0 < warn ({}) < drift ({})", warn_k, drift_k));
    }
    if (min_samples == 0) {
        throw InvalidConfig("drift detector needs at least one sample before arming");
    }
    if (!(prior >= 0.0)) {
        throw InvalidConfig(fmt::format("drift prior must be non-negative (got {})", prior));
    }
}

DriftDetector::DriftDetector(DriftParams params) : params_(params) {
    params_.validate();
    reset();
}

void DriftDetector::reset() {
    n_ = 0;
    errors_ = 0;
    p_ = 0.0;
    s_ = 0.0;
    p_min_ = std::numeric_limits<double>::infinity();
    s_min_ = std::numeric_limits<double>::infinity();
    status_ = DriftStatus::stable;
}

DriftStatus DriftDetector::update(bool prediction_correct) {
    ++n_;
    errors_ += prediction_correct ? 0 : 1;
    const double n = static_cast<double>(n_);
    p_ = (static_cast<double>(errors_) + params_.prior) / (n + 2.0 * params_.prior);
    s_ = std::sqrt(p_ * (1.0 - p_) / n);
    if (n_ < params_.min_samples) {
        return status_;
    }
    if (p_ + s_ < p_min_ + s_min_) {
        p_min_ = p_;
        s_min_ = s_;
    }
    if (status_ == DriftStatus::drift) {
        return status_;
    }
    if (p_ + s_ > p_min_ + params_.drift_k * s_min_) {
        status_ = DriftStatus::drift;
    } else if (p_ + s_ > p_min_ + params_.warn_k * s_min_) {
        status_ = DriftStatus::warning;
    } else {
        status_ = DriftStatus::stable;
    }
    return status_;
}

DriftStatus drift_update(DriftDetector &det, bool prediction_correct) { return det.update(prediction_correct); }

std::string_view to_string(RefreshMode m) { return m == RefreshMode::rebuild ? "rebuild" : "reselect"; }

RefreshMode parse_refresh_mode(std::string_view s) {
    if (s == "rebuild") {
        return RefreshMode::rebuild;
    }
    if (s == "reselect") {
        return RefreshMode::reselect;
    }
    throw InvalidConfig(fmt::format("unknown refresh mode '{}' (expected rebuild or reselect)", s));
}

FeedbackLoop::FeedbackLoop(Dataset original_train, RepositoryBuilder builder, std::uint64_t seed, DriftParams params,
                           RefreshMode mode, PredictionLog *log)
    : original_(std::move(original_train)), builder_(std::move(builder)), seed_(seed), mode_(mode), log_(log), det_(params) {
    if (!builder_ && mode_ == RefreshMode::rebuild) {
        throw InvalidConfig("feedback loop in rebuild mode needs a repository builder");
    }
}

DriftStatus FeedbackLoop::observe(bool prediction_correct) {
    const auto before = det_.status();
    const auto after = det_.update(prediction_correct);
    const auto sample = observed_++;
    if (log_ != nullptr && after != before && after != DriftStatus::stable) {
        nlohmann::json j;
        j["type"] = "drift";
        j["sample"] = sample;
        j["status"] = to_string(after);
        j["n"] = det_.samples();
        j["errors"] = det_.errors();
        j["p"] = det_.p();
        j["s"] = det_.s();
        j["p_min"] = det_.p_min();
        j["s_min"] = det_.s_min();
        log_->append_event(j.dump());
    }
    return after;
}

RefreshOutcome FeedbackLoop::on_drift(const Dataset &latest_window) {
    RefreshOutcome out;
    if (latest_window.labels.size() != latest_window.rows() || latest_window.rows() == 0) {
        const auto msg = fmt::format("drift refresh deferred: window of {} rows has {} labels", latest_window.rows(),
                                     latest_window.labels.size());
        std::fprintf(stderr, "warning: %s\n", msg.c_str());
        if (log_ != nullptr) {
            log_->append_event(nlohmann::json{{"type", "warning"}, {"message", msg}}.dump());
        }
        out.deferred = true;
        return out;
    }
    ++refreshes_;
    out.new_seed = mix_seed(seed_, 0x72656672 + refreshes_);
    if (mode_ == RefreshMode::rebuild) {
        out.repository = builder_(concat(original_, latest_window), out.new_seed);
    }
    det_.reset();
    if (log_ != nullptr) {
        log_->append_event(nlohmann::json{{"type", "refresh"},
                                          {"mode", to_string(mode_)},
                                          {"window_rows", latest_window.rows()},
                                          {"new_seed", out.new_seed}}
                               .dump());
    }
    return out;
}

StreamResult replay_stream(const Dataset &stream, ServiceRepository repo, FeedbackLoop &loop, const StreamConfig &cfg,
                           PredictionLog *log, const std::function<void(std::size_t, const DriftDetector &)> &on_event) {
    auto ens = deploy(repo, cfg.n, cfg.m, cfg.deploy_seed);
    std::vector<std::size_t> drift_at;
    std::vector<std::size_t> window_rows;
    bool collecting = false;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < stream.rows(); ++i) {
        const auto rec = ensemble_predict_at(ens, stream.row(i), i, i);
        if (log != nullptr) {
            log->append(rec);
        }
        const bool ok = rec.final_label == stream.labels[i];
        correct += ok ? 1 : 0;
        if (collecting) {
            window_rows.push_back(i);
            if (window_rows.size() >= cfg.window) {
                const auto outcome = loop.on_drift(stream.subset(window_rows));
                if (!outcome.deferred) {
                    if (outcome.repository) {
                        repo = *outcome.repository;
                    }
                    ens = deploy(repo, cfg.n, cfg.m, mix_seed(cfg.deploy_seed, outcome.new_seed));
                    collecting = false;
                    window_rows.clear();
                }
            }
            continue;
        }
        if (loop.observe(ok) == DriftStatus::drift) {
            drift_at.push_back(i);
            if (on_event) {
                on_event(i, loop.detector());
            }
            collecting = true;
        }
    }
    return StreamResult{std::move(drift_at), loop.refreshes(), correct, std::move(repo), std::move(ens)};
}

double ensemble_accuracy(const DeployedEnsemble &ens, const Dataset &ds) {
    return confusion(predict_ensemble(ens, ds), ds.labels).accuracy();
}

}  // namespace reml
