#pragma once

#include "reml/attack.hpp"
#include "reml/dagt.hpp"
#include "reml/data.hpp"
#include "reml/eval.hpp"
#include "reml/feedback.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace reml {

/// Everything one experiment run needs; every field has a config-file key.
struct RunConfig {
    // data source: a csv path, or the synthetic generator when empty
    std::string csv;
    bool has_header = true;
    std::string label_column = "last";
    std::string label_map = "ics";  // "ics", "identity" or a file path
    std::size_t synth_rows = 2000;
    std::size_t synth_dim = 16;
    double synth_sep = 1.5;
    double synth_noise = 0.02;
    double train_fraction = 0.8;

    RfConfig rf;
    TrainConfig ae_train;
    std::size_t surrogate_hidden = 32;
    std::size_t surrogate_epochs = 60;
    double surrogate_lr = 3e-3;

    std::size_t t = 9;
    std::size_t n = 7;
    std::size_t m = 5;
    JsmaParams jsma;
    Exposure exposure = Exposure::minority;

    RefreshMode refresh = RefreshMode::rebuild;
    std::size_t stream_pre = 1000;
    std::size_t stream_post = 1000;
    std::size_t stream_window = 400;

    std::string out = "reml_out";
    std::uint64_t seed = 42;

    /// All key names, in canonical order.
    static const std::vector<std::string> &keys();
    void set(std::string_view key, std::string_view value);
    std::string get(std::string_view key) const;

    /// Checks every nested invariant; throws InvalidConfig.
    void validate() const;
    /// key=value lines for every key except `out`.
    std::string canonical() const;
    std::string manifest_hash() const;
    std::map<std::string, std::string> manifest() const;
    DiversificationPolicy policy() const;
};

/// `key = value` lines; '#' starts a comment; unknown keys are rejected.
void apply_config_text(RunConfig &cfg, std::string_view text, std::string_view source = "<memory>");
void apply_config_file(RunConfig &cfg, const std::filesystem::path &path);

/// Seeds fanned out from the master seed.
struct RunSeeds {
    std::uint64_t synth = 0;
    std::uint64_t split = 0;
    std::uint64_t surrogate = 0;
    std::uint64_t stream = 0;
    ComparisonSeeds comparison;

    static RunSeeds derive(std::uint64_t master);
};

/// Files written by a command; removed on destruction unless committed.
class OutputSet {
public:
    OutputSet() = default;
    OutputSet(const OutputSet &) = delete;
    OutputSet &operator=(const OutputSet &) = delete;
    ~OutputSet();

    void write(const std::filesystem::path &path, std::string_view bytes);
    void adopt(const std::filesystem::path &path);
    void commit() noexcept { committed_ = true; }
    const std::vector<std::filesystem::path> &paths() const noexcept { return paths_; }

private:
    std::vector<std::filesystem::path> paths_;
    bool committed_ = false;
};

/// Artifact layout inside the output directory.
struct RunPaths {
    std::filesystem::path root;

    std::filesystem::path synth_csv() const { return root / "synth.csv"; }
    std::filesystem::path synth_labelmap() const { return root / "synth_labelmap.txt"; }
    std::filesystem::path manifest() const { return root / "manifest.json"; }
    std::filesystem::path train() const { return root / "train.csv"; }
    std::filesystem::path test() const { return root / "test.csv"; }
    std::filesystem::path normalizer() const { return root / "normalizer.json"; }
    std::filesystem::path repository(EncoderMode mode) const {
        return root / (mode == EncoderMode::quantized ? "repository_int8.bin" : "repository_float.bin");
    }
    std::filesystem::path surrogate() const { return root / "surrogate.bin"; }
    std::filesystem::path adversarial() const { return root / "adversarial.csv"; }
    std::filesystem::path adversarial_meta() const { return root / "adversarial_meta.json"; }
    std::filesystem::path report_dir() const { return root / "report"; }
    std::filesystem::path stream_log() const { return root / "stream_log.jsonl"; }
};

/// REML_OUTPUT_ROOT, when set, replaces the configured output directory.
RunPaths resolve_paths(const RunConfig &cfg);

struct Prepared {
    Dataset train;
    Dataset test;
    Normalizer normalizer;
    std::size_t total_rows = 0;
    std::size_t dropped_rows = 0;
};

/// Loads the configured source, binarizes, splits and normalizes.
Prepared prepare_data(const RunConfig &cfg);
Surrogate train_surrogate(const RunConfig &cfg, const Dataset &train);

struct DriftDemoResult {
    std::size_t shift_index = 0;
    std::vector<std::size_t> drift_at;
    std::size_t refreshes = 0;
    double stale_post_accuracy = 0.0;
    double refreshed_post_accuracy = 0.0;
};

/// Stationary synthetic stream followed by a mirrored-attack shift, replayed
/// through the int8 ensemble and the feedback loop. Accuracies are measured
/// on a fresh post-shift sample.
DriftDemoResult run_drift_demo(const RunConfig &cfg, PredictionLog *log = nullptr,
                               const std::function<void(std::size_t, const DriftDetector &)> &on_event = {});

using Reporter = std::function<void(const std::string &)>;

void cmd_gen_data(const RunConfig &cfg, const Reporter &say);
void cmd_prepare(const RunConfig &cfg, const Reporter &say);
void cmd_train_repo(const RunConfig &cfg, bool no_quantize, const Reporter &say);
void cmd_attack(const RunConfig &cfg, const Reporter &say);
/// With `all`, runs prepare, attack and both train-repo variants first.
EvalReport cmd_evaluate(const RunConfig &cfg, bool all, const Reporter &say);
void cmd_demo_stream(const RunConfig &cfg, const Reporter &say);

}  // namespace reml
