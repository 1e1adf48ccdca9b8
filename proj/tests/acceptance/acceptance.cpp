// One line per acceptance criterion: PASS, FAIL or SKIP, with the measured
// values. Exits nonzero when any criterion fails.

#include "../oracles.hpp"

#include "reml/pipeline.hpp"
#include "reml/quant.hpp"

#include <fmt/format.h>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <sys/wait.h>
#include <unistd.h>

namespace {

using namespace reml;
namespace fs = std::filesystem;

enum class Verdict { pass, fail, skip };

struct Outcome {
    Verdict verdict = Verdict::fail;
    std::string detail;
};

Outcome judge(bool ok, std::string detail) { return {ok ? Verdict::pass : Verdict::fail, std::move(detail)}; }

class ScratchDir {
public:
    explicit ScratchDir(const std::string &tag) {
        static int counter = 0;
        path_ = fs::temp_directory_path() / fmt::format("reml_accept_{}_{}_{}", tag, ::getpid(), counter++);
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~ScratchDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    ScratchDir(const ScratchDir &) = delete;
    ScratchDir &operator=(const ScratchDir &) = delete;
    const fs::path &path() const noexcept { return path_; }

private:
    fs::path path_;
};

std::string slurp(const fs::path &p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Split normalized_split(std::size_t rows, std::size_t d, double sep, double noise, std::uint64_t seed) {
    const auto ds = synth_icslike(rows, d, sep, noise, seed);
    auto split = stratified_split(ds, 0.8, mix_seed(seed, 1));
    const auto nz = fit_normalizer(split.train);
    split.train = apply_normalizer(nz, split.train);
    split.test = apply_normalizer(nz, split.test);
    return split;
}

Matrix uniform_matrix(Rng &rng, std::size_t rows, std::size_t cols) {
    Matrix m(rows, cols);
    for (auto &v : m.data()) {
        v = rng.uniform();
    }
    return m;
}

double f1_of(const std::vector<Label> &pred, const Dataset &ds) { return metrics(confusion(pred, ds.labels)).f1; }

Outcome check_gradients() {
    Rng rng(2024);
    const std::array<Activation, 4> acts{Activation::linear, Activation::relu, Activation::tanh, Activation::sigmoid};
    double ae_worst = 0.0;
    constexpr int kTrials = 24;
    for (int trial = 0; trial < kTrials; ++trial) {
        const std::size_t d = 2 + rng.index(7);
        const std::size_t c = 1 + rng.index(d - 1);
        const std::size_t h = c + rng.index(4);
        auto ae = init_autoencoder(AeConfig{d, h, c, acts[static_cast<std::size_t>(trial) % 4]}, rng.next());
        oracle::jitter_biases(ae.network(), rng.next());
        const auto batch = uniform_matrix(rng, 1 + rng.index(5), d);
        ae_worst = std::max(ae_worst, oracle::autoencoder_gradient_error(ae, batch));
    }
    double sur_worst = 0.0;
    for (int trial = 0; trial < kTrials; ++trial) {
        const std::size_t d = 2 + rng.index(8);
        const std::size_t h = 1 + rng.index(6);
        const std::array<std::size_t, 3> widths{d, h, 2};
        const std::array<Activation, 2> sur_acts{acts[1 + static_cast<std::size_t>(trial) % 3], Activation::linear};
        auto net = Mlp::glorot(widths, sur_acts, rng.next());
        oracle::jitter_biases(net, rng.next());
        const Surrogate s(std::move(net));
        const auto x = uniform_matrix(rng, 1 + rng.index(6), d);
        std::vector<Label> y(x.rows());
        for (auto &label : y) {
            label = static_cast<Label>(rng.index(2));
        }
        sur_worst = std::max(sur_worst, oracle::surrogate_gradient_error(s, x, y));
    }
    return judge(ae_worst < 1e-4 && sur_worst < 1e-4,
                 fmt::format("max rel err autoencoder {:.2e}, surrogate {:.2e} over {} trials each (tol 1e-4)", ae_worst,
                             sur_worst, kTrials));
}

Outcome check_voting_oracle() {
    std::size_t sequences = 0;
    std::size_t mismatches = 0;
    for (std::size_t len = 1; len <= 12; ++len) {
        for (std::uint32_t bits = 0; bits < (1u << len); ++bits) {
            std::vector<Label> votes(len);
            for (std::size_t i = 0; i < len; ++i) {
                votes[i] = static_cast<Label>((bits >> i) & 1u);
            }
            const std::span<const Label> v(votes);
            mismatches += boyer_moore_majority(v) == oracle::counting_majority(v) ? 0 : 1;
            ++sequences;
        }
    }
    return judge(mismatches == 0, fmt::format("{} sequences, {} mismatches", sequences, mismatches));
}

// Exact equality needs every honest service to be right on the probe: one
// honest error plus two corrupted voters is a wrong majority. The probe is
// therefore widely separated, and honest errors are reported alongside.
Outcome check_majority_resilience() {
    const auto split = normalized_split(2500, 16, 12.0, 0.0, 303);
    Dataset probe = split.test;
    std::vector<std::size_t> first(500);
    for (std::size_t i = 0; i < first.size(); ++i) {
        first[i] = i;
    }
    probe = probe.subset(first);

    const auto repo = build_repository(split.train, 9, DiversificationPolicy{}, 31);
    const auto ens = deploy(repo, 7, 5, 32);
    // per-row, per-position honest labels
    std::vector<std::vector<Label>> honest(probe.rows(), std::vector<Label>(ens.n()));
    std::size_t honest_errors = 0;
    for (std::size_t r = 0; r < probe.rows(); ++r) {
        for (std::size_t p = 0; p < ens.n(); ++p) {
            honest[r][p] = service_predict(*ens.loaded()[p], probe.row(r));
            honest_errors += honest[r][p] != probe.labels[r] ? 1 : 0;
        }
    }
    const auto accuracy = [&](const std::function<bool(std::size_t)> &corrupt) {
        std::size_t ok = 0;
        for (std::size_t r = 0; r < probe.rows(); ++r) {
            const auto rec = vote_with(ens, r, r, [&](std::size_t pos, std::size_t) {
                return corrupt(pos) ? static_cast<Label>(1 - probe.labels[r]) : honest[r][pos];
            });
            ok += rec.final_label == probe.labels[r] ? 1 : 0;
        }
        return static_cast<double>(ok) / static_cast<double>(probe.rows());
    };
    const double clean = accuracy([](std::size_t) { return false; });
    std::size_t pairs = 0;
    std::size_t differing = 0;
    for (std::size_t a = 0; a < ens.n(); ++a) {
        for (std::size_t b = a + 1; b < ens.n(); ++b) {
            ++pairs;
            differing += accuracy([&](std::size_t pos) { return pos == a || pos == b; }) == clean ? 0 : 1;
        }
    }
    return judge(differing == 0, fmt::format("clean accuracy {:.4f}; {} of {} corrupted pairs differ; honest service errors {}",
                                             clean, differing, pairs, honest_errors));
}

Outcome check_quantization() {
    const auto split = normalized_split(2000, 16, 1.5, 0.02, 404);
    const DiversificationPolicy policy;
    const auto cfg = policy.default_config(16);
    const std::uint64_t seed = 41;
    const auto q = build_service(split.train, cfg, policy.rf, policy.tc, seed, EncoderMode::quantized);
    const auto f = build_service(split.train, cfg, policy.rf, policy.tc, seed, EncoderMode::float_path);
    std::vector<Label> qp;
    std::vector<Label> fp;
    for (std::size_t r = 0; r < split.test.rows(); ++r) {
        qp.push_back(service_predict(q, split.test.row(r)));
        fp.push_back(service_predict(f, split.test.row(r)));
    }
    const double qf1 = f1_of(qp, split.test);
    const double ff1 = f1_of(fp, split.test);

    // the same trained autoencoder, serialized both ways
    const auto seeds = ServiceSeeds::derive(seed);
    auto tc = policy.tc;
    tc.seed = seeds.ae_train;
    const auto ae = train_autoencoder(init_autoencoder(cfg, seeds.ae_init), split.train.features, tc).model;
    const auto qbytes = serialize(compress_encoder(ae, split.train.features)).size();
    const auto fbytes = serialize_float_encoder(ae).size();
    const double ratio = static_cast<double>(qbytes) / static_cast<double>(fbytes);
    return judge(ratio <= 0.35 && std::abs(qf1 - ff1) <= 0.05,
                 fmt::format("size ratio {:.3f} ({} / {} bytes, tol 0.35); F1 int8 {:.4f} vs float {:.4f}, |diff| {:.4f} (tol 0.05)",
                             ratio, qbytes, fbytes, qf1, ff1, std::abs(qf1 - ff1)));
}

Outcome check_jsma_contract() {
    const std::size_t d = 16;
    const SynthGenerator gen(d, 1.5, 0.02, 505);
    const auto train_raw = gen.sample(2000, 1);
    const auto nz = fit_normalizer(train_raw);
    const auto train = apply_normalizer(nz, train_raw);
    TrainConfig tc;
    tc.epochs = 60;
    tc.learning_rate = 3e-3;
    tc.seed = 7;
    const auto s = train_classifier(train.features, train.labels, 32, tc);

    // 1000 held-out attack rows
    const auto pool = apply_normalizer(nz, gen.sample(3000, 2));
    std::vector<std::size_t> attack_rows;
    for (std::size_t r = 0; r < pool.rows() && attack_rows.size() < 1000; ++r) {
        if (pool.labels[r] == kAttack) {
            attack_rows.push_back(r);
        }
    }
    const auto rows = pool.subset(attack_rows);
    const JsmaParams p;
    const auto adv = craft_adversarial_testset(s, rows, p);
    const auto budget = p.max_features(d);
    std::size_t over_budget = 0;
    std::size_t out_of_range = 0;
    std::size_t untouched_changed = 0;
    std::size_t max_changed = 0;
    for (std::size_t r = 0; r < rows.rows(); ++r) {
        std::size_t differing = 0;
        for (std::size_t j = 0; j < d; ++j) {
            const double v = adv.data.features(r, j);
            out_of_range += (v < 0.0 || v > 1.0) ? 1 : 0;
            differing += v != rows.features(r, j) ? 1 : 0;
        }
        over_budget += adv.meta[r].changed_count > budget ? 1 : 0;
        // features outside the changed set must keep their exact bits
        untouched_changed += differing > adv.meta[r].changed_count ? 1 : 0;
        max_changed = std::max(max_changed, adv.meta[r].changed_count);
    }
    const double success = adv.success_rate();
    return judge(rows.rows() == 1000 && over_budget == 0 && out_of_range == 0 && untouched_changed == 0 && success >= 0.5,
                 fmt::format("{} rows; max changed {} (budget {}); out of range {}; untouched altered {}; surrogate success {:.3f} "
                             "(tol 0.5)",
                             rows.rows(), max_changed, budget, out_of_range, untouched_changed, success));
}

const auto kQuiet = [](const std::string &) {};

std::string ordering_detail(const EvalReport &r) {
    const auto f1 = [&](Method m, TestSet s) { return r.at(m, s).m.f1; };
    return fmt::format("F1 base {:.4f}/{:.4f}, rml {:.4f}/{:.4f}, reml {:.4f}/{:.4f} (clean/adversarial)",
                       f1(Method::base, TestSet::clean), f1(Method::base, TestSet::adversarial), f1(Method::rml, TestSet::clean),
                       f1(Method::rml, TestSet::adversarial), f1(Method::reml, TestSet::clean),
                       f1(Method::reml, TestSet::adversarial));
}

struct OrderingChecks {
    bool clean_floor = false;
    bool drop = false;
    bool gain = false;
    bool gap = false;
};

OrderingChecks ordering(const EvalReport &r) {
    const auto f1 = [&](Method m, TestSet s) { return r.at(m, s).m.f1; };
    OrderingChecks c;
    c.clean_floor = f1(Method::base, TestSet::clean) >= 0.90;
    c.drop = f1(Method::base, TestSet::clean) - f1(Method::base, TestSet::adversarial) >= 0.15;
    c.gain = f1(Method::reml, TestSet::adversarial) - f1(Method::base, TestSet::adversarial) >= 0.10;
    c.gap = std::abs(f1(Method::reml, TestSet::clean) - f1(Method::rml, TestSet::clean)) <= 0.05;
    return c;
}

Outcome check_reproduction() {
    ScratchDir dir("repro");
    RunConfig cfg;
    cfg.out = dir.path().string();
    const auto report = cmd_evaluate(cfg, true, kQuiet);
    const auto c = ordering(report);
    return judge(c.clean_floor && c.drop && c.gain && c.gap,
                 fmt::format("{}; (a) {} (b) {} (c) {} (d) {}", ordering_detail(report), c.clean_floor ? "ok" : "FAIL",
                             c.drop ? "ok" : "FAIL", c.gain ? "ok" : "FAIL", c.gap ? "ok" : "FAIL"));
}

int run_cli(const std::string &args) {
    const std::string cmd = fmt::format("env -u REML_OUTPUT_ROOT \"{}\" {} >/dev/null 2>&1", REML_CLI, args);
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome check_determinism() {
    ScratchDir a("det_a");
    ScratchDir b("det_b");
    const int ea = run_cli(fmt::format("evaluate --all --seed 42 --out \"{}\"", a.path().string()));
    const int eb = run_cli(fmt::format("evaluate --all --seed 42 --out \"{}\"", b.path().string()));
    if (ea != 0 || eb != 0) {
        return judge(false, fmt::format("cli exit codes {} and {}", ea, eb));
    }
    std::size_t files = 0;
    std::size_t differing = 0;
    for (const auto &entry : fs::directory_iterator(a.path() / "report")) {
        ++files;
        const auto other = b.path() / "report" / entry.path().filename();
        differing += (!fs::exists(other) || slurp(entry.path()) != slurp(other)) ? 1 : 0;
    }
    std::size_t files_b = 0;
    for ([[maybe_unused]] const auto &entry : fs::directory_iterator(b.path() / "report")) {
        ++files_b;
    }
    return judge(files == 4 && files_b == files && differing == 0,
                 fmt::format("{} report files, {} differ", files, differing + (files_b != files ? 1 : 0)));
}

Outcome check_uniformity() {
    ServiceRepository repo;
    for (std::size_t i = 0; i < 5; ++i) {
        auto svc = std::make_shared<MlService>();
        svc->id = fmt::format("svc{}", i);
        repo.services.push_back(std::move(svc));
    }
    const auto ens = deploy(repo, 5, 3, 808);
    std::map<std::uint32_t, std::size_t> by_mask;
    for (std::uint64_t draw = 0; draw < 5000; ++draw) {
        auto rng = ens.draw_rng(draw);
        std::uint32_t mask = 0;
        for (const auto pos : select_subset(ens, rng)) {
            mask |= 1u << pos;
        }
        ++by_mask[mask];
    }
    std::vector<std::size_t> counts;
    for (const auto &[mask, count] : by_mask) {
        counts.push_back(count);
    }
    const double stat = oracle::chi_square_uniform(counts);
    const double p = oracle::chi_square_pvalue(stat, 9.0);
    return judge(counts.size() == 10 && p > 0.01,
                 fmt::format("{} distinct subsets, chi2 {:.3f} on 9 dof, p {:.4f} (tol > 0.01)", counts.size(), stat, p));
}

Outcome check_drift_loop() {
    RunConfig cfg;
    const auto r = run_drift_demo(cfg);
    const bool detected = !r.drift_at.empty() && r.drift_at.front() >= r.shift_index && r.drift_at.front() < r.shift_index + 500;
    const double gain = r.refreshed_post_accuracy - r.stale_post_accuracy;
    return judge(detected && r.refreshes >= 1 && gain >= 0.10,
                 fmt::format("shift at {}, first drift {}, {} refresh(es); post-shift accuracy stale {:.4f} -> refreshed {:.4f} "
                             "(gain {:.4f}, tol 0.10)",
                             r.shift_index, r.drift_at.empty() ? std::string("none") : std::to_string(r.drift_at.front()),
                             r.refreshes, r.stale_post_accuracy, r.refreshed_post_accuracy, gain));
}

/// A directory of csv files is concatenated in name order (one header kept).
fs::path real_csv_path(const fs::path &given, const fs::path &scratch) {
    if (!fs::is_directory(given)) {
        return given;
    }
    std::vector<fs::path> parts;
    for (const auto &entry : fs::directory_iterator(given)) {
        if (entry.path().extension() == ".csv") {
            parts.push_back(entry.path());
        }
    }
    std::sort(parts.begin(), parts.end());
    const auto joined = scratch / "joined.csv";
    std::ofstream out(joined, std::ios::binary);
    bool header_written = false;
    for (const auto &p : parts) {
        std::ifstream in(p);
        std::string line;
        if (std::getline(in, line) && !header_written) {
            out << line << '\n';
            header_written = true;
        }
        while (std::getline(in, line)) {
            out << line << '\n';
        }
    }
    return joined;
}

Outcome check_real_data() {
    const char *env = std::getenv("REML_REAL_CSV");
    if (env == nullptr || *env == '\0') {
        return {Verdict::skip, "set REML_REAL_CSV to the power-system csv file or directory"};
    }
    ScratchDir dir("real");
    RunConfig cfg;
    cfg.csv = real_csv_path(env, dir.path()).string();
    cfg.label_column = "marker";
    cfg.label_map = "ics";
    cfg.out = dir.path().string();
    const auto prepared = prepare_data(cfg);
    const auto report = cmd_evaluate(cfg, true, kQuiet);
    const auto c = ordering(report);
    return judge(c.drop && c.gain && c.gap,
                 fmt::format("{} rows read, {} dropped (non-finite); {}; (b) {} (c) {} (d) {}", prepared.total_rows,
                             prepared.dropped_rows, ordering_detail(report), c.drop ? "ok" : "FAIL", c.gain ? "ok" : "FAIL",
                             c.gap ? "ok" : "FAIL"));
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"gradient correctness", check_gradients},
        {"voting oracle", check_voting_oracle},
        {"majority resilience", check_majority_resilience},
        {"quantization contract", check_quantization},
        {"jsma budget and range", check_jsma_contract},
        {"desk-scale reproduction", check_reproduction},
        {"determinism", check_determinism},
        {"mtd uniformity", check_uniformity},
        {"drift loop", check_drift_loop},
        {"real dataset", check_real_data},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const auto start = std::chrono::steady_clock::now();
        Outcome out;
        try {
            out = criteria[i].second();
        } catch (const std::exception &e) {
            out = {Verdict::fail, fmt::format("exception: {}", e.what())};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const char *tag = out.verdict == Verdict::pass ? "PASS" : out.verdict == Verdict::fail ? "FAIL" : "SKIP";
        failures += out.verdict == Verdict::fail ? 1 : 0;
        fmt::print("{} {:2} {}: {} [{:.1f}s]\n", tag, i + 1, criteria[i].first, out.detail, secs);
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
