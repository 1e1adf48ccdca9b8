#include "reml/pipeline.hpp"
#include "reml/binary_io.hpp"
#include "reml/mtd.hpp"

#include <fmt/format.h>
#include "json.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>

namespace reml {

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::uint64_t parse_u64(std::string_view key, std::string_view v) {
    std::uint64_t out = 0;
    const auto *end = v.data() + v.size();
    const auto [ptr, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc{} || ptr != end || v.empty()) {
        throw InvalidConfig(fmt::format("{}: expected a non-negative integer, got '{}'", key, v));
    }
    return out;
}

std::size_t parse_size(std::string_view key, std::string_view v) { return static_cast<std::size_t>(parse_u64(key, v)); }

double parse_double(std::string_view key, std::string_view v) {
    double out = 0.0;
    const auto *end = v.data() + v.size();
    const auto [ptr, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc{} || ptr != end || v.empty() || !std::isfinite(out)) {
        throw InvalidConfig(fmt::format("{}: expected a finite number, got '{}'", key, v));
    }
    return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
    std::string s(v);
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (s == "true" || s == "1" || s == "yes") {
        return true;
    }
    if (s == "false" || s == "0" || s == "no") {
        return false;
    }
    throw InvalidConfig(fmt::format("{}: expected true or false, got '{}'", key, v));
}

struct KeySpec {
    std::string name;
    std::function<void(RunConfig &, std::string_view)> set;
    std::function<std::string(const RunConfig &)> get;
};

template <class F>
std::function<std::string(const RunConfig &)> show(F f) {
    return [f](const RunConfig &c) { return fmt::format("{}", f(c)); };
}

const std::vector<KeySpec> &key_table() {
    static const std::vector<KeySpec> table{
        {"csv", [](RunConfig &c, std::string_view v) { c.csv = std::string(v); }, show([](const RunConfig &c) { return c.csv; })},
        {"has_header", [](RunConfig &c, std::string_view v) { c.has_header = parse_bool("has_header", v); },
         show([](const RunConfig &c) { return c.has_header; })},
        {"label_column", [](RunConfig &c, std::string_view v) { c.label_column = std::string(v); },
         show([](const RunConfig &c) { return c.label_column; })},
        {"label_map", [](RunConfig &c, std::string_view v) { c.label_map = std::string(v); },
         show([](const RunConfig &c) { return c.label_map; })},
        {"synth_rows", [](RunConfig &c, std::string_view v) { c.synth_rows = parse_size("synth_rows", v); },
         show([](const RunConfig &c) { return c.synth_rows; })},
        {"synth_dim", [](RunConfig &c, std::string_view v) { c.synth_dim = parse_size("synth_dim", v); },
         show([](const RunConfig &c) { return c.synth_dim; })},
        {"synth_sep", [](RunConfig &c, std::string_view v) { c.synth_sep = parse_double("synth_sep", v); },
         show([](const RunConfig &c) { return c.synth_sep; })},
        {"synth_noise", [](RunConfig &c, std::string_view v) { c.synth_noise = parse_double("synth_noise", v); },
         show([](const RunConfig &c) { return c.synth_noise; })},
        {"train_fraction", [](RunConfig &c, std::string_view v) { c.train_fraction = parse_double("train_fraction", v); },
         show([](const RunConfig &c) { return c.train_fraction; })},
        {"rf_trees", [](RunConfig &c, std::string_view v) { c.rf.n_trees = parse_size("rf_trees", v); },
         show([](const RunConfig &c) { return c.rf.n_trees; })},
        {"rf_depth", [](RunConfig &c, std::string_view v) { c.rf.max_depth = parse_size("rf_depth", v); },
         show([](const RunConfig &c) { return c.rf.max_depth; })},
        {"rf_min_split", [](RunConfig &c, std::string_view v) { c.rf.min_samples_split = parse_size("rf_min_split", v); },
         show([](const RunConfig &c) { return c.rf.min_samples_split; })},
        {"rf_mtry", [](RunConfig &c, std::string_view v) { c.rf.mtry = parse_size("rf_mtry", v); },
         show([](const RunConfig &c) { return c.rf.mtry; })},
        {"ae_epochs", [](RunConfig &c, std::string_view v) { c.ae_train.epochs = parse_size("ae_epochs", v); },
         show([](const RunConfig &c) { return c.ae_train.epochs; })},
        {"ae_batch", [](RunConfig &c, std::string_view v) { c.ae_train.batch_size = parse_size("ae_batch", v); },
         show([](const RunConfig &c) { return c.ae_train.batch_size; })},
        {"ae_lr", [](RunConfig &c, std::string_view v) { c.ae_train.learning_rate = parse_double("ae_lr", v); },
         show([](const RunConfig &c) { return c.ae_train.learning_rate; })},
        {"surrogate_hidden", [](RunConfig &c, std::string_view v) { c.surrogate_hidden = parse_size("surrogate_hidden", v); },
         show([](const RunConfig &c) { return c.surrogate_hidden; })},
        {"surrogate_epochs", [](RunConfig &c, std::string_view v) { c.surrogate_epochs = parse_size("surrogate_epochs", v); },
         show([](const RunConfig &c) { return c.surrogate_epochs; })},
        {"surrogate_lr", [](RunConfig &c, std::string_view v) { c.surrogate_lr = parse_double("surrogate_lr", v); },
         show([](const RunConfig &c) { return c.surrogate_lr; })},
        {"t", [](RunConfig &c, std::string_view v) { c.t = parse_size("t", v); }, show([](const RunConfig &c) { return c.t; })},
        {"n", [](RunConfig &c, std::string_view v) { c.n = parse_size("n", v); }, show([](const RunConfig &c) { return c.n; })},
        {"m", [](RunConfig &c, std::string_view v) { c.m = parse_size("m", v); }, show([](const RunConfig &c) { return c.m; })},
        {"jsma_theta", [](RunConfig &c, std::string_view v) { c.jsma.theta = parse_double("jsma_theta", v); },
         show([](const RunConfig &c) { return c.jsma.theta; })},
        {"jsma_gamma", [](RunConfig &c, std::string_view v) { c.jsma.gamma = parse_double("jsma_gamma", v); },
         show([](const RunConfig &c) { return c.jsma.gamma; })},
        {"exposure", [](RunConfig &c, std::string_view v) { c.exposure = parse_exposure(v); },
         show([](const RunConfig &c) { return to_string(c.exposure); })},
        {"refresh", [](RunConfig &c, std::string_view v) { c.refresh = parse_refresh_mode(v); },
         show([](const RunConfig &c) { return to_string(c.refresh); })},
        {"stream_pre", [](RunConfig &c, std::string_view v) { c.stream_pre = parse_size("stream_pre", v); },
         show([](const RunConfig &c) { return c.stream_pre; })},
        {"stream_post", [](RunConfig &c, std::string_view v) { c.stream_post = parse_size("stream_post", v); },
         show([](const RunConfig &c) { return c.stream_post; })},
        {"stream_window", [](RunConfig &c, std::string_view v) { c.stream_window = parse_size("stream_window", v); },
         show([](const RunConfig &c) { return c.stream_window; })},
        {"out", [](RunConfig &c, std::string_view v) { c.out = std::string(v); }, show([](const RunConfig &c) { return c.out; })},
        {"seed", [](RunConfig &c, std::string_view v) { c.seed = parse_u64("seed", v); },
         show([](const RunConfig &c) { return c.seed; })},
    };
    return table;
}

const KeySpec &find_key(std::string_view key) {
    for (const auto &k : key_table()) {
        if (k.name == key) {
            return k;
        }
    }
    throw InvalidConfig(fmt::format("unknown config key '{}'", key));
}

}  // namespace

const std::vector<std::string> &RunConfig::keys() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> out;
        for (const auto &k : key_table()) {
            out.push_back(k.name);
        }
        return out;
    }();
    return names;
}

void RunConfig::set(std::string_view key, std::string_view value) { find_key(key).set(*this, trim(value)); }

std::string RunConfig::get(std::string_view key) const { return find_key(key).get(*this); }

DiversificationPolicy RunConfig::policy() const {
    DiversificationPolicy p;
    p.rf = rf;
    p.tc = ae_train;
    return p;
}

void RunConfig::validate() const {
    if (csv.empty()) {
        if (synth_dim < 2) {
            throw InvalidConfig(fmt::format("synth_dim must be at least 2 (got {})", synth_dim));
        }
        if (synth_rows < 50) {
            throw InvalidConfig(fmt::format("synth_rows must be at least 50 (got {})", synth_rows));
        }
        if (!(synth_sep > 0.0)) {
            throw InvalidConfig(fmt::format("synth_sep must be positive (got {})", synth_sep));
        }
        if (!(synth_noise >= 0.0 && synth_noise < 0.5)) {
            throw InvalidConfig(fmt::format("synth_noise must lie in [0, 0.5) (got {})", synth_noise));
        }
    }
    if (label_map != "ics" && label_map != "identity" && !std::filesystem::exists(label_map)) {
        throw InvalidConfig(fmt::format("label_map '{}' is neither ics, identity nor an existing file", label_map));
    }
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw InvalidConfig(fmt::format("train_fraction must lie in (0,1) (got {})", train_fraction));
    }
    rf.validate(csv.empty() ? synth_dim : std::max<std::size_t>(rf.mtry, 1));
    ae_train.validate();
    if (surrogate_hidden == 0 || surrogate_epochs == 0 || !(surrogate_lr > 0.0)) {
        throw InvalidConfig("surrogate_hidden, surrogate_epochs and surrogate_lr must be positive");
    }
    ComparisonConfig cc;
    cc.policy = policy();
    cc.t = t;
    cc.n = n;
    cc.m = m;
    cc.validate();
    jsma.validate();
    if (stream_window == 0 || stream_post == 0) {
        throw InvalidConfig("stream_window and stream_post must be positive");
    }
    if (out.empty()) {
        throw InvalidConfig("out must name a directory");
    }
}

std::string RunConfig::canonical() const {
    std::string text;
    for (const auto &k : key_table()) {
        if (k.name != "out") {
            text += fmt::format("{}={}\n", k.name, k.get(*this));
        }
    }
    return text;
}

std::string RunConfig::manifest_hash() const { return hex64(fnv1a64(canonical())); }

std::map<std::string, std::string> RunConfig::manifest() const {
    std::map<std::string, std::string> out;
    for (const auto &k : key_table()) {
        if (k.name != "out") {
            out[k.name] = k.get(*this);
        }
    }
    return out;
}

void apply_config_text(RunConfig &cfg, std::string_view text, std::string_view source) {
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        auto line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) {
            line = line.substr(0, hash);
        }
        const auto body = trim(line);
        if (body.empty()) {
            continue;
        }
        const auto eq = body.find('=');
        if (eq == std::string::npos) {
            throw InvalidConfig(fmt::format("{}:{}: expected key = value", source, line_no));
        }
        try {
            cfg.set(trim(std::string_view(body).substr(0, eq)), std::string_view(body).substr(eq + 1));
        } catch (const InvalidConfig &e) {
            throw InvalidConfig(fmt::format("{}:{}: {}", source, line_no, e.what()));
        }
    }
}

void apply_config_file(RunConfig &cfg, const std::filesystem::path &path) {
    std::string text;
    try {
        text = read_file(path);
    } catch (const DataError &) {
        throw InvalidConfig(fmt::format("cannot read config file '{}'", path.string()));
    }
    apply_config_text(cfg, text, path.string());
}

RunSeeds RunSeeds::derive(std::uint64_t master) {
    RunSeeds s;
    s.synth = mix_seed(master, 0x73796e);
    s.split = mix_seed(master, 0x73706c);
    s.surrogate = mix_seed(master, 0x737572);
    s.stream = mix_seed(master, 0x737472);
    s.comparison = ComparisonSeeds::derive(master);
    return s;
}

OutputSet::~OutputSet() {
    if (committed_) {
        return;
    }
    for (const auto &p : paths_) {
        std::error_code ec;
        std::filesystem::remove(p, ec);
    }
}

void OutputSet::adopt(const std::filesystem::path &path) {
    if (std::find(paths_.begin(), paths_.end(), path) == paths_.end()) {
        paths_.push_back(path);
    }
}

void OutputSet::write(const std::filesystem::path &path, std::string_view bytes) {
    adopt(path);
    write_file(path, bytes);
}

RunPaths resolve_paths(const RunConfig &cfg) {
    if (const char *root = std::getenv("REML_OUTPUT_ROOT"); root != nullptr && *root != '\0') {
        return {std::filesystem::path(root)};
    }
    return {std::filesystem::path(cfg.out)};
}

namespace {

LabelMap resolve_label_map(const RunConfig &cfg) {
    if (cfg.label_map == "ics") {
        return LabelMap::ics_default();
    }
    if (cfg.label_map == "identity") {
        return LabelMap::identity();
    }
    return LabelMap::load(cfg.label_map);
}

nlohmann::json read_json(const std::filesystem::path &path) {
    try {
        return nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception &e) {
        throw DataError(fmt::format("{}: malformed json ({})", path.string(), e.what()));
    }
}

void require_manifest(std::string_view artifact, const std::string &found, const std::string &expected) {
    if (found != expected) {
        throw DataError(fmt::format("{} belongs to manifest {} but this run is {}; re-run prepare", artifact,
                                    found.empty() ? std::string("<none>") : found, expected));
    }
}

struct Loaded {
    Dataset train;
    Dataset test;
};

// Reads the prepared split, checking it against this run's manifest.
Loaded load_prepared(const RunConfig &cfg, const RunPaths &paths) {
    if (!std::filesystem::exists(paths.manifest())) {
        throw DataError(fmt::format("{} not found; run prepare first", paths.manifest().string()));
    }
    const auto man = read_json(paths.manifest());
    require_manifest(paths.manifest().string(), man.value("manifest_hash", std::string{}), cfg.manifest_hash());
    Loaded out;
    out.train = read_dataset_csv(paths.train());
    out.test = read_dataset_csv(paths.test());
    for (auto *ds : {&out.train, &out.test}) {
        ds->normalized = true;
        ds->validate();
    }
    if (hex64(fingerprint(out.train)) != man.value("train_fingerprint", std::string{}) ||
        hex64(fingerprint(out.test)) != man.value("test_fingerprint", std::string{})) {
        throw DataError(fmt::format("prepared splits in {} do not match {}", paths.root.string(), paths.manifest().string()));
    }
    return out;
}

ServiceRepository load_checked_repository(const RunConfig &cfg, const RunPaths &paths, EncoderMode mode) {
    const auto path = paths.repository(mode);
    if (!std::filesystem::exists(path)) {
        throw DataError(fmt::format("{} not found; run train-repo{} first", path.string(),
                                    mode == EncoderMode::float_path ? " --no-quantize" : ""));
    }
    auto repo = load_repository(path);
    require_manifest(path.string(), repo.manifest_hash, cfg.manifest_hash());
    if (repo.mode != mode) {
        throw DataError(fmt::format("{} holds the wrong encoder variant", path.string()));
    }
    return repo;
}

void prepare_into(const RunConfig &cfg, const RunPaths &paths, OutputSet &outputs, const Reporter &say) {
    const auto prepared = prepare_data(cfg);
    outputs.write(paths.train(), to_csv(prepared.train));
    outputs.write(paths.test(), to_csv(prepared.test));
    nlohmann::json nz;
    nz["manifest_hash"] = cfg.manifest_hash();
    nz["min"] = prepared.normalizer.min;
    nz["max"] = prepared.normalizer.max;
    outputs.write(paths.normalizer(), nz.dump(1) + "\n");
    nlohmann::json man;
    man["manifest_hash"] = cfg.manifest_hash();
    man["config"] = cfg.manifest();
    man["total_rows"] = prepared.total_rows;
    man["dropped_rows"] = prepared.dropped_rows;
    man["train_rows"] = prepared.train.rows();
    man["test_rows"] = prepared.test.rows();
    man["train_fingerprint"] = hex64(fingerprint(prepared.train));
    man["test_fingerprint"] = hex64(fingerprint(prepared.test));
    outputs.write(paths.manifest(), man.dump(1) + "\n");
    say(fmt::format("prepare: {} rows read, {} dropped (non-numeric/NaN/Inf), {} train / {} test, d={}, manifest {}",
                    prepared.total_rows, prepared.dropped_rows, prepared.train.rows(), prepared.test.rows(),
                    prepared.train.dim(), cfg.manifest_hash()));
}

void train_repo_into(const RunConfig &cfg, const RunPaths &paths, EncoderMode mode, OutputSet &outputs, const Reporter &say) {
    const auto data = load_prepared(cfg, paths);
    const auto seeds = RunSeeds::derive(cfg.seed);
    auto repo = build_repository(data.train, cfg.t, cfg.policy(), seeds.comparison.repository, mode);
    repo.manifest_hash = cfg.manifest_hash();
    const auto probes = data.test.features.select_rows([&] {
        std::vector<std::size_t> rows(std::min<std::size_t>(data.test.rows(), 200));
        for (std::size_t i = 0; i < rows.size(); ++i) {
            rows[i] = i;
        }
        return rows;
    }());
    const auto diversity = check_diversity(repo, probes);
    outputs.write(paths.repository(mode), serialize(repo));
    say(fmt::format("train-repo: {} {} services, {}/{} probes with disagreeing votes{}", repo.size(),
                    mode == EncoderMode::quantized ? "int8" : "float", diversity.non_unanimous, diversity.probes,
                    diversity.flagged ? " (warning: repository shows no diversity)" : ""));
}

void attack_into(const RunConfig &cfg, const RunPaths &paths, OutputSet &outputs, const Reporter &say) {
    const auto data = load_prepared(cfg, paths);
    const auto surrogate = train_surrogate(cfg, data.train);
    const auto adv = craft_adversarial_testset(surrogate, data.test, cfg.jsma);
    outputs.write(paths.surrogate(), serialize(surrogate));
    outputs.adopt(paths.adversarial());
    outputs.adopt(paths.adversarial_meta());
    save_adversarial(paths.adversarial(), paths.adversarial_meta(), adv, cfg.manifest_hash());
    std::size_t agree = 0;
    for (std::size_t r = 0; r < data.test.rows(); ++r) {
        agree += surrogate.predict(data.test.row(r)) == data.test.labels[r] ? 1 : 0;
    }
    say(fmt::format("attack: surrogate clean accuracy {:.4f}, JSMA success {:.4f} on {} attack rows (theta={}, gamma={})",
                    static_cast<double>(agree) / static_cast<double>(data.test.rows()), adv.success_rate(),
                    data.test.count(kAttack), cfg.jsma.theta, cfg.jsma.gamma));
}

EvalReport evaluate_into(const RunConfig &cfg, const RunPaths &paths, OutputSet &outputs, const Reporter &say) {
    const auto data = load_prepared(cfg, paths);
    AdversarialTestSet adv;
    if (!std::filesystem::exists(paths.adversarial())) {
        throw DataError(fmt::format("{} not found; run attack first", paths.adversarial().string()));
    }
    require_manifest(paths.adversarial_meta().string(), load_adversarial(paths.adversarial(), paths.adversarial_meta(), adv),
                     cfg.manifest_hash());
    if (adv.data.labels != data.test.labels) {
        throw DataError("adversarial set is not aligned with the prepared test split");
    }
    const auto reml_repo = load_checked_repository(cfg, paths, EncoderMode::quantized);
    const auto rml_repo = load_checked_repository(cfg, paths, EncoderMode::float_path);
    const auto seeds = RunSeeds::derive(cfg.seed);
    auto rf_cfg = cfg.rf;
    rf_cfg.seed = seeds.comparison.base_rf;
    const auto base = train_forest(data.train.features, data.train.labels, rf_cfg);
    const auto reml_ens = deploy(reml_repo, cfg.n, cfg.m, seeds.comparison.deploy);
    const auto rml_ens = deploy(rml_repo, cfg.n, cfg.m, seeds.comparison.deploy);
    auto report = evaluate_models(base, rml_ens, reml_ens, data.test, adv.data, cfg.exposure);
    report.manifest_hash = cfg.manifest_hash();
    report.manifest = cfg.manifest();
    report.manifest["train_fingerprint"] = hex64(fingerprint(data.train));
    report.manifest["clean_fingerprint"] = hex64(fingerprint(data.test));
    report.manifest["adversarial_fingerprint"] = hex64(fingerprint(adv.data));
    const auto dir = paths.report_dir();
    const auto &tag = report.manifest_hash;
    outputs.write(dir / fmt::format("report_{}.json", tag), report_to_json(report));
    outputs.write(dir / fmt::format("metrics_{}.csv", tag), metrics_csv(report));
    outputs.write(dir / fmt::format("heatmap_{}.svg", tag), heatmap_svg(report));
    outputs.write(dir / fmt::format("confusion_{}.svg", tag), confusion_svg(report));
    for (const auto m : kMethods) {
        for (const auto s : kTestSets) {
            const auto &c = report.at(m, s);
            say(fmt::format("evaluate: {:<17} P={:.4f} R={:.4f} F1={:.4f}", cell_key(m, s), c.m.precision, c.m.recall, c.m.f1));
        }
    }
    say(fmt::format("evaluate: report written to {}", dir.string()));
    return report;
}

}  // namespace

Prepared prepare_data(const RunConfig &cfg) {
    const auto seeds = RunSeeds::derive(cfg.seed);
    Prepared out;
    Dataset full;
    if (cfg.csv.empty()) {
        full = synth_icslike(cfg.synth_rows, cfg.synth_dim, cfg.synth_sep, cfg.synth_noise, seeds.synth);
        out.total_rows = full.rows();
    } else {
        const auto table = load_csv(cfg.csv, cfg.has_header, cfg.label_column);
        full = make_dataset(table, resolve_label_map(cfg));
        out.total_rows = table.total_rows;
        out.dropped_rows = table.dropped_rows;
    }
    if (full.dim() < 2) {
        throw DataError(fmt::format("dataset has {} feature columns; need at least 2", full.dim()));
    }
    cfg.rf.validate(full.dim());
    auto split = stratified_split(full, cfg.train_fraction, seeds.split);
    out.normalizer = fit_normalizer(split.train);
    out.train = apply_normalizer(out.normalizer, split.train);
    out.test = apply_normalizer(out.normalizer, split.test);
    return out;
}

Surrogate train_surrogate(const RunConfig &cfg, const Dataset &train) {
    TrainConfig tc;
    tc.epochs = cfg.surrogate_epochs;
    tc.batch_size = cfg.ae_train.batch_size;
    tc.learning_rate = cfg.surrogate_lr;
    tc.seed = RunSeeds::derive(cfg.seed).surrogate;
    return train_classifier(train.features, train.labels, cfg.surrogate_hidden, tc);
}

void cmd_gen_data(const RunConfig &cfg, const Reporter &say) {
    cfg.validate();
    const auto paths = resolve_paths(cfg);
    const auto seeds = RunSeeds::derive(cfg.seed);
    const auto ds = synth_icslike(cfg.synth_rows, cfg.synth_dim, cfg.synth_sep, cfg.synth_noise, seeds.synth);
    // benign rows split between the two no-attack vocabularies
    Rng rng(mix_seed(seeds.synth, 0x6c6162));
    std::vector<std::string> text(ds.rows());
    for (std::size_t r = 0; r < ds.rows(); ++r) {
        text[r] = ds.labels[r] == kAttack ? "Attack" : (rng.bernoulli(0.5) ? "NoEvents" : "Natural");
    }
    OutputSet outputs;
    outputs.write(paths.synth_csv(), to_csv(ds, &text, "marker"));
    outputs.write(paths.synth_labelmap(), LabelMap::ics_default().to_text());
    outputs.commit();
    say(fmt::format("gen-data: {} rows x {} features -> {}", ds.rows(), ds.dim(), paths.synth_csv().string()));
}

void cmd_prepare(const RunConfig &cfg, const Reporter &say) {
    cfg.validate();
    const auto paths = resolve_paths(cfg);
    OutputSet outputs;
    prepare_into(cfg, paths, outputs, say);
    outputs.commit();
}

void cmd_train_repo(const RunConfig &cfg, bool no_quantize, const Reporter &say) {
    cfg.validate();
    const auto paths = resolve_paths(cfg);
    OutputSet outputs;
    train_repo_into(cfg, paths, no_quantize ? EncoderMode::float_path : EncoderMode::quantized, outputs, say);
    outputs.commit();
}

void cmd_attack(const RunConfig &cfg, const Reporter &say) {
    cfg.validate();
    const auto paths = resolve_paths(cfg);
    OutputSet outputs;
    attack_into(cfg, paths, outputs, say);
    outputs.commit();
}

EvalReport cmd_evaluate(const RunConfig &cfg, bool all, const Reporter &say) {
    cfg.validate();
    const auto paths = resolve_paths(cfg);
    OutputSet outputs;
    if (all) {
        prepare_into(cfg, paths, outputs, say);
        attack_into(cfg, paths, outputs, say);
        train_repo_into(cfg, paths, EncoderMode::quantized, outputs, say);
        train_repo_into(cfg, paths, EncoderMode::float_path, outputs, say);
    }
    auto report = evaluate_into(cfg, paths, outputs, say);
    outputs.commit();
    return report;
}

DriftDemoResult run_drift_demo(const RunConfig &cfg, PredictionLog *log,
                               const std::function<void(std::size_t, const DriftDetector &)> &on_event) {
    cfg.validate();
    if (!cfg.csv.empty()) {
        throw InvalidConfig("demo-stream injects a synthetic shift and needs the synthetic source (leave csv empty)");
    }
    const auto seeds = RunSeeds::derive(cfg.seed);
    const auto prepared = prepare_data(cfg);
    const SynthGenerator gen(cfg.synth_dim, cfg.synth_sep, cfg.synth_noise, seeds.synth);
    const auto norm = [&](const Dataset &raw) { return apply_normalizer(prepared.normalizer, raw); };
    const auto pre = norm(gen.sample(cfg.stream_pre, mix_seed(seeds.stream, 1), false));
    const auto post = norm(gen.sample(cfg.stream_post, mix_seed(seeds.stream, 2), true));
    const auto holdout = norm(gen.sample(1000, mix_seed(seeds.stream, 3), true));
    const auto stream = concat(pre, post);

    const auto policy = cfg.policy();
    const std::size_t t = cfg.t;
    const RepositoryBuilder builder = [policy, t](const Dataset &train, std::uint64_t seed) {
        return build_repository(train, t, policy, seed, EncoderMode::quantized);
    };
    auto repo = builder(prepared.train, seeds.comparison.repository);
    repo.manifest_hash = cfg.manifest_hash();
    const auto stale = deploy(repo, cfg.n, cfg.m, seeds.comparison.deploy);

    FeedbackLoop loop(prepared.train, builder, cfg.seed, DriftParams{}, cfg.refresh, log);
    StreamConfig sc;
    sc.n = cfg.n;
    sc.m = cfg.m;
    sc.deploy_seed = seeds.comparison.deploy;
    sc.window = cfg.stream_window;
    auto result = replay_stream(stream, repo, loop, sc, log, on_event);

    DriftDemoResult out;
    out.shift_index = pre.rows();
    out.drift_at = result.drift_at;
    out.refreshes = result.refreshes;
    out.stale_post_accuracy = ensemble_accuracy(stale, holdout);
    out.refreshed_post_accuracy = ensemble_accuracy(result.ensemble, holdout);
    return out;
}

void cmd_demo_stream(const RunConfig &cfg, const Reporter &say) {
    cfg.validate();
    const auto paths = resolve_paths(cfg);
    OutputSet outputs;
    outputs.adopt(paths.stream_log());
    std::filesystem::remove(paths.stream_log());
    DriftDemoResult res;
    {
        PredictionLog log(paths.stream_log());
        res = run_drift_demo(cfg, &log, [&](std::size_t i, const DriftDetector &det) {
            say(fmt::format("demo-stream: drift at sample {} (p={:.4f} s={:.4f} p_min={:.4f} s_min={:.4f})", i, det.p(), det.s(),
                            det.p_min(), det.s_min()));
        });
    }
    say(fmt::format("demo-stream: shift injected at sample {}, {} refresh(es)", res.shift_index, res.refreshes));
    say(fmt::format("demo-stream: post-shift accuracy stale {:.4f} -> refreshed {:.4f}", res.stale_post_accuracy,
                    res.refreshed_post_accuracy));
    outputs.commit();
}

}  // namespace reml
