#include "reml/dagt.hpp"
#include "reml/parallel.hpp"
#include "reml/random.hpp"

#include <fmt/format.h>

#include <algorithm>

namespace reml {

namespace {

constexpr std::uint8_t kFormatVersion = 1;

Mlp round_to_float32(Mlp net) {
    for (auto &layer : net.layers()) {
        for (auto &w : layer.weights) {
            w = static_cast<float>(w);
        }
        for (auto &b : layer.bias) {
            b = static_cast<float>(b);
        }
    }
    return net;
}

void write_ae_config(ByteWriter &w, const AeConfig &c) {
    w.u32(static_cast<std::uint32_t>(c.input_dim));
    w.u32(static_cast<std::uint32_t>(c.hidden_width));
    w.u32(static_cast<std::uint32_t>(c.code_dim));
    w.u8(static_cast<std::uint8_t>(c.activation));
}

AeConfig read_ae_config(ByteReader &r) {
    AeConfig c;
    c.input_dim = r.u32();
    c.hidden_width = r.u32();
    c.code_dim = r.u32();
    c.activation = static_cast<Activation>(r.u8());
    c.validate();
    return c;
}

void write_policy(ByteWriter &w, const DiversificationPolicy &p) {
    auto ratios = [&](const std::vector<WidthRatio> &rs) {
        w.u32(static_cast<std::uint32_t>(rs.size()));
        for (const auto &r : rs) {
            w.u32(r.num);
            w.u32(r.den);
        }
    };
    ratios(p.code_ratios);
    ratios(p.hidden_ratios);
    w.u32(static_cast<std::uint32_t>(p.activations.size()));
    for (const auto a : p.activations) {
        w.u8(static_cast<std::uint8_t>(a));
    }
    w.u32(static_cast<std::uint32_t>(p.default_code));
    w.u32(static_cast<std::uint32_t>(p.default_hidden));
    w.u32(static_cast<std::uint32_t>(p.default_activation));
    w.u32(static_cast<std::uint32_t>(p.rf.n_trees));
    w.u32(static_cast<std::uint32_t>(p.rf.max_depth));
    w.u32(static_cast<std::uint32_t>(p.rf.min_samples_split));
    w.u32(static_cast<std::uint32_t>(p.rf.mtry));
    w.u64(p.rf.seed);
    w.u8(p.rf.bootstrap ? 1 : 0);
    w.u32(static_cast<std::uint32_t>(p.tc.epochs));
    w.u32(static_cast<std::uint32_t>(p.tc.batch_size));
    w.f64(p.tc.learning_rate);
    w.u64(p.tc.seed);
}

DiversificationPolicy read_policy(ByteReader &r) {
    DiversificationPolicy p;
    auto ratios = [&] {
        std::vector<WidthRatio> rs(r.u32());
        for (auto &x : rs) {
            x.num = r.u32();
            x.den = r.u32();
        }
        return rs;
    };
    p.code_ratios = ratios();
    p.hidden_ratios = ratios();
    p.activations.resize(r.u32());
    for (auto &a : p.activations) {
        a = static_cast<Activation>(r.u8());
    }
    p.default_code = r.u32();
    p.default_hidden = r.u32();
    p.default_activation = r.u32();
    p.rf.n_trees = r.u32();
    p.rf.max_depth = r.u32();
    p.rf.min_samples_split = r.u32();
    p.rf.mtry = r.u32();
    p.rf.seed = r.u64();
    p.rf.bootstrap = r.u8() != 0;
    p.tc.epochs = r.u32();
    p.tc.batch_size = r.u32();
    p.tc.learning_rate = r.f64();
    p.tc.seed = r.u64();
    p.validate();
    return p;
}

}  // namespace

std::vector<double> encode(const Encoder &enc, std::span<const double> x) {
    return std::visit(
        [&](const auto &e) -> std::vector<double> {
            if constexpr (std::is_same_v<std::decay_t<decltype(e)>, QuantizedEncoder>) {
                return q_encode(e, x);
            } else {
                return e.network.forward(x);
            }
        },
        enc);
}

ServiceSeeds ServiceSeeds::derive(std::uint64_t service_seed) {
    return {service_seed, mix_seed(service_seed, 1), mix_seed(service_seed, 2), mix_seed(service_seed, 3)};
}

MlService build_service(const Dataset &train, const AeConfig &ae_cfg, const RfConfig &rf_cfg, const TrainConfig &tc,
                        std::uint64_t seed, EncoderMode mode, std::string id) {
    ae_cfg.validate();
    tc.validate();
    train.validate();
    if (train.dim() != ae_cfg.input_dim) {
        throw DimensionMismatch("build_service", ae_cfg.input_dim, train.dim());
    }
    MlService svc;
    svc.id = id.empty() ? fmt::format("svc-{}", hex64(seed).substr(0, 8)) : std::move(id);
    svc.ae_cfg = ae_cfg;
    svc.seeds = ServiceSeeds::derive(seed);

    // Unsupervised: the autoencoder never sees labels.
    TrainConfig ae_tc = tc;
    ae_tc.seed = svc.seeds.ae_train;
    auto trained = train_autoencoder(init_autoencoder(ae_cfg, svc.seeds.ae_init), train.features, ae_tc);
    svc.final_ae_loss = trained.loss_history.back();

    if (mode == EncoderMode::quantized) {
        svc.encoder = compress_encoder(trained.model, train.features);
    } else {
        svc.encoder = FloatEncoder{ae_cfg, round_to_float32(trained.model.encoder())};
    }

    Matrix codes(train.rows(), ae_cfg.code_dim);
    for (std::size_t r = 0; r < train.rows(); ++r) {
        const auto code = encode(svc.encoder, train.row(r));
        std::copy(code.begin(), code.end(), codes.row(r).begin());
    }
    RfConfig forest_cfg = rf_cfg;
    forest_cfg.seed = svc.seeds.forest;
    if (forest_cfg.mtry > ae_cfg.code_dim) {
        forest_cfg.mtry = ae_cfg.code_dim;
    }
    svc.forest = train_forest(codes, train.labels, forest_cfg);
    return svc;
}

Label service_predict(const MlService &svc, std::span<const double> x) {
    if (x.size() != svc.ae_cfg.input_dim) {
        throw DimensionMismatch("service_predict", svc.ae_cfg.input_dim, x.size());
    }
    return forest_predict(svc.forest, encode(svc.encoder, x)).label;
}

std::size_t WidthRatio::apply(std::size_t d) const {
    return std::max<std::size_t>(1, (d * num + den - 1) / den);
}

void DiversificationPolicy::validate() const {
    if (code_ratios.empty() || hidden_ratios.empty() || activations.empty()) {
        throw InvalidConfig("diversification grid has an empty axis");
    }
    if (default_code >= code_ratios.size() || default_hidden >= hidden_ratios.size() ||
        default_activation >= activations.size()) {
        throw InvalidConfig("diversification default lies outside the grid");
    }
    for (const auto &r : code_ratios) {
        if (r.den == 0 || r.num == 0 || r.num >= r.den) {
            throw InvalidConfig("code ratios must lie in (0,1)");
        }
    }
    for (const auto &r : hidden_ratios) {
        if (r.den == 0 || r.num == 0) {
            throw InvalidConfig("hidden ratios must be positive");
        }
    }
    tc.validate();
    if (rf.n_trees < 1) {
        throw InvalidConfig("forest needs n_trees >= 1");
    }
}

AeConfig DiversificationPolicy::default_config(std::size_t d) const {
    AeConfig c{d, hidden_ratios[default_hidden].apply(d), code_ratios[default_code].apply(d), activations[default_activation]};
    c.hidden_width = std::max(c.hidden_width, c.code_dim);
    return c;
}

std::vector<AeConfig> DiversificationPolicy::grid(std::size_t d) const {
    std::vector<AeConfig> out{default_config(d)};
    for (const auto &code : code_ratios) {
        for (const auto &hidden : hidden_ratios) {
            for (const auto act : activations) {
                AeConfig c{d, hidden.apply(d), code.apply(d), act};
                c.hidden_width = std::max(c.hidden_width, c.code_dim);
                if (std::find(out.begin(), out.end(), c) == out.end()) {
                    out.push_back(c);
                }
            }
        }
    }
    for (const auto &c : out) {
        c.validate();
    }
    return out;
}

ServiceRepository build_repository(const Dataset &train, std::size_t t, const DiversificationPolicy &policy,
                                   std::uint64_t master_seed, EncoderMode mode) {
    if (t < 1) {
        throw InvalidConfig("repository size t must be >= 1");
    }
    policy.validate();
    const auto grid = policy.grid(train.dim());
    std::vector<std::size_t> rest(grid.size() - 1);
    for (std::size_t i = 0; i < rest.size(); ++i) {
        rest[i] = i + 1;
    }
    Rng rng(mix_seed(master_seed, 0x67726964));
    rng.shuffle(std::span(rest));

    std::vector<AeConfig> configs(t);
    for (std::size_t i = 0; i < t; ++i) {
        configs[i] = (i == 0 || rest.empty()) ? grid[0] : grid[rest[(i - 1) % rest.size()]];
    }

    ServiceRepository repo;
    repo.policy = policy;
    repo.master_seed = master_seed;
    repo.data_fingerprint = fingerprint(train);
    repo.mode = mode;
    repo.services.resize(t);
    parallel_for(t, [&](std::size_t i) {
        const auto seed = mix_seed(master_seed, 0x1000 + i);
        auto svc = build_service(train, configs[i], policy.rf, policy.tc, seed, mode, fmt::format("s{:02}-{}", i, configs[i].describe()));
        repo.services[i] = std::make_shared<const MlService>(std::move(svc));
    });
    return repo;
}

DiversityReport check_diversity(const ServiceRepository &repo, const Matrix &probes) {
    DiversityReport report;
    report.probes = probes.rows();
    for (std::size_t r = 0; r < probes.rows(); ++r) {
        std::size_t attack = 0;
        for (const auto &svc : repo.services) {
            attack += service_predict(*svc, probes.row(r)) == kAttack ? 1 : 0;
        }
        if (attack != 0 && attack != repo.services.size()) {
            ++report.non_unanimous;
        }
    }
    report.flagged = repo.services.size() >= 2 && report.non_unanimous == 0;
    return report;
}

std::string serialize(const ServiceRepository &repo) {
    ByteWriter w;
    w.raw("RMRP");
    w.u8(kFormatVersion);
    w.str(repo.manifest_hash);
    w.u64(repo.master_seed);
    w.u64(repo.data_fingerprint);
    w.u8(static_cast<std::uint8_t>(repo.mode));
    write_policy(w, repo.policy);
    w.u32(static_cast<std::uint32_t>(repo.services.size()));
    for (const auto &svc : repo.services) {
        w.str(svc->id);
        w.u64(svc->seeds.service);
        w.u64(svc->seeds.ae_init);
        w.u64(svc->seeds.ae_train);
        w.u64(svc->seeds.forest);
        write_ae_config(w, svc->ae_cfg);
        w.f64(svc->final_ae_loss);
        if (const auto *q = std::get_if<QuantizedEncoder>(&svc->encoder)) {
            w.u8(0);
            write_quantized_encoder(w, *q);
        } else {
            w.u8(1);
            std::get<FloatEncoder>(svc->encoder).network.write(w);
        }
        write_forest(w, svc->forest);
    }
    return std::move(w).bytes();
}

ServiceRepository deserialize_repository(std::string_view bytes) {
    ByteReader r(bytes);
    r.expect("RMRP", "service repository");
    if (const auto v = r.u8(); v != kFormatVersion) {
        throw DataError(fmt::format("unsupported repository format version {}", v));
    }
    ServiceRepository repo;
    repo.manifest_hash = r.str();
    repo.master_seed = r.u64();
    repo.data_fingerprint = r.u64();
    const auto mode = r.u8();
    if (mode > 1) {
        throw DataError("unknown repository encoder mode");
    }
    repo.mode = static_cast<EncoderMode>(mode);
    repo.policy = read_policy(r);
    const auto t = r.u32();
    for (std::uint32_t i = 0; i < t; ++i) {
        MlService svc;
        svc.id = r.str();
        svc.seeds.service = r.u64();
        svc.seeds.ae_init = r.u64();
        svc.seeds.ae_train = r.u64();
        svc.seeds.forest = r.u64();
        svc.ae_cfg = read_ae_config(r);
        svc.final_ae_loss = r.f64();
        const auto tag = r.u8();
        if (tag == 0) {
            svc.encoder = read_quantized_encoder(r);
        } else if (tag == 1) {
            svc.encoder = FloatEncoder{svc.ae_cfg, Mlp::read(r)};
        } else {
            throw DataError("unknown service encoder tag");
        }
        svc.forest = read_forest(r);
        if (svc.forest.n_features != svc.ae_cfg.code_dim) {
            throw DataError(fmt::format("service {} forest reads {} features but code_dim is {}", svc.id, svc.forest.n_features,
                                        svc.ae_cfg.code_dim));
        }
        repo.services.push_back(std::make_shared<const MlService>(std::move(svc)));
    }
    if (!r.at_end()) {
        throw DataError("trailing bytes after repository payload");
    }
    return repo;
}

void save_repository(const std::filesystem::path &path, const ServiceRepository &repo) { write_file(path, serialize(repo)); }

ServiceRepository load_repository(const std::filesystem::path &path) { return deserialize_repository(read_file(path)); }

}  // namespace reml
