#pragma once

#include "reml/data.hpp"
#include "reml/forest.hpp"
#include "reml/nn.hpp"
#include "reml/quant.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace reml {

/// Uncompressed encoder half, kept by the rML comparator.
struct FloatEncoder {
    AeConfig config;
    Mlp network;

    friend bool operator==(const FloatEncoder &, const FloatEncoder &) = default;
};

using Encoder = std::variant<QuantizedEncoder, FloatEncoder>;

std::vector<double> encode(const Encoder &enc, std::span<const double> x);

enum class EncoderMode : std::uint8_t { quantized = 0, float_path = 1 };

struct ServiceSeeds {
    std::uint64_t service = 0;
    std::uint64_t ae_init = 0;
    std::uint64_t ae_train = 0;
    std::uint64_t forest = 0;

    static ServiceSeeds derive(std::uint64_t service_seed);
    friend bool operator==(const ServiceSeeds &, const ServiceSeeds &) = default;
};

/// One DAGT service: autoencoder code layer followed by a forest on the codes.
struct MlService {
    std::string id;
    Encoder encoder;
    RandomForest forest;
    AeConfig ae_cfg;
    ServiceSeeds seeds;
    double final_ae_loss = 0.0;

    bool quantized() const noexcept { return std::holds_alternative<QuantizedEncoder>(encoder); }
};

MlService build_service(const Dataset &train, const AeConfig &ae_cfg, const RfConfig &rf_cfg, const TrainConfig &tc,
                        std::uint64_t seed, EncoderMode mode = EncoderMode::quantized, std::string id = {});
Label service_predict(const MlService &svc, std::span<const double> x);

/// ceil(d * num / den)
struct WidthRatio {
    std::uint32_t num = 1;
    std::uint32_t den = 1;

    std::size_t apply(std::size_t d) const;
    friend bool operator==(const WidthRatio &, const WidthRatio &) = default;
};

/// Hyperparameter grid the repository samples service configs from.
struct DiversificationPolicy {
    std::vector<WidthRatio> code_ratios{{1, 4}, {1, 3}, {1, 2}};
    std::vector<WidthRatio> hidden_ratios{{1, 2}, {2, 3}};
    std::vector<Activation> activations{Activation::relu, Activation::tanh, Activation::sigmoid};
    // grid coordinates of the service built first
    std::size_t default_code = 1;
    std::size_t default_hidden = 1;
    std::size_t default_activation = 1;
    RfConfig rf;
    TrainConfig tc;

    void validate() const;
    AeConfig default_config(std::size_t d) const;
    /// All grid configs with the default first, in grid order otherwise.
    std::vector<AeConfig> grid(std::size_t d) const;
    friend bool operator==(const DiversificationPolicy &, const DiversificationPolicy &) = default;
};

struct ServiceRepository {
    std::vector<std::shared_ptr<const MlService>> services;
    DiversificationPolicy policy;
    std::uint64_t master_seed = 0;
    std::uint64_t data_fingerprint = 0;
    EncoderMode mode = EncoderMode::quantized;
    std::string manifest_hash;

    std::size_t size() const noexcept { return services.size(); }
};

ServiceRepository build_repository(const Dataset &train, std::size_t t, const DiversificationPolicy &policy,
                                   std::uint64_t master_seed, EncoderMode mode = EncoderMode::quantized);

struct DiversityReport {
    std::size_t probes = 0;
    std::size_t non_unanimous = 0;
    bool flagged = false;  // every probe received unanimous votes
};

DiversityReport check_diversity(const ServiceRepository &repo, const Matrix &probes);

std::string serialize(const ServiceRepository &repo);
ServiceRepository deserialize_repository(std::string_view bytes);
void save_repository(const std::filesystem::path &path, const ServiceRepository &repo);
ServiceRepository load_repository(const std::filesystem::path &path);

}  // namespace reml
