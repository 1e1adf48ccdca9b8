#pragma once

#include "reml/binary_io.hpp"
#include "reml/core.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace reml {

enum class Activation : std::uint8_t { linear = 0, relu = 1, tanh = 2, sigmoid = 3 };

std::string_view to_string(Activation a) noexcept;
Activation parse_activation(std::string_view name);
double activate(Activation a, double z) noexcept;
/// Derivative expressed through the activation output y = act(z).
double activation_slope(Activation a, double y) noexcept;

/// Fully connected layer. Weights are outputs x inputs, row-major.
struct DenseLayer {
    std::size_t inputs = 0;
    std::size_t outputs = 0;
    std::vector<double> weights;
    std::vector<double> bias;
    Activation activation = Activation::linear;

    void apply(std::span<const double> in, std::span<double> out) const;
    friend bool operator==(const DenseLayer &, const DenseLayer &) = default;
};

struct LayerGradient {
    std::vector<double> weights;
    std::vector<double> bias;
};
using Gradients = std::vector<LayerGradient>;

/// Plain feed-forward stack shared by the autoencoder and the surrogate.
class Mlp {
public:
    /// Per-layer outputs; values[0] is the input itself.
    using Trace = std::vector<std::vector<double>>;

    Mlp() = default;
    explicit Mlp(std::vector<DenseLayer> layers);

    /// Glorot-uniform weights, zero biases.
    static Mlp glorot(std::span<const std::size_t> widths, std::span<const Activation> activations, std::uint64_t seed);

    const std::vector<DenseLayer> &layers() const noexcept { return layers_; }
    std::vector<DenseLayer> &layers() noexcept { return layers_; }
    std::size_t input_dim() const;
    std::size_t output_dim() const;
    std::size_t parameter_count() const;

    std::vector<double> forward(std::span<const double> x) const;
    Trace trace(std::span<const double> x) const;

    /// Backpropagates dL/d(final output). Parameter gradients are added into
    /// `acc` when non-null; returns dL/dx.
    std::vector<double> backward(const Trace &trace, std::span<const double> grad_out, Gradients *acc) const;

    Gradients zero_gradients() const;

    void write(ByteWriter &w) const;
    static Mlp read(ByteReader &r);

    friend bool operator==(const Mlp &, const Mlp &) = default;

private:
    std::vector<DenseLayer> layers_;
};

/// Adam with bias-corrected moments.
class Adam {
public:
    Adam(const Mlp &net, double learning_rate, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
    void step(Mlp &net, const Gradients &grads);

private:
    double lr_, beta1_, beta2_, eps_;
    std::uint64_t t_ = 0;
    Gradients m_, v_;
};

struct AeConfig {
    std::size_t input_dim = 0;
    std::size_t hidden_width = 0;
    std::size_t code_dim = 0;
    Activation activation = Activation::tanh;

    void validate() const;
    /// [input, hidden, code, hidden, input]
    std::array<std::size_t, 5> widths() const;
    std::string describe() const;
    friend bool operator==(const AeConfig &, const AeConfig &) = default;
};

struct TrainConfig {
    std::size_t epochs = 40;
    std::size_t batch_size = 32;
    double learning_rate = 1e-3;
    std::uint64_t seed = 0;

    void validate() const;
    friend bool operator==(const TrainConfig &, const TrainConfig &) = default;
};

/// Symmetric dense autoencoder; the last layer is linear.
class Autoencoder {
public:
    struct Output {
        std::vector<double> code;
        std::vector<double> reconstruction;
    };

    Autoencoder(AeConfig config, Mlp network);

    const AeConfig &config() const noexcept { return config_; }
    const Mlp &network() const noexcept { return net_; }
    Mlp &network() noexcept { return net_; }

    Output forward(std::span<const double> x) const;
    std::vector<double> encode(std::span<const double> x) const;
    /// Input-to-code half (first two layers).
    Mlp encoder() const;

    friend bool operator==(const Autoencoder &, const Autoencoder &) = default;

private:
    AeConfig config_;
    Mlp net_;
};

Autoencoder init_autoencoder(const AeConfig &cfg, std::uint64_t seed);
double loss_mse(std::span<const double> reconstruction, std::span<const double> x);
/// Mean reconstruction loss over batch rows.
double batch_loss(const Autoencoder &ae, const Matrix &batch);
/// Analytic gradient of batch_loss with respect to every parameter.
Gradients gradients(const Autoencoder &ae, const Matrix &batch);

struct AeTrainResult {
    Autoencoder model;
    std::vector<double> loss_history;  // one mean training loss per epoch
};

AeTrainResult train_autoencoder(Autoencoder ae, const Matrix &x, const TrainConfig &tc);

/// Two-class softmax classifier [d, hidden, 2]. Only the attacker uses it.
class Surrogate {
public:
    explicit Surrogate(Mlp network);

    const Mlp &network() const noexcept { return net_; }
    Mlp &network() noexcept { return net_; }
    std::size_t input_dim() const { return net_.input_dim(); }

    std::array<double, 2> probabilities(std::span<const double> x) const;
    Label predict(std::span<const double> x) const;
    /// Rows are classes: [c][i] = dP_c / dx_i.
    Matrix input_jacobian(std::span<const double> x) const;

    /// Mean cross-entropy.
    double loss(const Matrix &x, std::span<const Label> y) const;
    Gradients gradients(const Matrix &x, std::span<const Label> y) const;

private:
    Mlp net_;
};

Surrogate train_classifier(const Matrix &x, std::span<const Label> y, std::size_t hidden_width, const TrainConfig &tc);

std::string serialize(const Autoencoder &ae);
Autoencoder deserialize_autoencoder(std::string_view bytes);
std::string serialize(const Surrogate &s);
Surrogate deserialize_surrogate(std::string_view bytes);

}  // namespace reml
