#include "reml/nn.hpp"
#include "reml/random.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace reml {

namespace {

constexpr std::uint8_t kFormatVersion = 1;

void check_finite(std::span<const double> x, const char *where) {
    for (const double v : x) {
        if (!std::isfinite(v)) {
            throw DataError(fmt::format("{}: non-finite input value", where));
        }
    }
}

std::array<double, 2> softmax2(std::span<const double> logits) {
    const double hi = std::max(logits[0], logits[1]);
    const double e0 = std::exp(logits[0] - hi);
    const double e1 = std::exp(logits[1] - hi);
    const double sum = e0 + e1;
    return {e0 / sum, e1 / sum};
}

void scale_gradients(Gradients &g, double s) {
    for (auto &layer : g) {
        for (auto &v : layer.weights) {
            v *= s;
        }
        for (auto &v : layer.bias) {
            v *= s;
        }
    }
}

}  // namespace

std::string_view to_string(Activation a) noexcept {
    switch (a) {
        case Activation::linear: return "linear";
        case Activation::relu: return "relu";
        case Activation::tanh: return "tanh";
        case Activation::sigmoid: return "sigmoid";
    }
    return "unknown";
}

Activation parse_activation(std::string_view name) {
    for (const auto a : {Activation::linear, Activation::relu, Activation::tanh, Activation::sigmoid}) {
        if (to_string(a) == name) {
            return a;
        }
    }
    throw InvalidConfig(fmt::format("unknown activation '{}'", name));
}

double activate(Activation a, double z) noexcept {
    switch (a) {
        case Activation::linear: return z;
        case Activation::relu: return z > 0.0 ? z : 0.0;
        case Activation::tanh: return std::tanh(z);
        case Activation::sigmoid: return 1.0 / (1.0 + std::exp(-z));
    }
    return z;
}

double activation_slope(Activation a, double y) noexcept {
    switch (a) {
        case Activation::linear: return 1.0;
        case Activation::relu: return y > 0.0 ? 1.0 : 0.0;
        case Activation::tanh: return 1.0 - y * y;
        case Activation::sigmoid: return y * (1.0 - y);
    }
    return 1.0;
}

void DenseLayer::apply(std::span<const double> in, std::span<double> out) const {
    for (std::size_t o = 0; o < outputs; ++o) {
        const double *w = weights.data() + o * inputs;
        double z = bias[o];
        for (std::size_t i = 0; i < inputs; ++i) {
            z += w[i] * in[i];
        }
        out[o] = activate(activation, z);
    }
}

// ---------------------------------------------------------------------------
// Mlp

Mlp::Mlp(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
    if (layers_.empty()) {
        throw InvalidConfig("network needs at least one layer");
    }
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const auto &layer = layers_[l];
        if (layer.inputs == 0 || layer.outputs == 0) {
            throw InvalidConfig(fmt::format("layer {} has a zero-width side", l));
        }
        if (layer.weights.size() != layer.inputs * layer.outputs || layer.bias.size() != layer.outputs) {
            throw InvalidConfig(fmt::format("layer {} parameter arrays do not match its shape", l));
        }
        if (l > 0 && layers_[l - 1].outputs != layer.inputs) {
            throw InvalidConfig(fmt::format("layer {} expects {} inputs but layer {} emits {}", l, layer.inputs, l - 1,
                                            layers_[l - 1].outputs));
        }
    }
}

Mlp Mlp::glorot(std::span<const std::size_t> widths, std::span<const Activation> activations, std::uint64_t seed) {
    if (widths.size() < 2 || activations.size() != widths.size() - 1) {
        throw InvalidConfig("glorot: need one activation per layer");
    }
    Rng rng(seed);
    std::vector<DenseLayer> layers;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        DenseLayer layer;
        layer.inputs = widths[l];
        layer.outputs = widths[l + 1];
        layer.activation = activations[l];
        const double limit = std::sqrt(6.0 / static_cast<double>(layer.inputs + layer.outputs));
        layer.weights.resize(layer.inputs * layer.outputs);
        for (auto &w : layer.weights) {
            w = rng.uniform(-limit, limit);
        }
        layer.bias.assign(layer.outputs, 0.0);
        layers.push_back(std::move(layer));
    }
    return Mlp(std::move(layers));
}

std::size_t Mlp::input_dim() const { return layers_.empty() ? 0 : layers_.front().inputs; }
std::size_t Mlp::output_dim() const { return layers_.empty() ? 0 : layers_.back().outputs; }

std::size_t Mlp::parameter_count() const {
    std::size_t n = 0;
    for (const auto &l : layers_) {
        n += l.weights.size() + l.bias.size();
    }
    return n;
}

std::vector<double> Mlp::forward(std::span<const double> x) const {
    if (x.size() != input_dim()) {
        throw DimensionMismatch("forward", input_dim(), x.size());
    }
    std::vector<double> cur(x.begin(), x.end());
    std::vector<double> next;
    for (const auto &layer : layers_) {
        next.assign(layer.outputs, 0.0);
        layer.apply(cur, next);
        cur.swap(next);
    }
    return cur;
}

Mlp::Trace Mlp::trace(std::span<const double> x) const {
    if (x.size() != input_dim()) {
        throw DimensionMismatch("forward", input_dim(), x.size());
    }
    Trace values;
    values.reserve(layers_.size() + 1);
    values.emplace_back(x.begin(), x.end());
    for (const auto &layer : layers_) {
        std::vector<double> out(layer.outputs);
        layer.apply(values.back(), out);
        values.push_back(std::move(out));
    }
    return values;
}

std::vector<double> Mlp::backward(const Trace &trace, std::span<const double> grad_out, Gradients *acc) const {
    std::vector<double> grad(grad_out.begin(), grad_out.end());
    for (std::size_t l = layers_.size(); l-- > 0;) {
        const auto &layer = layers_[l];
        const auto &in = trace[l];
        const auto &out = trace[l + 1];
        std::vector<double> delta(layer.outputs);
        for (std::size_t o = 0; o < layer.outputs; ++o) {
            delta[o] = grad[o] * activation_slope(layer.activation, out[o]);
        }
        std::vector<double> grad_in(layer.inputs, 0.0);
        for (std::size_t o = 0; o < layer.outputs; ++o) {
            const double *w = layer.weights.data() + o * layer.inputs;
            for (std::size_t i = 0; i < layer.inputs; ++i) {
                grad_in[i] += w[i] * delta[o];
            }
        }
        if (acc != nullptr) {
            auto &g = (*acc)[l];
            for (std::size_t o = 0; o < layer.outputs; ++o) {
                double *gw = g.weights.data() + o * layer.inputs;
                for (std::size_t i = 0; i < layer.inputs; ++i) {
                    gw[i] += delta[o] * in[i];
                }
                g.bias[o] += delta[o];
            }
        }
        grad.swap(grad_in);
    }
    return grad;
}

Gradients Mlp::zero_gradients() const {
    Gradients g(layers_.size());
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        g[l].weights.assign(layers_[l].weights.size(), 0.0);
        g[l].bias.assign(layers_[l].bias.size(), 0.0);
    }
    return g;
}

void Mlp::write(ByteWriter &w) const {
    w.u32(static_cast<std::uint32_t>(layers_.size()));
    for (const auto &layer : layers_) {
        w.u32(static_cast<std::uint32_t>(layer.inputs));
        w.u32(static_cast<std::uint32_t>(layer.outputs));
        w.u8(static_cast<std::uint8_t>(layer.activation));
        for (const double v : layer.weights) {
            w.f32(static_cast<float>(v));
        }
        for (const double v : layer.bias) {
            w.f32(static_cast<float>(v));
        }
    }
}

Mlp Mlp::read(ByteReader &r) {
    const auto n = r.u32();
    std::vector<DenseLayer> layers(n);
    for (auto &layer : layers) {
        layer.inputs = r.u32();
        layer.outputs = r.u32();
        const auto act = r.u8();
        if (act > static_cast<std::uint8_t>(Activation::sigmoid)) {
            throw DataError(fmt::format("unknown activation tag {}", act));
        }
        layer.activation = static_cast<Activation>(act);
        layer.weights.resize(layer.inputs * layer.outputs);
        for (auto &v : layer.weights) {
            v = r.f32();
        }
        layer.bias.resize(layer.outputs);
        for (auto &v : layer.bias) {
            v = r.f32();
        }
    }
    return Mlp(std::move(layers));
}

// ---------------------------------------------------------------------------
// Adam

Adam::Adam(const Mlp &net, double learning_rate, double beta1, double beta2, double eps)
    : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps), m_(net.zero_gradients()), v_(net.zero_gradients()) {}

void Adam::step(Mlp &net, const Gradients &grads) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    auto update = [&](std::vector<double> &param, const std::vector<double> &g, std::vector<double> &m, std::vector<double> &v) {
        for (std::size_t i = 0; i < param.size(); ++i) {
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
            param[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
        }
    };
    auto &layers = net.layers();
    for (std::size_t l = 0; l < layers.size(); ++l) {
        update(layers[l].weights, grads[l].weights, m_[l].weights, v_[l].weights);
        update(layers[l].bias, grads[l].bias, m_[l].bias, v_[l].bias);
    }
}

// ---------------------------------------------------------------------------
// Autoencoder

void AeConfig::validate() const {
    if (input_dim < 2) {
        throw InvalidConfig(fmt::format("autoencoder input_dim must be >= 2 (got {})", input_dim));
    }
    if (code_dim < 1) {
        throw InvalidConfig("autoencoder code_dim must be >= 1");
    }
    if (code_dim >= input_dim) {
        throw InvalidConfig(fmt::format("autoencoder code_dim {} must be below input_dim {}", code_dim, input_dim));
    }
    if (hidden_width < code_dim) {
        throw InvalidConfig(fmt::format("autoencoder hidden_width {} must be >= code_dim {}", hidden_width, code_dim));
    }
}

std::array<std::size_t, 5> AeConfig::widths() const { return {input_dim, hidden_width, code_dim, hidden_width, input_dim}; }

std::string AeConfig::describe() const {
    return fmt::format("{}-{}-{}/{}", input_dim, hidden_width, code_dim, to_string(activation));
}

void TrainConfig::validate() const {
    if (epochs < 1) {
        throw InvalidConfig("epochs must be >= 1");
    }
    if (batch_size < 1) {
        throw InvalidConfig("batch_size must be >= 1");
    }
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
        throw InvalidConfig("learning_rate must be a positive finite number");
    }
}

Autoencoder::Autoencoder(AeConfig config, Mlp network) : config_(config), net_(std::move(network)) {
    config_.validate();
    const auto w = config_.widths();
    const auto &layers = net_.layers();
    if (layers.size() != 4) {
        throw InvalidConfig("autoencoder needs exactly 4 layers");
    }
    for (std::size_t l = 0; l < 4; ++l) {
        if (layers[l].inputs != w[l] || layers[l].outputs != w[l + 1]) {
            throw InvalidConfig(fmt::format("autoencoder layer {} shape {}x{} does not match config {}", l, layers[l].outputs,
                                            layers[l].inputs, config_.describe()));
        }
    }
}

Autoencoder::Output Autoencoder::forward(std::span<const double> x) const {
    check_finite(x, "autoencoder forward");
    auto t = net_.trace(x);
    return {std::move(t[2]), std::move(t[4])};
}

std::vector<double> Autoencoder::encode(std::span<const double> x) const {
    if (x.size() != config_.input_dim) {
        throw DimensionMismatch("encode", config_.input_dim, x.size());
    }
    std::vector<double> h(config_.hidden_width);
    std::vector<double> code(config_.code_dim);
    net_.layers()[0].apply(x, h);
    net_.layers()[1].apply(h, code);
    return code;
}

Mlp Autoencoder::encoder() const {
    return Mlp(std::vector<DenseLayer>{net_.layers()[0], net_.layers()[1]});
}

Autoencoder init_autoencoder(const AeConfig &cfg, std::uint64_t seed) {
    cfg.validate();
    const auto w = cfg.widths();
    const std::array<Activation, 4> acts{cfg.activation, cfg.activation, cfg.activation, Activation::linear};
    return Autoencoder(cfg, Mlp::glorot(w, acts, seed));
}

double loss_mse(std::span<const double> reconstruction, std::span<const double> x) {
    if (reconstruction.size() != x.size()) {
        throw DimensionMismatch("loss_mse", x.size(), reconstruction.size());
    }
    if (x.empty()) {
        return 0.0;
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = reconstruction[i] - x[i];
        sum += d * d;
    }
    return sum / static_cast<double>(x.size());
}

namespace {

// Sum over `rows` of per-row loss, gradients accumulated unscaled.
double accumulate_ae(const Mlp &net, const Matrix &x, std::span<const std::size_t> rows, Gradients &acc) {
    const double n = static_cast<double>(x.cols());
    double total = 0.0;
    std::vector<double> grad_out(x.cols());
    for (const auto r : rows) {
        const auto input = x.row(r);
        const auto t = net.trace(input);
        const auto &rec = t.back();
        total += loss_mse(rec, input);
        for (std::size_t i = 0; i < grad_out.size(); ++i) {
            grad_out[i] = 2.0 * (rec[i] - input[i]) / n;
        }
        net.backward(t, grad_out, &acc);
    }
    return total;
}

std::vector<std::size_t> iota_rows(std::size_t n) {
    std::vector<std::size_t> rows(n);
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    return rows;
}

}  // namespace

double batch_loss(const Autoencoder &ae, const Matrix &batch) {
    if (batch.cols() != ae.config().input_dim) {
        throw DimensionMismatch("batch_loss", ae.config().input_dim, batch.cols());
    }
    if (batch.empty()) {
        throw DataError("batch_loss: empty batch");
    }
    double total = 0.0;
    for (std::size_t r = 0; r < batch.rows(); ++r) {
        total += loss_mse(ae.forward(batch.row(r)).reconstruction, batch.row(r));
    }
    return total / static_cast<double>(batch.rows());
}

Gradients gradients(const Autoencoder &ae, const Matrix &batch) {
    if (batch.cols() != ae.config().input_dim) {
        throw DimensionMismatch("gradients", ae.config().input_dim, batch.cols());
    }
    if (batch.empty()) {
        throw DataError("gradients: empty batch");
    }
    auto g = ae.network().zero_gradients();
    const auto rows = iota_rows(batch.rows());
    accumulate_ae(ae.network(), batch, rows, g);
    scale_gradients(g, 1.0 / static_cast<double>(batch.rows()));
    return g;
}

AeTrainResult train_autoencoder(Autoencoder ae, const Matrix &x, const TrainConfig &tc) {
    tc.validate();
    if (x.empty()) {
        throw DataError("train_autoencoder: empty dataset");
    }
    if (x.cols() != ae.config().input_dim) {
        throw DimensionMismatch("train_autoencoder", ae.config().input_dim, x.cols());
    }
    Rng rng(tc.seed);
    Adam adam(ae.network(), tc.learning_rate);
    auto order = iota_rows(x.rows());
    std::vector<double> history;
    history.reserve(tc.epochs);
    for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
        rng.shuffle(std::span(order));
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += tc.batch_size) {
            const auto stop = std::min(order.size(), start + tc.batch_size);
            const std::span<const std::size_t> batch(order.data() + start, stop - start);
            auto g = ae.network().zero_gradients();
            epoch_loss += accumulate_ae(ae.network(), x, batch, g);
            scale_gradients(g, 1.0 / static_cast<double>(batch.size()));
            adam.step(ae.network(), g);
        }
        history.push_back(epoch_loss / static_cast<double>(x.rows()));
    }
    return {std::move(ae), std::move(history)};
}

// ---------------------------------------------------------------------------
// Surrogate

Surrogate::Surrogate(Mlp network) : net_(std::move(network)) {
    if (net_.output_dim() != 2) {
        throw InvalidConfig(fmt::format("surrogate must have 2 outputs (got {})", net_.output_dim()));
    }
    if (net_.layers().back().activation != Activation::linear) {
        throw InvalidConfig("surrogate output layer must be linear (softmax is applied on top)");
    }
}

std::array<double, 2> Surrogate::probabilities(std::span<const double> x) const { return softmax2(net_.forward(x)); }

Label Surrogate::predict(std::span<const double> x) const {
    const auto p = probabilities(x);
    return p[1] > p[0] ? kAttack : kBenign;
}

Matrix Surrogate::input_jacobian(std::span<const double> x) const {
    const auto t = net_.trace(x);
    const auto p = softmax2(t.back());
    Matrix jac(2, x.size());
    for (std::size_t c = 0; c < 2; ++c) {
        // dP_c/dz_k = P_c (delta_ck - P_k)
        const std::array<double, 2> dz{p[c] * ((c == 0 ? 1.0 : 0.0) - p[0]), p[c] * ((c == 1 ? 1.0 : 0.0) - p[1])};
        const auto dx = net_.backward(t, dz, nullptr);
        std::copy(dx.begin(), dx.end(), jac.row(c).begin());
    }
    return jac;
}

namespace {

double accumulate_ce(const Mlp &net, const Matrix &x, std::span<const Label> y, std::span<const std::size_t> rows, Gradients *acc) {
    double total = 0.0;
    for (const auto r : rows) {
        const auto t = net.trace(x.row(r));
        const auto p = softmax2(t.back());
        const auto label = y[r];
        total -= std::log(std::max(p[label], 1e-300));
        if (acc != nullptr) {
            const std::array<double, 2> dz{p[0] - (label == 0 ? 1.0 : 0.0), p[1] - (label == 1 ? 1.0 : 0.0)};
            net.backward(t, dz, acc);
        }
    }
    return total;
}

void check_labels(const Matrix &x, std::span<const Label> y, std::size_t input_dim) {
    if (x.rows() != y.size()) {
        throw DimensionMismatch("classifier labels", x.rows(), y.size());
    }
    if (x.cols() != input_dim) {
        throw DimensionMismatch("classifier inputs", input_dim, x.cols());
    }
}

}  // namespace

double Surrogate::loss(const Matrix &x, std::span<const Label> y) const {
    check_labels(x, y, input_dim());
    const auto rows = iota_rows(x.rows());
    return accumulate_ce(net_, x, y, rows, nullptr) / static_cast<double>(x.rows());
}

Gradients Surrogate::gradients(const Matrix &x, std::span<const Label> y) const {
    check_labels(x, y, input_dim());
    auto g = net_.zero_gradients();
    const auto rows = iota_rows(x.rows());
    accumulate_ce(net_, x, y, rows, &g);
    scale_gradients(g, 1.0 / static_cast<double>(x.rows()));
    return g;
}

Surrogate train_classifier(const Matrix &x, std::span<const Label> y, std::size_t hidden_width, const TrainConfig &tc) {
    tc.validate();
    if (x.empty()) {
        throw DataError("train_classifier: empty dataset");
    }
    if (hidden_width < 1) {
        throw InvalidConfig("surrogate hidden_width must be >= 1");
    }
    check_labels(x, y, x.cols());
    std::array<std::size_t, 2> counts{};
    for (const auto label : y) {
        if (label > 1) {
            throw DataError(fmt::format("train_classifier: non-binary label {}", label));
        }
        ++counts[label];
    }
    if (counts[0] == 0 || counts[1] == 0) {
        throw DataError("train_classifier: training labels contain a single class");
    }

    const std::array<std::size_t, 3> widths{x.cols(), hidden_width, 2};
    const std::array<Activation, 2> acts{Activation::tanh, Activation::linear};
    Surrogate model(Mlp::glorot(widths, acts, mix_seed(tc.seed, 1)));
    Rng rng(mix_seed(tc.seed, 2));
    Adam adam(model.network(), tc.learning_rate);
    auto order = iota_rows(x.rows());
    for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
        rng.shuffle(std::span(order));
        for (std::size_t start = 0; start < order.size(); start += tc.batch_size) {
            const auto stop = std::min(order.size(), start + tc.batch_size);
            const std::span<const std::size_t> batch(order.data() + start, stop - start);
            auto g = model.network().zero_gradients();
            accumulate_ce(model.network(), x, y, batch, &g);
            scale_gradients(g, 1.0 / static_cast<double>(batch.size()));
            adam.step(model.network(), g);
        }
    }
    return model;
}

// ---------------------------------------------------------------------------
// Serialization

std::string serialize(const Autoencoder &ae) {
    ByteWriter w;
    w.raw("RMAE");
    w.u8(kFormatVersion);
    const auto &c = ae.config();
    w.u32(static_cast<std::uint32_t>(c.input_dim));
    w.u32(static_cast<std::uint32_t>(c.hidden_width));
    w.u32(static_cast<std::uint32_t>(c.code_dim));
    w.u8(static_cast<std::uint8_t>(c.activation));
    ae.network().write(w);
    return std::move(w).bytes();
}

Autoencoder deserialize_autoencoder(std::string_view bytes) {
    ByteReader r(bytes);
    r.expect("RMAE", "autoencoder");
    if (const auto v = r.u8(); v != kFormatVersion) {
        throw DataError(fmt::format("unsupported autoencoder format version {}", v));
    }
    AeConfig c;
    c.input_dim = r.u32();
    c.hidden_width = r.u32();
    c.code_dim = r.u32();
    c.activation = static_cast<Activation>(r.u8());
    return Autoencoder(c, Mlp::read(r));
}

std::string serialize(const Surrogate &s) {
    ByteWriter w;
    w.raw("RMSG");
    w.u8(kFormatVersion);
    s.network().write(w);
    return std::move(w).bytes();
}

Surrogate deserialize_surrogate(std::string_view bytes) {
    ByteReader r(bytes);
    r.expect("RMSG", "surrogate");
    if (const auto v = r.u8(); v != kFormatVersion) {
        throw DataError(fmt::format("unsupported surrogate format version {}", v));
    }
    return Surrogate(Mlp::read(r));
}

}  // namespace reml
