#include "reml/quant.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>

namespace reml {

namespace {

constexpr std::uint8_t kFormatVersion = 1;

// Scales are stored as float32; rounding them at construction keeps
// deserialized models bit-identical to in-memory ones.
double storable(double v) noexcept { return static_cast<double>(static_cast<float>(v)); }

void write_header(ByteWriter &w, std::string_view magic, const AeConfig &c) {
    if (c.input_dim > 0xffff || c.hidden_width > 0xffff) {
        throw InvalidConfig("encoder widths above 65535 are not serializable");
    }
    w.raw(magic);
    w.u8(kFormatVersion);
    w.u16(static_cast<std::uint16_t>(c.input_dim));
    w.u16(static_cast<std::uint16_t>(c.hidden_width));
    w.u16(static_cast<std::uint16_t>(c.code_dim));
    w.u8(static_cast<std::uint8_t>(c.activation));
}

AeConfig read_header(ByteReader &r, std::string_view magic) {
    r.expect(magic, "quantized encoder");
    if (const auto v = r.u8(); v != kFormatVersion) {
        throw DataError(fmt::format("unsupported encoder format version {}", v));
    }
    AeConfig c;
    c.input_dim = r.u16();
    c.hidden_width = r.u16();
    c.code_dim = r.u16();
    const auto act = r.u8();
    if (act > static_cast<std::uint8_t>(Activation::sigmoid)) {
        throw DataError(fmt::format("unknown activation tag {}", act));
    }
    c.activation = static_cast<Activation>(act);
    c.validate();
    return c;
}

void write_params(ByteWriter &w, const QuantParams &p) {
    w.f32(static_cast<float>(p.scale));
    w.i8(p.zero_point);
}

QuantParams read_params(ByteReader &r) {
    QuantParams p;
    p.scale = r.f32();
    p.zero_point = r.i8();
    if (!(p.scale > 0.0) || !std::isfinite(p.scale)) {
        throw DataError("quantized encoder has a non-positive scale");
    }
    return p;
}

}  // namespace

double round_half_even(double v) noexcept {
    const double r = std::round(v);
    if (std::abs(v - std::trunc(v)) == 0.5) {
        return 2.0 * std::round(v / 2.0);
    }
    return r;
}

std::int8_t QuantParams::quantize(double v) const noexcept {
    const double q = round_half_even(v / scale) + zero_point;
    return static_cast<std::int8_t>(std::clamp(q, -128.0, 127.0));
}

QuantParams QuantParams::symmetric(double max_abs) noexcept {
    if (!(max_abs > 0.0)) {
        return {1.0, 0};
    }
    return {storable(max_abs / 127.0), 0};
}

QuantParams QuantParams::affine(double lo, double hi) noexcept {
    lo = std::min(lo, 0.0);
    hi = std::max(hi, 0.0);
    if (!(hi > lo)) {
        return {1.0, 0};
    }
    const double scale = storable((hi - lo) / 255.0);
    const double zp = std::clamp(round_half_even(-128.0 - lo / scale), -128.0, 127.0);
    return {scale, static_cast<std::int8_t>(zp)};
}

std::vector<double> QTensor::dequantize() const {
    std::vector<double> out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        out[i] = params.dequantize(values[i]);
    }
    return out;
}

QTensor quantize_tensor(std::span<const double> values, QuantScheme scheme, QuantRange range, std::size_t rows,
                        std::size_t cols) {
    if (values.size() != rows * cols) {
        throw DimensionMismatch("quantize_tensor", rows * cols, values.size());
    }
    QTensor t;
    t.rows = rows;
    t.cols = cols;
    t.params = scheme == QuantScheme::symmetric_weight
                   ? QuantParams::symmetric(std::max(std::abs(range.lo), std::abs(range.hi)))
                   : QuantParams::affine(range.lo, range.hi);
    t.values.reserve(values.size());
    for (const double v : values) {
        t.values.push_back(t.params.quantize(v));
    }
    return t;
}

QTensor quantize_tensor(std::span<const double> values, QuantScheme scheme) {
    QuantRange range{};
    if (!values.empty()) {
        const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
        range = {*lo, *hi};
    }
    return quantize_tensor(values, scheme, range, 1, values.size());
}

QuantizedEncoder compress_encoder(const Autoencoder &ae, const Matrix &calibration) {
    const auto &cfg = ae.config();
    if (calibration.empty()) {
        throw DataError("compress_encoder: empty calibration set");
    }
    if (calibration.rows() < kMinCalibrationRows) {
        throw DataError(fmt::format("compress_encoder: need at least {} calibration rows (got {})", kMinCalibrationRows,
                                    calibration.rows()));
    }
    if (calibration.cols() != cfg.input_dim) {
        throw DimensionMismatch("compress_encoder", cfg.input_dim, calibration.cols());
    }

    const Mlp encoder = ae.encoder();
    const auto &float_layers = encoder.layers();
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<QuantRange> ranges(float_layers.size() + 1, QuantRange{inf, -inf});
    for (std::size_t r = 0; r < calibration.rows(); ++r) {
        const auto t = encoder.trace(calibration.row(r));
        for (std::size_t l = 0; l < t.size(); ++l) {
            for (const double v : t[l]) {
                ranges[l].lo = std::min(ranges[l].lo, v);
                ranges[l].hi = std::max(ranges[l].hi, v);
            }
        }
    }

    QuantizedEncoder qe;
    qe.config = cfg;
    qe.input = QuantParams::affine(ranges[0].lo, ranges[0].hi);
    for (std::size_t l = 0; l < float_layers.size(); ++l) {
        const auto &fl = float_layers[l];
        QuantizedLayer ql;
        ql.weights = quantize_tensor(fl.weights, QuantScheme::symmetric_weight);
        ql.weights.rows = fl.outputs;
        ql.weights.cols = fl.inputs;
        ql.bias.reserve(fl.bias.size());
        for (const double b : fl.bias) {
            ql.bias.push_back(round_to_half(static_cast<float>(b)));
        }
        ql.activation = fl.activation;
        ql.output = QuantParams::affine(ranges[l + 1].lo, ranges[l + 1].hi);
        qe.layers.push_back(std::move(ql));
    }
    return qe;
}

std::vector<double> q_encode(const QuantizedEncoder &qe, std::span<const double> x) {
    if (x.size() != qe.config.input_dim) {
        throw DimensionMismatch("q_encode", qe.config.input_dim, x.size());
    }
    std::vector<std::int8_t> cur(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        cur[i] = qe.input.quantize(x[i]);
    }
    const QuantParams *in_params = &qe.input;
    std::vector<std::int8_t> next;
    for (const auto &layer : qe.layers) {
        const auto &w = layer.weights;
        const int in_zp = in_params->zero_point;
        const double rescale = w.params.scale * in_params->scale;
        next.assign(w.rows, 0);
        for (std::size_t o = 0; o < w.rows; ++o) {
            const std::int8_t *wr = w.values.data() + o * w.cols;
            std::int32_t acc = 0;
            for (std::size_t i = 0; i < w.cols; ++i) {
                acc += static_cast<std::int32_t>(wr[i]) * (static_cast<std::int32_t>(cur[i]) - in_zp);
            }
            const double z = static_cast<double>(acc) * rescale + static_cast<double>(layer.bias[o]);
            next[o] = layer.output.quantize(activate(layer.activation, z));
        }
        cur.swap(next);
        in_params = &layer.output;
    }
    std::vector<double> code(cur.size());
    for (std::size_t i = 0; i < cur.size(); ++i) {
        code[i] = in_params->dequantize(cur[i]);
    }
    return code;
}

void write_quantized_encoder(ByteWriter &w, const QuantizedEncoder &qe) {
    write_header(w, "RMQE", qe.config);
    write_params(w, qe.input);
    for (const auto &layer : qe.layers) {
        write_params(w, layer.weights.params);
        for (const auto q : layer.weights.values) {
            w.i8(q);
        }
        for (const float b : layer.bias) {
            w.f16(b);
        }
        write_params(w, layer.output);
    }
}

QuantizedEncoder read_quantized_encoder(ByteReader &r) {
    QuantizedEncoder qe;
    qe.config = read_header(r, "RMQE");
    qe.input = read_params(r);
    const std::array<std::size_t, 3> widths{qe.config.input_dim, qe.config.hidden_width, qe.config.code_dim};
    for (std::size_t l = 0; l < 2; ++l) {
        QuantizedLayer layer;
        layer.weights.params = read_params(r);
        layer.weights.rows = widths[l + 1];
        layer.weights.cols = widths[l];
        layer.weights.values.resize(layer.weights.rows * layer.weights.cols);
        for (auto &q : layer.weights.values) {
            q = r.i8();
        }
        layer.bias.resize(layer.weights.rows);
        for (auto &b : layer.bias) {
            b = r.f16();
        }
        layer.activation = qe.config.activation;
        layer.output = read_params(r);
        qe.layers.push_back(std::move(layer));
    }
    return qe;
}

std::string serialize(const QuantizedEncoder &qe) {
    ByteWriter w;
    write_quantized_encoder(w, qe);
    return std::move(w).bytes();
}

QuantizedEncoder deserialize_quantized_encoder(std::string_view bytes) {
    ByteReader r(bytes);
    return read_quantized_encoder(r);
}

std::string serialize_float_encoder(const Autoencoder &ae) {
    ByteWriter w;
    write_header(w, "RMFE", ae.config());
    for (std::size_t l = 0; l < 2; ++l) {
        const auto &layer = ae.network().layers()[l];
        for (const double v : layer.weights) {
            w.f32(static_cast<float>(v));
        }
        for (const double v : layer.bias) {
            w.f32(static_cast<float>(v));
        }
    }
    return std::move(w).bytes();
}

}  // namespace reml
