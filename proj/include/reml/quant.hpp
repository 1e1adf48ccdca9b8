#pragma once

#include "reml/core.hpp"
#include "reml/nn.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace reml {

enum class QuantScheme : std::uint8_t { symmetric_weight, affine_activation };

struct QuantRange {
    double lo = 0.0;
    double hi = 0.0;
};

/// Ties go to the even neighbour.
double round_half_even(double v) noexcept;

/// Scale/zero-point pair: real = scale * (q - zero_point).
struct QuantParams {
    double scale = 1.0;
    std::int8_t zero_point = 0;

    std::int8_t quantize(double v) const noexcept;
    double dequantize(std::int8_t q) const noexcept { return scale * (static_cast<int>(q) - zero_point); }

    static QuantParams symmetric(double max_abs) noexcept;
    /// The range is widened to include zero so that zero is exactly representable.
    static QuantParams affine(double lo, double hi) noexcept;

    friend bool operator==(const QuantParams &, const QuantParams &) = default;
};

struct QTensor {
    std::vector<std::int8_t> values;
    QuantParams params;
    std::size_t rows = 0;
    std::size_t cols = 0;

    std::vector<double> dequantize() const;
    friend bool operator==(const QTensor &, const QTensor &) = default;
};

QTensor quantize_tensor(std::span<const double> values, QuantScheme scheme, QuantRange range, std::size_t rows,
                        std::size_t cols);
/// Range taken from the values themselves (max |v| or [min, max]).
QTensor quantize_tensor(std::span<const double> values, QuantScheme scheme);

struct QuantizedLayer {
    QTensor weights;
    std::vector<float> bias;  // binary16-representable
    Activation activation = Activation::linear;
    QuantParams output;

    friend bool operator==(const QuantizedLayer &, const QuantizedLayer &) = default;
};

/// int8 encoder half of an autoencoder.
struct QuantizedEncoder {
    AeConfig config;
    QuantParams input;
    std::vector<QuantizedLayer> layers;

    friend bool operator==(const QuantizedEncoder &, const QuantizedEncoder &) = default;
};

inline constexpr std::size_t kMinCalibrationRows = 32;

QuantizedEncoder compress_encoder(const Autoencoder &ae, const Matrix &calibration);
std::vector<double> q_encode(const QuantizedEncoder &qe, std::span<const double> x);

std::string serialize(const QuantizedEncoder &qe);
QuantizedEncoder deserialize_quantized_encoder(std::string_view bytes);
void write_quantized_encoder(ByteWriter &w, const QuantizedEncoder &qe);
QuantizedEncoder read_quantized_encoder(ByteReader &r);

/// Same header layout with float32 parameters; the size baseline for compression.
std::string serialize_float_encoder(const Autoencoder &ae);

}  // namespace reml
