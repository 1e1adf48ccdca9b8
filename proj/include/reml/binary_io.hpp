#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

namespace reml {

/// Little-endian byte sink used by every model file format.
class ByteWriter {
public:
    void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
    void i8(std::int8_t v) { u8(static_cast<std::uint8_t>(v)); }
    void u16(std::uint16_t v);
    void u32(std::uint32_t v);
    void u64(std::uint64_t v);
    void f16(float v);
    void f32(float v);
    void f64(double v);
    void str(std::string_view s);
    void raw(std::string_view bytes) { buf_.append(bytes); }

    std::size_t size() const noexcept { return buf_.size(); }
    const std::string &bytes() const & noexcept { return buf_; }
    std::string bytes() && noexcept { return std::move(buf_); }

private:
    std::string buf_;
};

class ByteReader {
public:
    explicit ByteReader(std::string_view bytes) : data_(bytes) {}

    std::uint8_t u8();
    std::int8_t i8() { return static_cast<std::int8_t>(u8()); }
    std::uint16_t u16();
    std::uint32_t u32();
    std::uint64_t u64();
    float f16();
    float f32();
    double f64();
    std::string str();
    std::string_view raw(std::size_t n);

    /// Consumes `magic` or throws DataError naming `what`.
    void expect(std::string_view magic, std::string_view what);
    bool at_end() const noexcept { return pos_ == data_.size(); }

private:
    std::string_view take(std::size_t n);

    std::string_view data_;
    std::size_t pos_ = 0;
};

/// IEEE binary16 conversion, round-to-nearest-even.
std::uint16_t float_to_half_bits(float v) noexcept;
float half_bits_to_float(std::uint16_t h) noexcept;
inline float round_to_half(float v) noexcept { return half_bits_to_float(float_to_half_bits(v)); }

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) noexcept;
std::string hex64(std::uint64_t v);

std::string read_file(const std::filesystem::path &path);
void write_file(const std::filesystem::path &path, std::string_view bytes);

}  // namespace reml
