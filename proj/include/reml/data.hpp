#pragma once

#include "reml/core.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace reml {

/// Feature matrix with binary labels (benign=0, attack=1).
struct Dataset {
    Matrix features;
    std::vector<Label> labels;
    std::vector<std::string> feature_names;
    bool normalized = false;

    std::size_t rows() const noexcept { return features.rows(); }
    std::size_t dim() const noexcept { return features.cols(); }
    std::span<const double> row(std::size_t r) const { return features.row(r); }
    std::size_t count(Label label) const;

    /// Shapes agree, values finite, labels binary; normalized sets lie in [0,1].
    void validate() const;
    Dataset subset(std::span<const std::size_t> rows) const;

    friend bool operator==(const Dataset &, const Dataset &) = default;
};

Dataset concat(const Dataset &a, const Dataset &b);
std::uint64_t fingerprint(const Dataset &ds);

struct RawTable {
    Matrix features;
    std::vector<std::string> labels;
    std::vector<std::string> feature_names;
    std::string label_name;
    std::size_t total_rows = 0;
    std::size_t dropped_rows = 0;  // non-numeric, NaN or infinite feature values
};

/// `label_column` is a header name, a 0-based index, or "last".
RawTable parse_csv(std::string_view text, bool has_header, std::string_view label_column, std::string_view source = "<memory>");
RawTable load_csv(const std::filesystem::path &path, bool has_header, std::string_view label_column);

/// Raw label string -> {0,1}. Keys compare trimmed and case-insensitively.
class LabelMap {
public:
    LabelMap() = default;
    explicit LabelMap(std::map<std::string, Label> entries);

    /// Lines of `label = 0|1` (or `label,0|1`); '#' starts a comment.
    static LabelMap parse(std::string_view text);
    static LabelMap load(const std::filesystem::path &path);
    /// no-event and natural-event variants map to benign, attack variants to malicious.
    static LabelMap ics_default();
    static LabelMap identity();

    Label at(std::string_view raw) const;
    bool contains(std::string_view raw) const;
    const std::map<std::string, Label> &entries() const noexcept { return entries_; }
    std::string to_text() const;

private:
    std::map<std::string, Label> entries_;
};

std::vector<Label> binarize_labels(std::span<const std::string> raw, const LabelMap &map);
Dataset make_dataset(const RawTable &table, const LabelMap &map);

struct Normalizer {
    std::vector<double> min;
    std::vector<double> max;

    bool is_constant(std::size_t j) const { return !(max[j] > min[j]); }
    friend bool operator==(const Normalizer &, const Normalizer &) = default;
};

/// Per-feature min/max; call on the training split only.
Normalizer fit_normalizer(const Dataset &train);
/// (x - min) / (max - min) clipped to [0,1]; constant features map to 0.
Dataset apply_normalizer(const Normalizer &nz, const Dataset &ds);

struct Split {
    Dataset train;
    Dataset test;
    std::vector<std::size_t> train_rows;
    std::vector<std::size_t> test_rows;
};

Split stratified_split(const Dataset &ds, double train_fraction, std::uint64_t seed);

/// Desk-scale stand-in for the power-system data: two Gaussian clusters that
/// differ on a subset of features (attack lower), a quadratic-interaction
/// component on a feature pair, label noise, and per-feature physical units.
class SynthGenerator {
public:
    SynthGenerator(std::size_t d, double class_sep, double noise, std::uint64_t layout_seed);

    /// With `shifted`, attack rows move to the mirror side of the benign
    /// cluster on the informative features (used to inject concept drift).
    Dataset sample(std::size_t n_rows, std::uint64_t sample_seed, bool shifted = false) const;

    const std::vector<std::size_t> &informative() const noexcept { return informative_; }

private:
    std::size_t d_;
    double sep_;
    double noise_;
    std::vector<std::size_t> informative_;
    std::size_t quad_src_ = 0;
    std::size_t quad_dst_ = 0;
    std::vector<double> offset_;
    std::vector<double> scale_;
};

Dataset synth_icslike(std::size_t n_rows, std::size_t d, double class_sep, double noise, std::uint64_t seed);

/// Features plus a trailing label column; numbers use shortest round-trip form.
void write_csv(const std::filesystem::path &path, const Dataset &ds, const std::vector<std::string> *label_text = nullptr,
               std::string_view label_name = "label");
std::string to_csv(const Dataset &ds, const std::vector<std::string> *label_text = nullptr,
                   std::string_view label_name = "label");
/// Reads a file written by write_csv with numeric 0/1 labels.
Dataset read_dataset_csv(const std::filesystem::path &path);

}  // namespace reml
