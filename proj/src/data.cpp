#include "reml/data.hpp"
#include "reml/binary_io.hpp"
#include "reml/random.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <numeric>

namespace reml {

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

std::string_view unquote(std::string_view s) {
    s = trim(s);
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') {
        s = s.substr(1, s.size() - 2);
    }
    return s;
}

std::string normalize_key(std::string_view s) {
    std::string out(unquote(s));
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            fields.push_back(unquote(line.substr(start)));
            break;
        }
        fields.push_back(unquote(line.substr(start, comma - start)));
        start = comma + 1;
    }
    return fields;
}

bool parse_double(std::string_view s, double &out) {
    if (s.empty()) {
        return false;
    }
    if (s.front() == '+') {
        s.remove_prefix(1);
    }
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && ptr == s.data() + s.size();
}

std::size_t resolve_label_column(std::string_view spec, const std::vector<std::string_view> &header, std::size_t width,
                                 std::string_view source) {
    if (spec.empty() || spec == "last" || spec == "-1") {
        return width - 1;
    }
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == spec) {
            return i;
        }
    }
    std::size_t idx = 0;
    const auto [ptr, ec] = std::from_chars(spec.data(), spec.data() + spec.size(), idx);
    if (ec == std::errc{} && ptr == spec.data() + spec.size() && idx < width) {
        return idx;
    }
    throw DataError(fmt::format("{}: label column '{}' not found", source, spec));
}

}  // namespace

// ---------------------------------------------------------------------------
// Dataset

std::size_t Dataset::count(Label label) const { return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), label)); }

void Dataset::validate() const {
    if (labels.size() != features.rows()) {
        throw DataError(fmt::format("dataset has {} rows but {} labels", features.rows(), labels.size()));
    }
    if (!feature_names.empty() && feature_names.size() != features.cols()) {
        throw DataError(fmt::format("dataset has {} features but {} names", features.cols(), feature_names.size()));
    }
    for (const auto label : labels) {
        if (label > 1) {
            throw DataError(fmt::format("non-binary label {}", label));
        }
    }
    for (const double v : features.data()) {
        if (!std::isfinite(v)) {
            throw DataError("dataset contains a non-finite feature value");
        }
        if (normalized && (v < 0.0 || v > 1.0)) {
            throw DataError(fmt::format("normalized dataset has value {} outside [0,1]", v));
        }
    }
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
    Dataset out;
    out.features = features.select_rows(rows);
    out.labels.reserve(rows.size());
    for (const auto r : rows) {
        out.labels.push_back(labels[r]);
    }
    out.feature_names = feature_names;
    out.normalized = normalized;
    return out;
}

Dataset concat(const Dataset &a, const Dataset &b) {
    if (a.dim() != b.dim()) {
        throw DimensionMismatch("concat", a.dim(), b.dim());
    }
    Dataset out = a;
    for (std::size_t r = 0; r < b.rows(); ++r) {
        out.features.append_row(b.row(r));
    }
    out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
    out.normalized = a.normalized && b.normalized;
    return out;
}

std::uint64_t fingerprint(const Dataset &ds) {
    ByteWriter w;
    w.u64(ds.rows());
    w.u64(ds.dim());
    for (const double v : ds.features.data()) {
        w.f64(v);
    }
    for (const auto label : ds.labels) {
        w.u8(label);
    }
    return fnv1a64(w.bytes());
}

// ---------------------------------------------------------------------------
// CSV ingestion

RawTable parse_csv(std::string_view text, bool has_header, std::string_view label_column, std::string_view source) {
    RawTable table;
    std::size_t width = 0;
    std::size_t label_idx = 0;
    std::size_t line_no = 0;
    bool header_pending = has_header;
    std::vector<double> row;

    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) {
            end = text.size();
        }
        const auto line = trim(text.substr(pos, end - pos));
        pos = end + 1;
        ++line_no;
        if (line.empty() || line.front() == '#') {
            if (end == text.size()) {
                break;
            }
            continue;
        }
        const auto fields = split_fields(line);
        if (width == 0) {
            width = fields.size();
            if (width < 2) {
                throw DataError(fmt::format("{}:{}: need at least one feature column and a label column", source, line_no));
            }
            label_idx = resolve_label_column(label_column, header_pending ? fields : std::vector<std::string_view>{}, width, source);
            if (header_pending) {
                for (std::size_t i = 0; i < width; ++i) {
                    if (i == label_idx) {
                        table.label_name = std::string(fields[i]);
                    } else {
                        table.feature_names.emplace_back(fields[i]);
                    }
                }
                header_pending = false;
                continue;
            }
            for (std::size_t i = 0; i + 1 < width; ++i) {
                table.feature_names.push_back(fmt::format("f{}", i));
            }
            table.label_name = "label";
        }
        if (fields.size() != width) {
            throw DataError(fmt::format("{}:{}: ragged row with {} fields (expected {})", source, line_no, fields.size(), width));
        }
        ++table.total_rows;
        row.clear();
        bool clean = true;
        for (std::size_t i = 0; i < width && clean; ++i) {
            if (i == label_idx) {
                continue;
            }
            double v = 0.0;
            clean = parse_double(fields[i], v) && std::isfinite(v);
            row.push_back(v);
        }
        if (!clean) {
            ++table.dropped_rows;
            continue;
        }
        table.features.append_row(row);
        table.labels.emplace_back(fields[label_idx]);
        if (end == text.size()) {
            break;
        }
    }
    if (table.features.rows() == 0) {
        throw DataError(fmt::format("{}: no usable rows ({} read, {} dropped)", source, table.total_rows, table.dropped_rows));
    }
    return table;
}

RawTable load_csv(const std::filesystem::path &path, bool has_header, std::string_view label_column) {
    if (!std::filesystem::exists(path)) {
        throw DataError(fmt::format("missing file '{}'", path.string()));
    }
    return parse_csv(read_file(path), has_header, label_column, path.string());
}

// ---------------------------------------------------------------------------
// Labels

LabelMap::LabelMap(std::map<std::string, Label> entries) {
    for (auto &[k, v] : entries) {
        if (v > 1) {
            throw InvalidConfig(fmt::format("label map value for '{}' must be 0 or 1", k));
        }
        entries_.emplace(normalize_key(k), v);
    }
}

LabelMap LabelMap::parse(std::string_view text) {
    std::map<std::string, Label> entries;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) {
            end = text.size();
        }
        auto line = trim(text.substr(pos, end - pos));
        pos = end + 1;
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) {
            line = trim(line.substr(0, hash));
        }
        if (line.empty()) {
            continue;
        }
        auto sep = line.rfind('=');
        if (sep == std::string_view::npos) {
            sep = line.rfind(',');
        }
        if (sep == std::string_view::npos) {
            throw InvalidConfig(fmt::format("label map line {}: expected 'label = 0|1'", line_no));
        }
        const auto value = trim(line.substr(sep + 1));
        if (value != "0" && value != "1") {
            throw InvalidConfig(fmt::format("label map line {}: value must be 0 or 1", line_no));
        }
        entries[normalize_key(line.substr(0, sep))] = value == "1" ? kAttack : kBenign;
    }
    if (entries.empty()) {
        throw InvalidConfig("label map is empty");
    }
    return LabelMap(std::move(entries));
}

LabelMap LabelMap::load(const std::filesystem::path &path) { return parse(read_file(path)); }

LabelMap LabelMap::ics_default() {
    return LabelMap({{"no event", kBenign},
                     {"noevents", kBenign},
                     {"no events", kBenign},
                     {"natural", kBenign},
                     {"natural event", kBenign},
                     {"attack", kAttack},
                     {"attack event", kAttack}});
}

LabelMap LabelMap::identity() { return LabelMap({{"0", kBenign}, {"1", kAttack}}); }

bool LabelMap::contains(std::string_view raw) const { return entries_.contains(normalize_key(raw)); }

Label LabelMap::at(std::string_view raw) const {
    const auto it = entries_.find(normalize_key(raw));
    if (it == entries_.end()) {
        throw DataError(fmt::format("unmapped label value '{}'", raw));
    }
    return it->second;
}

std::string LabelMap::to_text() const {
    std::string out;
    for (const auto &[k, v] : entries_) {
        out += fmt::format("{} = {}\n", k, static_cast<int>(v));
    }
    return out;
}

std::vector<Label> binarize_labels(std::span<const std::string> raw, const LabelMap &map) {
    std::vector<Label> out;
    out.reserve(raw.size());
    for (const auto &s : raw) {
        out.push_back(map.at(s));
    }
    return out;
}

Dataset make_dataset(const RawTable &table, const LabelMap &map) {
    Dataset ds;
    ds.features = table.features;
    ds.labels = binarize_labels(table.labels, map);
    ds.feature_names = table.feature_names;
    ds.validate();
    return ds;
}

// ---------------------------------------------------------------------------
// Normalization and splitting

Normalizer fit_normalizer(const Dataset &train) {
    if (train.rows() == 0) {
        throw DataError("fit_normalizer: empty training set");
    }
    Normalizer nz;
    nz.min.assign(train.dim(), std::numeric_limits<double>::infinity());
    nz.max.assign(train.dim(), -std::numeric_limits<double>::infinity());
    for (std::size_t r = 0; r < train.rows(); ++r) {
        const auto row = train.row(r);
        for (std::size_t j = 0; j < row.size(); ++j) {
            nz.min[j] = std::min(nz.min[j], row[j]);
            nz.max[j] = std::max(nz.max[j], row[j]);
        }
    }
    return nz;
}

Dataset apply_normalizer(const Normalizer &nz, const Dataset &ds) {
    if (nz.min.size() != ds.dim()) {
        throw DimensionMismatch("apply_normalizer", nz.min.size(), ds.dim());
    }
    Dataset out = ds;
    for (std::size_t r = 0; r < out.rows(); ++r) {
        auto row = out.features.row(r);
        for (std::size_t j = 0; j < row.size(); ++j) {
            row[j] = nz.is_constant(j) ? 0.0 : std::clamp((row[j] - nz.min[j]) / (nz.max[j] - nz.min[j]), 0.0, 1.0);
        }
    }
    out.normalized = true;
    return out;
}

Split stratified_split(const Dataset &ds, double train_fraction, std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw InvalidConfig(fmt::format("train_fraction must lie in (0,1) (got {})", train_fraction));
    }
    Rng rng(seed);
    Split split;
    for (const Label label : {kBenign, kAttack}) {
        std::vector<std::size_t> rows;
        for (std::size_t r = 0; r < ds.rows(); ++r) {
            if (ds.labels[r] == label) {
                rows.push_back(r);
            }
        }
        if (rows.size() < 2) {
            throw DataError(fmt::format("stratified_split: label {} has {} rows (need >= 2)", label, rows.size()));
        }
        rng.shuffle(std::span(rows));
        auto n_train = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(rows.size()) + 0.5));
        n_train = std::clamp<std::size_t>(n_train, 1, rows.size() - 1);
        split.train_rows.insert(split.train_rows.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(n_train));
        split.test_rows.insert(split.test_rows.end(), rows.begin() + static_cast<std::ptrdiff_t>(n_train), rows.end());
    }
    std::sort(split.train_rows.begin(), split.train_rows.end());
    std::sort(split.test_rows.begin(), split.test_rows.end());
    split.train = ds.subset(split.train_rows);
    split.test = ds.subset(split.test_rows);
    return split;
}

// ---------------------------------------------------------------------------
// Synthetic data

SynthGenerator::SynthGenerator(std::size_t d, double class_sep, double noise, std::uint64_t layout_seed)
    : d_(d), sep_(class_sep), noise_(noise) {
    if (d < 2) {
        throw InvalidConfig(fmt::format("synthetic data needs d >= 2 (got {})", d));
    }
    if (!(noise >= 0.0 && noise <= 0.5)) {
        throw InvalidConfig(fmt::format("label noise must lie in [0, 0.5] (got {})", noise));
    }
    Rng rng(mix_seed(layout_seed, 0x1a));
    const auto n_informative = std::max<std::size_t>(1, (d + 3) / 4);
    auto order = rng.sample_without_replacement(d, d);
    informative_.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_informative));
    std::sort(informative_.begin(), informative_.end());
    // the interaction pair prefers non-informative features
    quad_src_ = order[n_informative % d];
    quad_dst_ = order[(n_informative + 1) % d];
    offset_.resize(d);
    scale_.resize(d);
    for (std::size_t j = 0; j < d; ++j) {
        offset_[j] = rng.uniform(-50.0, 250.0);
        scale_[j] = rng.uniform(0.5, 25.0);
    }
}

Dataset SynthGenerator::sample(std::size_t n_rows, std::uint64_t sample_seed, bool shifted) const {
    if (n_rows == 0) {
        throw DataError("synthetic dataset with zero rows requested");
    }
    Rng rng(sample_seed);
    std::vector<Label> labels(n_rows);
    for (std::size_t r = 0; r < n_rows; ++r) {
        labels[r] = r < n_rows / 2 ? kBenign : kAttack;
    }
    rng.shuffle(std::span(labels));

    Dataset ds;
    ds.features = Matrix(n_rows, d_);
    ds.labels.resize(n_rows);
    for (std::size_t j = 0; j < d_; ++j) {
        ds.feature_names.push_back(fmt::format("f{}", j));
    }
    std::vector<double> z(d_);
    for (std::size_t r = 0; r < n_rows; ++r) {
        for (auto &v : z) {
            v = rng.normal();
        }
        const double side = labels[r] == kAttack ? 1.0 : -1.0;
        if (labels[r] == kAttack) {
            for (const auto j : informative_) {
                z[j] += shifted ? sep_ : -sep_;
            }
        }
        z[quad_dst_] += 0.5 * side * sep_ * (z[quad_src_] * z[quad_src_] - 1.0);
        auto row = ds.features.row(r);
        for (std::size_t j = 0; j < d_; ++j) {
            row[j] = offset_[j] + scale_[j] * z[j];
        }
        ds.labels[r] = rng.bernoulli(noise_) ? static_cast<Label>(1 - labels[r]) : labels[r];
    }
    return ds;
}

Dataset synth_icslike(std::size_t n_rows, std::size_t d, double class_sep, double noise, std::uint64_t seed) {
    return SynthGenerator(d, class_sep, noise, seed).sample(n_rows, mix_seed(seed, 1));
}

// ---------------------------------------------------------------------------
// CSV output

std::string to_csv(const Dataset &ds, const std::vector<std::string> *label_text, std::string_view label_name) {
    std::string out;
    for (std::size_t j = 0; j < ds.dim(); ++j) {
        out += j < ds.feature_names.size() ? ds.feature_names[j] : fmt::format("f{}", j);
        out += ',';
    }
    out += label_name;
    out += '\n';
    for (std::size_t r = 0; r < ds.rows(); ++r) {
        for (const double v : ds.row(r)) {
            out += fmt::format("{},", v);
        }
        if (label_text != nullptr) {
            out += (*label_text)[r];
        } else {
            out += ds.labels[r] == kAttack ? '1' : '0';
        }
        out += '\n';
    }
    return out;
}

void write_csv(const std::filesystem::path &path, const Dataset &ds, const std::vector<std::string> *label_text,
               std::string_view label_name) {
    write_file(path, to_csv(ds, label_text, label_name));
}

Dataset read_dataset_csv(const std::filesystem::path &path) {
    const auto table = load_csv(path, true, "last");
    if (table.dropped_rows != 0) {
        throw DataError(fmt::format("{}: {} malformed rows in a generated dataset file", path.string(), table.dropped_rows));
    }
    return make_dataset(table, LabelMap::identity());
}

}  // namespace reml
