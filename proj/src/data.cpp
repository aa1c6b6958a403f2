#include "snojoe/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "snojoe/random.hpp"

namespace snojoe {

namespace {

// Stream indices under SyntheticSpec::seed.
constexpr std::uint64_t kPrototypeStream = 0;
constexpr std::uint64_t kIdStream = 1;
constexpr std::uint64_t kOodStream = 2;
constexpr std::uint64_t kShiftStream = 3;

Eigen::RowVectorXd draw_labels(SplitMix64& rng, int k, double p) {
    Eigen::RowVectorXd y(k);
    for (;;) {
        bool any = false;
        for (int i = 0; i < k; ++i) {
            const bool on = rng.bernoulli(p);
            y[i] = on ? 1.0 : 0.0;
            any = any || on;
        }
        if (any) return y;
    }
}

MultiLabelDataset sample_mixture(const SyntheticSpec& spec, const Eigen::MatrixXd& prototypes, SplitMix64& rng) {
    MultiLabelDataset data;
    data.features.resize(spec.samples, spec.input_dim);
    data.labels.resize(spec.samples, spec.num_labels);
    for (int s = 0; s < spec.samples; ++s) {
        const Eigen::RowVectorXd y = draw_labels(rng, spec.num_labels, spec.label_prob);
        Eigen::RowVectorXd x = Eigen::RowVectorXd::Zero(spec.input_dim);
        for (int i = 0; i < spec.num_labels; ++i)
            if (y[i] != 0.0) x += prototypes.row(i);
        for (int c = 0; c < spec.input_dim; ++c) x[c] += spec.noise_sigma * rng.normal();
        data.features.row(s) = x;
        data.labels.row(s) = y;
    }
    return data;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split_cells(std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    for (;;) {
        const std::size_t comma = line.find(',', start);
        cells.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return cells;
}

std::optional<double> parse_number(std::string_view cell) {
    if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
    if (ec != std::errc() || ptr != cell.data() + cell.size() || cell.empty()) return std::nullopt;
    if (!std::isfinite(value)) return std::nullopt;
    return value;
}

}  // namespace

void MultiLabelDataset::validate() const {
    if (labels.rows() != features.rows())
        throw std::invalid_argument("dataset: row count mismatch: features has " + std::to_string(features.rows()) +
                                    " rows, labels has " + std::to_string(labels.rows()));
    if (!features.allFinite()) throw std::invalid_argument("dataset: non-finite feature value");
    for (Eigen::Index r = 0; r < labels.rows(); ++r)
        for (Eigen::Index c = 0; c < labels.cols(); ++c)
            if (labels(r, c) != 0.0 && labels(r, c) != 1.0)
                throw std::invalid_argument("dataset: label at row " + std::to_string(r + 1) + ", column " +
                                            std::to_string(c + 1) + " is not 0 or 1");
}

std::string to_string(OodMode mode) {
    switch (mode) {
        case OodMode::shift: return "shift";
        case OodMode::uniform: return "uniform";
        case OodMode::sparse_label: return "sparse-label";
    }
    return "shift";
}

OodMode parse_ood_mode(const std::string& name) {
    if (name == "shift") return OodMode::shift;
    if (name == "uniform") return OodMode::uniform;
    if (name == "sparse-label") return OodMode::sparse_label;
    throw std::invalid_argument("unknown OOD mode '" + name + "' (expected shift, uniform or sparse-label)");
}

void SyntheticSpec::validate() const {
    if (num_labels < 1) throw std::invalid_argument("num_labels must be positive");
    if (input_dim < 1) throw std::invalid_argument("input_dim must be positive");
    if (samples < 1) throw std::invalid_argument("samples must be positive");
    if (!(label_prob > 0.0 && label_prob <= 1.0)) throw std::invalid_argument("label_prob must lie in (0, 1]");
    if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) throw std::invalid_argument("noise_sigma must be nonnegative");
    if (!(prototype_scale > 0.0) || !std::isfinite(prototype_scale))
        throw std::invalid_argument("prototype_scale must be positive");
    if (!(shift_magnitude >= 0.0) || !std::isfinite(shift_magnitude))
        throw std::invalid_argument("shift_magnitude must be nonnegative");
}

Eigen::MatrixXd generate_prototypes(const SyntheticSpec& spec) {
    spec.validate();
    SplitMix64 rng(derive_seed(spec.seed, kPrototypeStream));
    return rng.normal_matrix(spec.num_labels, spec.input_dim, spec.prototype_scale);
}

MultiLabelDataset generate_id(const SyntheticSpec& spec) {
    const Eigen::MatrixXd prototypes = generate_prototypes(spec);
    SplitMix64 rng(derive_seed(spec.seed, kIdStream));
    MultiLabelDataset data = sample_mixture(spec, prototypes, rng);
    data.provenance = "synthetic-id seed=" + std::to_string(spec.seed);
    return data;
}

double uniform_half_width(const SyntheticSpec& spec) {
    const double expected_active = std::max(1.0, spec.num_labels * spec.label_prob);
    return 2.0 * std::sqrt(spec.prototype_scale * spec.prototype_scale * expected_active +
                           spec.noise_sigma * spec.noise_sigma);
}

MultiLabelDataset generate_ood(const SyntheticSpec& spec) {
    Eigen::MatrixXd prototypes = generate_prototypes(spec);
    SplitMix64 rng(derive_seed(spec.seed, kOodStream));
    MultiLabelDataset data;
    switch (spec.ood_mode) {
        case OodMode::shift: {
            SplitMix64 dir_rng(derive_seed(spec.seed, kShiftStream));
            for (Eigen::Index i = 0; i < prototypes.rows(); ++i) {
                Eigen::RowVectorXd d = dir_rng.normal_vector(spec.input_dim).transpose();
                d.normalize();
                prototypes.row(i) += spec.shift_magnitude * d;
            }
            data = sample_mixture(spec, prototypes, rng);
            break;
        }
        case OodMode::uniform: {
            const double b = uniform_half_width(spec);
            data.features.resize(spec.samples, spec.input_dim);
            for (int s = 0; s < spec.samples; ++s)
                for (int c = 0; c < spec.input_dim; ++c) data.features(s, c) = rng.uniform(-b, b);
            data.labels = Eigen::MatrixXd::Zero(spec.samples, spec.num_labels);
            break;
        }
        case OodMode::sparse_label: {
            data.features.resize(spec.samples, spec.input_dim);
            data.labels = Eigen::MatrixXd::Zero(spec.samples, spec.num_labels);
            for (int s = 0; s < spec.samples; ++s) {
                const auto j = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(spec.num_labels)));
                Eigen::RowVectorXd x = prototypes.row(j);
                for (int c = 0; c < spec.input_dim; ++c) x[c] += spec.noise_sigma * rng.normal();
                data.features.row(s) = x;
                data.labels(s, j) = 1.0;
            }
            break;
        }
    }
    data.provenance = "synthetic-ood mode=" + to_string(spec.ood_mode) + " seed=" + std::to_string(spec.seed);
    return data;
}

SplitIndices split_by_count(Eigen::Index n, Eigen::Index n_train, Eigen::Index n_val, std::uint64_t seed) {
    if (n_train < 0 || n_val < 0 || n_train + n_val > n) throw std::invalid_argument("split sizes exceed dataset size");
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    SplitMix64 rng(seed);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    SplitIndices out;
    const auto tr = static_cast<std::ptrdiff_t>(n_train);
    const auto va = static_cast<std::ptrdiff_t>(n_val);
    out.train.assign(order.begin(), order.begin() + tr);
    out.val.assign(order.begin() + tr, order.begin() + tr + va);
    out.test.assign(order.begin() + tr + va, order.end());
    return out;
}

SplitIndices split_by_fraction(Eigen::Index n, double train_fraction, double val_fraction, std::uint64_t seed) {
    if (!(train_fraction >= 0.0 && val_fraction >= 0.0 && train_fraction + val_fraction <= 1.0))
        throw std::invalid_argument("split fractions must be nonnegative and sum to at most 1");
    const auto n_train = static_cast<Eigen::Index>(std::floor(static_cast<double>(n) * train_fraction));
    const auto n_val = static_cast<Eigen::Index>(std::floor(static_cast<double>(n) * val_fraction));
    return split_by_count(n, n_train, n_val, seed);
}

MultiLabelDataset subset(const MultiLabelDataset& data, const std::vector<Eigen::Index>& rows) {
    MultiLabelDataset out;
    out.features.resize(static_cast<Eigen::Index>(rows.size()), data.features.cols());
    out.labels.resize(static_cast<Eigen::Index>(rows.size()), data.labels.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto r = rows[i];
        if (r < 0 || r >= data.size()) throw std::out_of_range("subset: row index out of range");
        out.features.row(static_cast<Eigen::Index>(i)) = data.features.row(r);
        out.labels.row(static_cast<Eigen::Index>(i)) = data.labels.row(r);
    }
    out.provenance = data.provenance;
    return out;
}

Eigen::MatrixXd read_matrix_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::vector<std::vector<double>> rows;
    std::size_t width = 0;
    std::string line;
    std::size_t line_no = 0;
    bool first = true;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto cells = split_cells(line);
        std::vector<double> values;
        values.reserve(cells.size());
        bool numeric = true;
        std::size_t bad_col = 0;
        for (std::size_t c = 0; c < cells.size(); ++c) {
            const auto v = parse_number(cells[c]);
            if (!v) {
                numeric = false;
                bad_col = c;
                break;
            }
            values.push_back(*v);
        }
        if (first) {
            first = false;
            width = cells.size();
            if (!numeric) continue;  // header row
        }
        if (cells.size() != width)
            throw std::runtime_error(path.string() + ": row " + std::to_string(line_no) + ": expected " +
                                     std::to_string(width) + " columns, found " + std::to_string(cells.size()));
        if (!numeric)
            throw std::runtime_error(path.string() + ": row " + std::to_string(line_no) + ", column " +
                                     std::to_string(bad_col + 1) + ": non-numeric cell '" +
                                     std::string(cells[bad_col]) + "'");
        rows.push_back(std::move(values));
    }
    if (rows.empty()) throw std::runtime_error(path.string() + ": no data rows");
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width));
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < width; ++c)
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    return m;
}

std::string format_double(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc()) throw std::runtime_error("format_double: conversion failed");
    return std::string(buf, ptr);
}

void write_matrix_csv(const std::filesystem::path& path, const Eigen::MatrixXd& m,
                      const std::vector<std::string>& header) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    if (!header.empty()) {
        if (static_cast<Eigen::Index>(header.size()) != m.cols())
            throw std::invalid_argument("write_matrix_csv: header width does not match matrix");
        for (std::size_t c = 0; c < header.size(); ++c) out << (c ? "," : "") << header[c];
        out << '\n';
    }
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) out << (c ? "," : "") << format_double(m(r, c));
        out << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

MultiLabelDataset load_csv(const std::filesystem::path& features_path,
                           const std::optional<std::filesystem::path>& labels_path) {
    MultiLabelDataset data;
    data.features = read_matrix_csv(features_path);
    if (labels_path) {
        data.labels = read_matrix_csv(*labels_path);
        if (data.labels.rows() != data.features.rows())
            throw std::runtime_error("row count mismatch: " + features_path.string() + " has " +
                                     std::to_string(data.features.rows()) + " rows, " + labels_path->string() +
                                     " has " + std::to_string(data.labels.rows()));
    } else {
        data.labels.resize(data.features.rows(), 0);
    }
    data.validate();
    data.provenance = features_path.string();
    return data;
}

Eigen::MatrixXd load_logits_csv(const std::filesystem::path& path) { return read_matrix_csv(path); }

void save_csv(const MultiLabelDataset& data, const std::filesystem::path& features_path,
              const std::filesystem::path& labels_path) {
    data.validate();
    write_matrix_csv(features_path, data.features);
    write_matrix_csv(labels_path, data.labels);
}

std::string file_checksum(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[1 << 14];
    while (in.read(buf, sizeof buf) || in.gcount() > 0) {
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ULL;
        }
    }
    char hex[17];
    std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
    return hex;
}

}  // namespace snojoe
