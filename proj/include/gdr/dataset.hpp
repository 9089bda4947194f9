#ifndef GDR_DATASET_HPP
#define GDR_DATASET_HPP

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "common.hpp"

namespace gdr {

/**
 * Dense row-major input matrix with optional integer class labels.
 * Row `i` is point `i`.
 */
struct DataMatrix {
    std::size_t n = 0;
    std::size_t dim = 0;
    std::vector<double> values;
    std::optional<std::vector<std::int64_t>> labels;

    DataMatrix() = default;

    DataMatrix(std::size_t n_, std::size_t dim_) : n(n_), dim(dim_), values(n_ * dim_, 0.0) {}

    std::span<const double> row(std::size_t i) const {
        return std::span<const double>(values.data() + i * dim, dim);
    }

    std::span<double> row(std::size_t i) {
        return std::span<double>(values.data() + i * dim, dim);
    }

    double& at(std::size_t i, std::size_t c) { return values[i * dim + c]; }
    double at(std::size_t i, std::size_t c) const { return values[i * dim + c]; }

    bool has_labels() const { return labels.has_value(); }

    /// Throws std::invalid_argument if any invariant is broken.
    void validate() const {
        if (n < 2) {
            throw std::invalid_argument("data matrix needs at least 2 points");
        }
        if (dim < 1) {
            throw std::invalid_argument("data matrix needs at least 1 feature");
        }
        if (values.size() != n * dim) {
            throw std::invalid_argument("data matrix storage does not match its shape");
        }
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (!std::isfinite(values[i])) {
                throw std::invalid_argument("non-finite value at row " + std::to_string(i / dim + 1) +
                                            ", column " + std::to_string(i % dim + 1));
            }
        }
        if (labels && labels->size() != n) {
            throw std::invalid_argument("label count does not match point count");
        }
    }
};

enum class MatrixFormat { csv, f32_binary };

struct CsvOptions {
    bool header = false;
    bool label_column = false;
};

namespace internal {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) {
        out.push_back(field);
    }
    if (!line.empty() && line.back() == ',') {
        out.emplace_back();
    }
    return out;
}

inline std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) {
        return "";
    }
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

inline bool parse_integer(const std::string& s, std::int64_t& out) {
    const char* begin = s.data();
    const char* end = s.data() + s.size();
    auto res = std::from_chars(begin, end, out);
    return res.ec == std::errc() && res.ptr == end;
}

/**
 * Labels that all parse as integers are kept verbatim; otherwise the distinct
 * strings are sorted and mapped to 0..m-1.
 */
inline std::vector<std::int64_t> map_labels(const std::vector<std::string>& raw) {
    std::vector<std::int64_t> out(raw.size());
    bool all_int = true;
    for (std::size_t i = 0; i < raw.size() && all_int; ++i) {
        all_int = parse_integer(raw[i], out[i]);
    }
    if (all_int) {
        return out;
    }
    std::map<std::string, std::int64_t> ids;
    for (const auto& s : raw) {
        ids.emplace(s, 0);
    }
    std::int64_t next = 0;
    for (auto& kv : ids) {
        kv.second = next++;
    }
    for (std::size_t i = 0; i < raw.size(); ++i) {
        out[i] = ids[raw[i]];
    }
    return out;
}

constexpr std::array<char, 4> binary_magic{'G', 'D', 'R', 'M'};

template<typename T>
void write_le(std::ostream& out, T value) {
    static_assert(std::endian::native == std::endian::little, "big-endian hosts are not supported");
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template<typename T>
bool read_le(std::istream& in, T& value) {
    static_assert(std::endian::native == std::endian::little, "big-endian hosts are not supported");
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    return static_cast<bool>(in);
}

}

inline DataMatrix parse_csv(std::istream& in, const CsvOptions& opt = {}) {
    DataMatrix out;
    std::vector<std::string> raw_labels;
    std::string line;
    std::size_t lineno = 0;
    std::size_t expected = 0;
    bool first = true;

    while (std::getline(in, line)) {
        ++lineno;
        if (internal::trim(line).empty()) {
            continue;
        }
        if (first && opt.header) {
            first = false;
            continue;
        }
        first = false;

        auto fields = internal::split_csv_line(line);
        if (expected == 0) {
            expected = fields.size();
            const std::size_t min_fields = opt.label_column ? 2 : 1;
            if (expected < min_fields) {
                throw ParseError("row " + std::to_string(lineno) + " has too few fields", lineno);
            }
        } else if (fields.size() != expected) {
            throw ParseError("row " + std::to_string(lineno) + " has " + std::to_string(fields.size()) +
                             " fields, expected " + std::to_string(expected), lineno);
        }

        const std::size_t numeric = opt.label_column ? expected - 1 : expected;
        for (std::size_t c = 0; c < numeric; ++c) {
            const std::string f = internal::trim(fields[c]);
            double v = 0;
            try {
                std::size_t used = 0;
                v = std::stod(f, &used);
                if (used != f.size()) {
                    throw std::invalid_argument(f);
                }
            } catch (const std::out_of_range&) {
                v = std::numeric_limits<double>::infinity();
            } catch (const std::invalid_argument&) {
                throw ParseError("row " + std::to_string(lineno) + ", column " + std::to_string(c + 1) +
                                 ": cannot parse '" + f + "'", lineno, c + 1);
            }
            if (!std::isfinite(v)) {
                throw ParseError("row " + std::to_string(lineno) + ", column " + std::to_string(c + 1) +
                                 ": non-finite value", lineno, c + 1);
            }
            out.values.push_back(v);
        }
        if (opt.label_column) {
            raw_labels.push_back(internal::trim(fields.back()));
        }
        ++out.n;
    }

    out.dim = opt.label_column ? (expected == 0 ? 0 : expected - 1) : expected;
    if (opt.label_column) {
        out.labels = internal::map_labels(raw_labels);
    }
    out.validate();
    return out;
}

/**
 * f32-binary layout: "GDRM", u64 n, u64 dim, u8 has_labels, then n*dim
 * little-endian f32 values (row-major), then n little-endian i64 labels.
 */
inline DataMatrix parse_binary(std::istream& in) {
    std::array<char, 4> magic{};
    in.read(magic.data(), 4);
    if (!in || magic != internal::binary_magic) {
        throw ParseError("missing GDRM header", 0);
    }
    std::uint64_t n = 0, dim = 0;
    std::uint8_t has_labels = 0;
    if (!internal::read_le(in, n) || !internal::read_le(in, dim) || !internal::read_le(in, has_labels)) {
        throw ParseError("truncated header", 0);
    }
    if (has_labels > 1) {
        throw ParseError("bad has_labels flag", 0);
    }

    DataMatrix out(n, dim);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < dim; ++c) {
            float v = 0;
            if (!internal::read_le(in, v)) {
                throw ParseError("truncated values at row " + std::to_string(i + 1), i + 1, c + 1);
            }
            if (!std::isfinite(v)) {
                throw ParseError("row " + std::to_string(i + 1) + ", column " + std::to_string(c + 1) +
                                 ": non-finite value", i + 1, c + 1);
            }
            out.at(i, c) = v;
        }
    }
    if (has_labels) {
        std::vector<std::int64_t> labels(n);
        for (std::size_t i = 0; i < n; ++i) {
            if (!internal::read_le(in, labels[i])) {
                throw ParseError("truncated labels at row " + std::to_string(i + 1), i + 1);
            }
        }
        out.labels = std::move(labels);
    }
    out.validate();
    return out;
}

inline DataMatrix load_matrix(const std::string& path, MatrixFormat format, const CsvOptions& opt = {}) {
    std::ifstream in(path, format == MatrixFormat::csv ? std::ios::in : std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open " + path);
    }
    return format == MatrixFormat::csv ? parse_csv(in, opt) : parse_binary(in);
}

/// Values are narrowed to f32; labels are written when present.
inline void save_binary(const DataMatrix& data, std::ostream& out) {
    out.write(internal::binary_magic.data(), 4);
    internal::write_le<std::uint64_t>(out, data.n);
    internal::write_le<std::uint64_t>(out, data.dim);
    internal::write_le<std::uint8_t>(out, data.has_labels() ? 1 : 0);
    for (double v : data.values) {
        internal::write_le<float>(out, static_cast<float>(v));
    }
    if (data.labels) {
        for (auto l : *data.labels) {
            internal::write_le<std::int64_t>(out, l);
        }
    }
}

inline void save_csv(const DataMatrix& data, std::ostream& out) {
    out.precision(17);
    for (std::size_t i = 0; i < data.n; ++i) {
        for (std::size_t c = 0; c < data.dim; ++c) {
            if (c) {
                out << ',';
            }
            out << data.at(i, c);
        }
        if (data.labels) {
            out << ',' << (*data.labels)[i];
        }
        out << '\n';
    }
}

inline void save_matrix(const DataMatrix& data, const std::string& path, MatrixFormat format) {
    std::ofstream out(path, format == MatrixFormat::csv ? std::ios::out : std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot open " + path + " for writing");
    }
    if (format == MatrixFormat::csv) {
        save_csv(data, out);
    } else {
        save_binary(data, out);
    }
}

/**
 * Swiss roll point cloud plus its intrinsic coordinates. `t` is the unrolled
 * angle in [1.5*pi, 4.5*pi], `height` is uniform in [0, 21].
 */
struct SwissRoll {
    DataMatrix data;
    std::vector<double> t;
    std::vector<double> height;
};

inline SwissRoll make_swiss_roll(std::size_t n, double noise, std::uint64_t seed) {
    if (n < 2) {
        throw std::invalid_argument("swiss roll needs n >= 2");
    }
    if (!(noise >= 0)) {
        throw std::invalid_argument("swiss roll noise must be >= 0");
    }
    constexpr double pi = std::numbers::pi;
    std::mt19937_64 eng(seed);
    std::uniform_real_distribution<double> angle(1.5 * pi, 4.5 * pi);
    std::uniform_real_distribution<double> height(0.0, 21.0);
    std::normal_distribution<double> jitter(0.0, 1.0);

    SwissRoll out{DataMatrix(n, 3), std::vector<double>(n), std::vector<double>(n)};
    for (std::size_t i = 0; i < n; ++i) {
        const double t = angle(eng);
        const double h = height(eng);
        out.t[i] = t;
        out.height[i] = h;
        out.data.at(i, 0) = t * std::cos(t);
        out.data.at(i, 1) = h;
        out.data.at(i, 2) = t * std::sin(t);
        if (noise > 0) {
            for (std::size_t c = 0; c < 3; ++c) {
                out.data.at(i, c) += noise * jitter(eng);
            }
        }
    }
    return out;
}

/**
 * Isotropic unit-variance Gaussian clusters. Points are assigned to clusters
 * round-robin, so sizes differ by at most one. Centers are drawn uniformly in
 * a cube and rejected until every pair is at least `sep` apart.
 */
inline DataMatrix make_blobs(std::size_t n, std::size_t clusters, std::size_t dim, double sep, std::uint64_t seed) {
    if (clusters < 1) {
        throw std::invalid_argument("blobs need at least one cluster");
    }
    if (!(sep > 0)) {
        throw std::invalid_argument("blob separation must be positive");
    }
    if (dim < 1) {
        throw std::invalid_argument("blob dimension must be >= 1");
    }
    std::mt19937_64 eng(seed);
    std::normal_distribution<double> unit(0.0, 1.0);

    double side = sep * std::max(1.0, std::ceil(std::pow(static_cast<double>(clusters), 1.0 / dim))) * 2.0;
    std::vector<double> centers(clusters * dim);
    std::size_t placed = 0;
    std::size_t attempts = 0;
    while (placed < clusters) {
        std::uniform_real_distribution<double> coord(0.0, side);
        for (std::size_t c = 0; c < dim; ++c) {
            centers[placed * dim + c] = coord(eng);
        }
        bool ok = true;
        for (std::size_t other = 0; other < placed && ok; ++other) {
            ok = squared_distance(centers.data() + placed * dim, centers.data() + other * dim, dim) >= sep * sep;
        }
        if (ok) {
            ++placed;
            attempts = 0;
        } else if (++attempts > 1000) {
            side *= 1.5;
            attempts = 0;
        }
    }

    DataMatrix out(n, dim);
    std::vector<std::int64_t> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t k = i % clusters;
        labels[i] = static_cast<std::int64_t>(k);
        for (std::size_t c = 0; c < dim; ++c) {
            out.at(i, c) = centers[k * dim + c] + unit(eng);
        }
    }
    out.labels = std::move(labels);
    return out;
}

}

#endif
