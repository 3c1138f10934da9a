#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "geoprobe/errors.hpp"

namespace geoprobe {

/// An immutable labeled point set. Rows of `points` are points; `labels`
/// holds one label id per row, coded by first appearance in the input.
struct LabeledDataset {
    Eigen::MatrixXd points;                // n_points x dim
    std::vector<int> labels;               // label id per row, < label_names.size()
    std::vector<std::string> label_names;  // id -> name
    std::vector<std::string> ids;          // stable external id per row

    int n_points() const { return static_cast<int>(points.rows()); }
    int dim() const { return static_cast<int>(points.cols()); }
    int n_labels() const { return static_cast<int>(label_names.size()); }

    const std::string& label_name(int row) const { return label_names[labels[row]]; }

    /// Label id for `name`, or -1 when the vocabulary does not contain it.
    int label_id(std::string_view name) const {
        for (std::size_t i = 0; i < label_names.size(); ++i)
            if (label_names[i] == name) return static_cast<int>(i);
        return -1;
    }

    std::vector<int> label_counts() const {
        std::vector<int> counts(label_names.size(), 0);
        for (int l : labels) ++counts[l];
        return counts;
    }

    /// Scale every row to unit L2 norm. Zero rows are left untouched.
    void l2_normalize() {
        for (Eigen::Index r = 0; r < points.rows(); ++r) {
            double n = points.row(r).norm();
            if (n > 0.0) points.row(r) /= n;
        }
    }

    /// Upper bound on the point-set diameter: the bounding-box diagonal.
    double diameter_bound() const {
        if (points.rows() == 0) return 0.0;
        Eigen::RowVectorXd lo = points.colwise().minCoeff();
        Eigen::RowVectorXd hi = points.colwise().maxCoeff();
        return (hi - lo).norm();
    }
};

/// Exact-duplicate report produced by validate().
struct ValidationReport {
    std::vector<std::pair<int, int>> duplicate_conflicts;   // same coords, different labels
    std::vector<std::pair<int, int>> duplicate_same_label;  // same coords, same label
    int dim = 0;
    std::vector<int> label_counts;  // indexed by label id
};

namespace detail {

inline double parse_coordinate(std::string_view tok, std::size_t line_no) {
    double v = 0.0;
    const char* first = tok.data();
    const char* last = tok.data() + tok.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last)
        throw ParseError(line_no, "bad coordinate '" + std::string(tok) + "'");
    if (!std::isfinite(v))
        throw ParseError(line_no, "non-finite coordinate '" + std::string(tok) + "'");
    return v;
}

inline std::string format_double_exact(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

}  // namespace detail

/// Parses headerless TSV: one point per non-empty line, `label<TAB>f1 f2 ... fdim`.
/// Labels are coded in first-appearance order and row order is preserved.
inline LabeledDataset load_dataset(std::istream& in) {
    LabeledDataset d;
    std::vector<std::vector<double>> rows;
    std::unordered_map<std::string, int> label_ids;
    std::string line;
    std::size_t line_no = 0;
    int dim = -1;

    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;

        std::size_t tab = line.find('\t');
        if (tab == std::string::npos)
            throw ParseError(line_no, "expected 'label<TAB>coordinates'");
        std::string label = line.substr(0, tab);
        if (label.empty()) throw ParseError(line_no, "empty label");

        std::vector<double> coords;
        std::string_view rest(line);
        rest.remove_prefix(tab + 1);
        std::size_t pos = 0;
        while (pos < rest.size()) {
            while (pos < rest.size() && rest[pos] == ' ') ++pos;
            if (pos >= rest.size()) break;
            std::size_t end = rest.find(' ', pos);
            if (end == std::string_view::npos) end = rest.size();
            coords.push_back(detail::parse_coordinate(rest.substr(pos, end - pos), line_no));
            pos = end;
        }
        if (coords.empty()) throw ParseError(line_no, "no coordinates");
        if (dim < 0) {
            dim = static_cast<int>(coords.size());
        } else if (static_cast<int>(coords.size()) != dim) {
            throw ParseError(line_no, "expected " + std::to_string(dim) + " coordinates, got " +
                                          std::to_string(coords.size()));
        }

        auto [it, inserted] = label_ids.try_emplace(label, static_cast<int>(d.label_names.size()));
        if (inserted) d.label_names.push_back(label);
        d.labels.push_back(it->second);
        rows.push_back(std::move(coords));
    }
    if (rows.empty()) throw ParseError("empty input: no data rows");

    d.points.resize(static_cast<Eigen::Index>(rows.size()), dim);
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (int c = 0; c < dim; ++c) d.points(static_cast<Eigen::Index>(r), c) = rows[r][c];
    d.ids.reserve(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) d.ids.push_back(std::to_string(r));
    return d;
}

inline LabeledDataset load_dataset(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ParseError("cannot open '" + path + "'");
    return load_dataset(f);
}

/// Writes the dataset back as TSV. Coordinates use shortest round-trip
/// formatting, so load(save(d)) reproduces d exactly.
inline void save_tsv(const LabeledDataset& d, std::ostream& out) {
    for (int r = 0; r < d.n_points(); ++r) {
        out << d.label_name(r) << '\t';
        for (int c = 0; c < d.dim(); ++c) {
            if (c) out << ' ';
            out << detail::format_double_exact(d.points(r, c));
        }
        out << '\n';
    }
}

inline std::string to_tsv(const LabeledDataset& d) {
    std::ostringstream os;
    save_tsv(d, os);
    return os.str();
}

/// Finds all pairs of rows with bitwise-identical coordinates, split by
/// whether the labels agree. Reporting only; nothing is rejected.
inline ValidationReport validate(const LabeledDataset& d) {
    ValidationReport rep;
    rep.dim = d.dim();
    rep.label_counts = d.label_counts();

    // Group rows by exact coordinate bytes, then pair within groups.
    std::map<std::string, std::vector<int>> groups;
    for (int r = 0; r < d.n_points(); ++r) {
        std::string key;
        key.resize(sizeof(double) * static_cast<std::size_t>(d.dim()));
        for (int c = 0; c < d.dim(); ++c) {
            double v = d.points(r, c);
            std::memcpy(key.data() + sizeof(double) * static_cast<std::size_t>(c), &v, sizeof(double));
        }
        groups[std::move(key)].push_back(r);
    }
    for (const auto& [key, members] : groups) {
        for (std::size_t i = 0; i + 1 < members.size(); ++i)
            for (std::size_t j = i + 1; j < members.size(); ++j) {
                auto pr = std::make_pair(members[i], members[j]);
                if (d.labels[pr.first] == d.labels[pr.second])
                    rep.duplicate_same_label.push_back(pr);
                else
                    rep.duplicate_conflicts.push_back(pr);
            }
    }
    return rep;
}

}  // namespace geoprobe
