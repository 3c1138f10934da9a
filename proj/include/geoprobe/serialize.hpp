#pragma once

#include <algorithm>
#include <cstdio>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "geoprobe/analysis.hpp"
#include "geoprobe/clustering.hpp"
#include "geoprobe/dataset.hpp"
#include "geoprobe/errors.hpp"

// Report writers emit canonical JSON by hand: keys in alphabetical order,
// report floats at 12 significant digits, config floats in exact round-trip
// form. Parsing goes through nlohmann::json.

namespace geoprobe {
namespace jsonw {

inline std::string escape(const std::string& s) {
    std::string out;
    out.reserve(s.size() + 2);
    for (char ch : s) {
        switch (ch) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\r': out += "\\r"; break;
            case '\t': out += "\\t"; break;
            default:
                if (static_cast<unsigned char>(ch) < 0x20) {
                    char buf[8];
                    std::snprintf(buf, sizeof(buf), "\\u%04x", ch);
                    out += buf;
                } else {
                    out += ch;
                }
        }
    }
    return out;
}

inline std::string str(const std::string& s) { return "\"" + escape(s) + "\""; }

/// Fixed 12-significant-digit rendering for report values.
inline std::string g12(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

/// Shortest exact rendering; reloading reproduces the same double.
inline std::string exact(double v) { return detail::format_double_exact(v); }

}  // namespace jsonw

inline std::string cluster_set_to_json(const ClusterSet& cs) {
    std::ostringstream os;
    os << "{\n  \"clusters\": [";
    for (std::size_t i = 0; i < cs.clusters.size(); ++i) {
        const Cluster& c = cs.clusters[i];
        os << (i ? ",\n    " : "\n    ");
        os << "{\"id\": " << c.id << ", \"label\": " << c.label << ", \"members\": [";
        for (std::size_t m = 0; m < c.members.size(); ++m) os << (m ? ", " : "") << c.members[m];
        os << "]}";
    }
    os << "\n  ],\n";
    const ProbeConfig& cfg = cs.config;
    os << "  \"config\": {\"noise_min_size\": " << cfg.noise_min_size
       << ", \"normalize\": " << (cfg.normalize ? "true" : "false")
       << ", \"tau_sep\": " << jsonw::exact(cfg.tau_sep) << ", \"tie_break\": " << jsonw::str(cfg.tie_break)
       << ", \"tol\": " << jsonw::exact(cfg.tol) << "},\n";
    os << "  \"label_names\": [";
    for (std::size_t i = 0; i < cs.label_names.size(); ++i)
        os << (i ? ", " : "") << jsonw::str(cs.label_names[i]);
    os << "],\n  \"merge_log\": [";
    for (std::size_t i = 0; i < cs.merge_log.size(); ++i) {
        const MergeRecord& r = cs.merge_log[i];
        os << (i ? ",\n    " : "\n    ") << "[" << r.step << ", " << r.id_a << ", " << r.id_b << ", "
           << r.new_id << "]";
    }
    os << (cs.merge_log.empty() ? "]" : "\n  ]") << "\n}\n";
    return os.str();
}

inline ClusterSet cluster_set_from_json(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("cluster file is not valid JSON: ") + e.what());
    }
    ClusterSet cs;
    try {
        for (const auto& jc : doc.at("clusters")) {
            Cluster c;
            c.id = jc.at("id").get<int>();
            c.label = jc.at("label").get<int>();
            c.members = jc.at("members").get<std::vector<int>>();
            std::sort(c.members.begin(), c.members.end());
            cs.n_points += c.size();
            cs.clusters.push_back(std::move(c));
        }
        std::sort(cs.clusters.begin(), cs.clusters.end(),
                  [](const Cluster& a, const Cluster& b) { return a.id < b.id; });
        cs.label_names = doc.at("label_names").get<std::vector<std::string>>();
        for (const auto& jr : doc.at("merge_log")) {
            if (!jr.is_array() || jr.size() != 4)
                throw ConsistencyError("merge_log entries must be [step, id_a, id_b, new_id]");
            cs.merge_log.push_back({jr[0].get<int>(), jr[1].get<int>(), jr[2].get<int>(), jr[3].get<int>()});
        }
        const auto& jcfg = doc.at("config");
        cs.config.noise_min_size = jcfg.at("noise_min_size").get<int>();
        cs.config.normalize = jcfg.at("normalize").get<bool>();
        cs.config.tau_sep = jcfg.at("tau_sep").get<double>();
        cs.config.tie_break = jcfg.at("tie_break").get<std::string>();
        cs.config.tol = jcfg.at("tol").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw ConsistencyError(std::string("corrupted cluster file: ") + e.what());
    }
    return cs;
}

inline std::string linearity_to_json(const LinearityReport& r, const std::vector<std::string>& names) {
    std::map<std::string, int> counts;
    for (std::size_t l = 0; l < r.per_label_counts.size(); ++l) counts[names[l]] = r.per_label_counts[l];
    std::ostringstream os;
    os << "{\"linearly_separable\": " << (r.linearly_separable ? "true" : "false")
       << ", \"n_clusters\": " << r.n_clusters << ", \"n_labels\": " << r.n_labels
       << ", \"per_label_cluster_counts\": {";
    bool first = true;
    for (const auto& [name, count] : counts) {
        os << (first ? "" : ", ") << jsonw::str(name) << ": " << count;
        first = false;
    }
    os << "}}";
    return os.str();
}

inline std::string distance_to_json(const DistanceReport& r, const std::vector<std::string>& names) {
    std::ostringstream os;
    os << "{\"bin_edges\": [" << jsonw::g12(r.bin_edges[0]) << ", " << jsonw::g12(r.bin_edges[1])
       << "], \"min_cross_label_distance\": " << jsonw::g12(r.min_cross_label_distance)
       << ", \"pairs\": [";
    for (std::size_t i = 0; i < r.pairs.size(); ++i) {
        const PairDistance& p = r.pairs[i];
        os << (i ? ",\n    " : "\n    ");
        os << "{\"bin\": " << jsonw::str(bin_name(p.bin)) << ", \"cluster_a\": " << p.cluster_a
           << ", \"cluster_b\": " << p.cluster_b << ", \"distance\": " << jsonw::g12(p.distance)
           << ", \"label_a\": " << jsonw::str(names[p.label_a])
           << ", \"label_b\": " << jsonw::str(names[p.label_b]) << "}";
    }
    os << (r.pairs.empty() ? "]" : "\n  ]") << "}";
    return os.str();
}

inline std::string analyze_report_to_json(const LinearityReport& lr, const DistanceReport& dr,
                                          const std::vector<std::string>& names) {
    return "{\n  \"distance\": " + distance_to_json(dr, names) +
           ",\n  \"linearity\": " + linearity_to_json(lr, names) + "\n}\n";
}

/// One cross-label cluster pair per row:
/// cluster_a  cluster_b  label_a  label_b  distance  bin
inline std::string distance_report_to_tsv(const DistanceReport& r,
                                          const std::vector<std::string>& names) {
    std::ostringstream os;
    for (const auto& p : r.pairs)
        os << p.cluster_a << '\t' << p.cluster_b << '\t' << names[p.label_a] << '\t'
           << names[p.label_b] << '\t' << jsonw::g12(p.distance) << '\t' << bin_name(p.bin) << '\n';
    return os.str();
}

inline std::string outcome_to_json(const PredictionOutcome& o, const std::vector<std::string>& names) {
    std::ostringstream os;
    os << "{\"distances\": [";
    for (std::size_t i = 0; i < o.distances.size(); ++i)
        os << (i ? ", " : "") << "[" << o.cluster_ids[i] << ", " << jsonw::g12(o.distances[i]) << "]";
    os << "]";
    if (o.gold_label >= 0) os << ", \"gold_label\": " << jsonw::str(names[o.gold_label]);
    os << ", \"nearest_cluster\": " << o.nearest_cluster << ", \"point_id\": " << jsonw::str(o.point_id)
       << ", \"predicted_label\": " << jsonw::str(names[o.predicted_label]);
    if (o.scores) {
        std::map<std::string, double> by_name;
        for (std::size_t l = 0; l < o.scores->size(); ++l) by_name[names[l]] = (*o.scores)[l];
        os << ", \"scores\": {";
        bool first = true;
        for (const auto& [name, s] : by_name) {
            os << (first ? "" : ", ") << jsonw::str(name) << ": " << jsonw::g12(s);
            first = false;
        }
        os << "}";
    }
    os << "}";
    return os.str();
}

inline std::string difficult_to_json(const DifficultExample& ex, int rank,
                                     const std::vector<std::string>& names) {
    std::ostringstream os;
    os << "{\"difficult_rank\": " << rank << ", \"distance_gold\": " << jsonw::g12(ex.distance_gold)
       << ", \"distance_nearest\": " << jsonw::g12(ex.distance_nearest)
       << ", \"gap\": " << jsonw::g12(ex.gap) << ", \"gold_label\": " << jsonw::str(names[ex.gold_label])
       << ", \"point_id\": " << jsonw::str(ex.point_id)
       << ", \"predicted_label\": " << jsonw::str(names[ex.predicted_label]) << "}";
    return os.str();
}

inline std::string validation_to_json(const ValidationReport& rep, const LabeledDataset& d) {
    std::ostringstream os;
    os << "{\"dim\": " << rep.dim << ", \"duplicate_conflicts\": [";
    for (std::size_t i = 0; i < rep.duplicate_conflicts.size(); ++i)
        os << (i ? ", " : "") << "[" << rep.duplicate_conflicts[i].first << ", "
           << rep.duplicate_conflicts[i].second << "]";
    os << "], \"duplicate_same_label\": [";
    for (std::size_t i = 0; i < rep.duplicate_same_label.size(); ++i)
        os << (i ? ", " : "") << "[" << rep.duplicate_same_label[i].first << ", "
           << rep.duplicate_same_label[i].second << "]";
    os << "], \"label_counts\": {";
    std::map<std::string, int> counts;
    for (std::size_t l = 0; l < rep.label_counts.size(); ++l)
        counts[d.label_names[l]] = rep.label_counts[l];
    bool first = true;
    for (const auto& [name, count] : counts) {
        os << (first ? "" : ", ") << jsonw::str(name) << ": " << count;
        first = false;
    }
    os << "}, \"n_points\": " << d.n_points() << "}\n";
    return os.str();
}

}  // namespace geoprobe
