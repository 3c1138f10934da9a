#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "geoprobe/clustering.hpp"
#include "geoprobe/dataset.hpp"
#include "geoprobe/errors.hpp"
#include "geoprobe/geometry.hpp"

namespace geoprobe {

struct LinearityReport {
    int n_clusters = 0;
    int n_labels = 0;
    bool linearly_separable = false;
    std::vector<int> per_label_counts;  // indexed by label id
};

/// A representation admits a linear multi-class separator exactly when every
/// label ended up in a single cluster.
inline LinearityReport linearity_report(const ClusterSet& cs) {
    LinearityReport r;
    r.n_clusters = cs.n_clusters();
    r.per_label_counts = cs.per_label_counts();
    for (int c : r.per_label_counts)
        if (c > 0) ++r.n_labels;
    r.linearly_separable = (r.n_clusters == r.n_labels);
    return r;
}

inline std::string format_linearity(const LinearityReport& r) {
    return "clusters=" + std::to_string(r.n_clusters) + " labels=" + std::to_string(r.n_labels) +
           " linearly_separable=" + (r.linearly_separable ? "true" : "false");
}

enum class DistanceBin { small = 0, medium = 1, large = 2 };

inline const char* bin_name(DistanceBin b) {
    switch (b) {
        case DistanceBin::small: return "small";
        case DistanceBin::medium: return "medium";
        default: return "large";
    }
}

struct PairDistance {
    int cluster_a = 0;
    int cluster_b = 0;
    int label_a = 0;
    int label_b = 0;
    double distance = 0.0;
    DistanceBin bin = DistanceBin::small;
};

struct DistanceReport {
    std::vector<PairDistance> pairs;  // ascending (cluster_a, cluster_b)
    double min_cross_label_distance = 0.0;
    double bin_edges[2] = {0.0, 0.0};
};

namespace detail {

inline DistanceBin assign_bin(double d, double lo, double hi) {
    double range = hi - lo;
    if (range <= 0.0) return DistanceBin::small;
    int idx = static_cast<int>(std::floor((d - lo) / range * 3.0));
    idx = std::clamp(idx, 0, 2);
    return static_cast<DistanceBin>(idx);
}

inline KernelOptions kernel_options(const ProbeConfig& cfg) {
    KernelOptions opts;
    opts.tol = cfg.tol;
    opts.tau_sep = cfg.tau_sep;
    return opts;
}

}  // namespace detail

/// Hull-to-hull distances for every pair of live clusters with different
/// labels, with the minimum and an equal-width three-bin split of [min, max].
inline DistanceReport distance_report(const ClusterSet& cs, const LabeledDataset& d) {
    int labels_present = 0;
    for (int c : cs.per_label_counts())
        if (c > 0) ++labels_present;
    if (labels_present < 2)
        throw ConsistencyError("distance report needs at least two labels with live clusters");

    KernelOptions opts = detail::kernel_options(cs.config);
    DistanceReport rep;
    for (std::size_t i = 0; i < cs.clusters.size(); ++i)
        for (std::size_t j = i + 1; j < cs.clusters.size(); ++j) {
            const Cluster& a = cs.clusters[i];
            const Cluster& b = cs.clusters[j];
            if (a.label == b.label) continue;
            auto sep = hull_distance(PointsView(d.points, a.members),
                                     PointsView(d.points, b.members), opts);
            rep.pairs.push_back({a.id, b.id, a.label, b.label, sep.distance, DistanceBin::small});
        }

    double lo = rep.pairs.front().distance, hi = lo;
    for (const auto& p : rep.pairs) {
        lo = std::min(lo, p.distance);
        hi = std::max(hi, p.distance);
    }
    rep.min_cross_label_distance = lo;
    rep.bin_edges[0] = lo + (hi - lo) / 3.0;
    rep.bin_edges[1] = lo + 2.0 * (hi - lo) / 3.0;
    for (auto& p : rep.pairs) p.bin = detail::assign_bin(p.distance, lo, hi);
    return rep;
}

struct PredictionOutcome {
    std::string point_id;
    std::vector<int> cluster_ids;    // ascending, aligned with distances
    std::vector<double> distances;   // point-to-hull distance per live cluster
    int nearest_cluster = -1;
    int predicted_label = -1;
    std::optional<std::vector<double>> scores;  // per label id, sums to 1
    int gold_label = -1;                        // -1 when absent
};

/// Assigns a point to its nearest cluster by point-to-hull distance; ties go
/// to the smallest cluster id. Scores, when requested, are a softmax over
/// negative per-label minimum distances.
inline PredictionOutcome predict(const ClusterSet& cs, const LabeledDataset& train,
                                 const Eigen::VectorXd& x, bool with_scores = false) {
    if (x.size() != train.dim())
        throw ConsistencyError("test point dimension " + std::to_string(x.size()) +
                               " does not match dataset dimension " + std::to_string(train.dim()));
    KernelOptions opts = detail::kernel_options(cs.config);
    PredictionOutcome out;
    out.cluster_ids.reserve(cs.clusters.size());
    out.distances.reserve(cs.clusters.size());
    for (const auto& c : cs.clusters) {
        auto sep = point_hull_distance(x, PointsView(train.points, c.members), opts);
        out.cluster_ids.push_back(c.id);
        out.distances.push_back(sep.distance);
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < out.distances.size(); ++i)
        if (out.distances[i] < out.distances[best]) best = i;
    out.nearest_cluster = out.cluster_ids[best];
    out.predicted_label = cs.clusters[best].label;

    if (with_scores) {
        std::vector<double> label_min(cs.label_names.size(),
                                      std::numeric_limits<double>::infinity());
        for (std::size_t i = 0; i < cs.clusters.size(); ++i)
            label_min[cs.clusters[i].label] =
                std::min(label_min[cs.clusters[i].label], out.distances[i]);
        double shift = std::numeric_limits<double>::infinity();
        for (double m : label_min) shift = std::min(shift, m);
        std::vector<double> scores(label_min.size(), 0.0);
        double total = 0.0;
        for (std::size_t l = 0; l < label_min.size(); ++l) {
            scores[l] = std::isinf(label_min[l]) ? 0.0 : std::exp(-(label_min[l] - shift));
            total += scores[l];
        }
        for (double& s : scores) s /= total;
        out.scores = std::move(scores);
    }
    return out;
}

namespace detail {

template <typename Fn>
void parallel_for(int n, int threads, Fn&& fn) {
    if (threads <= 0) threads = static_cast<int>(std::thread::hardware_concurrency());
    threads = std::max(1, std::min(threads, n));
    if (threads == 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t)
        pool.emplace_back([&, t] {
            for (int i = t; i < n; i += threads) fn(i);
        });
    for (auto& th : pool) th.join();
}

}  // namespace detail

struct PredictionBatch {
    double accuracy = 0.0;
    std::vector<PredictionOutcome> outcomes;  // test row order
};

/// Maps test gold labels into the training vocabulary by name; a label the
/// training set never saw is an error.
inline std::vector<int> map_test_labels(const ClusterSet& cs, const LabeledDataset& test) {
    std::vector<int> mapping(test.label_names.size(), -1);
    for (std::size_t i = 0; i < test.label_names.size(); ++i) {
        for (std::size_t j = 0; j < cs.label_names.size(); ++j)
            if (cs.label_names[j] == test.label_names[i]) mapping[i] = static_cast<int>(j);
        if (mapping[i] < 0)
            throw ConsistencyError("test label '" + test.label_names[i] +
                                   "' does not occur in the training vocabulary");
    }
    return mapping;
}

/// Fraction of test points whose nearest-cluster label matches gold.
inline PredictionBatch intra_accuracy(const ClusterSet& cs, const LabeledDataset& train,
                                      const LabeledDataset& test, bool with_scores = false,
                                      int threads = 1) {
    if (test.dim() != train.dim())
        throw ConsistencyError("test dimension " + std::to_string(test.dim()) +
                               " does not match training dimension " + std::to_string(train.dim()));
    auto mapping = map_test_labels(cs, test);
    PredictionBatch batch;
    batch.outcomes.resize(static_cast<std::size_t>(test.n_points()));
    detail::parallel_for(test.n_points(), threads, [&](int i) {
        auto out = predict(cs, train, test.points.row(i).transpose(), with_scores);
        out.point_id = test.ids[i];
        out.gold_label = mapping[test.labels[i]];
        batch.outcomes[static_cast<std::size_t>(i)] = std::move(out);
    });
    int correct = 0;
    for (const auto& o : batch.outcomes)
        if (o.predicted_label == o.gold_label) ++correct;
    batch.accuracy = test.n_points() ? static_cast<double>(correct) / test.n_points() : 0.0;
    return batch;
}

/// Majority label among the k nearest training points. Distance ties prefer
/// the smaller point index; vote ties prefer the smaller label id.
inline int knn_predict(const LabeledDataset& train, const Eigen::VectorXd& x, int k) {
    if (k < 1 || k > train.n_points())
        throw ConsistencyError("k must be in [1, n_points], got " + std::to_string(k));
    if (x.size() != train.dim())
        throw ConsistencyError("query dimension does not match dataset dimension");
    std::vector<std::pair<double, int>> by_dist(static_cast<std::size_t>(train.n_points()));
    for (int i = 0; i < train.n_points(); ++i)
        by_dist[static_cast<std::size_t>(i)] = {(train.points.row(i).transpose() - x).squaredNorm(), i};
    std::partial_sort(by_dist.begin(), by_dist.begin() + k, by_dist.end());
    std::vector<int> votes(train.label_names.size(), 0);
    for (int i = 0; i < k; ++i) ++votes[train.labels[by_dist[static_cast<std::size_t>(i)].second]];
    int best = 0;
    for (std::size_t l = 1; l < votes.size(); ++l)
        if (votes[l] > votes[static_cast<std::size_t>(best)]) best = static_cast<int>(l);
    return best;
}

inline double knn_accuracy(const LabeledDataset& train, const LabeledDataset& test, int k,
                           int threads = 1) {
    if (test.dim() != train.dim()) throw ConsistencyError("test dimension mismatch for kNN");
    std::vector<int> mapping(test.label_names.size(), -1);
    for (std::size_t i = 0; i < test.label_names.size(); ++i) {
        mapping[i] = train.label_id(test.label_names[i]);
        if (mapping[i] < 0)
            throw ConsistencyError("test label '" + test.label_names[i] +
                                   "' does not occur in the training vocabulary");
    }
    std::vector<int> predicted(static_cast<std::size_t>(test.n_points()));
    detail::parallel_for(test.n_points(), threads, [&](int i) {
        predicted[static_cast<std::size_t>(i)] = knn_predict(train, test.points.row(i).transpose(), k);
    });
    int correct = 0;
    for (int i = 0; i < test.n_points(); ++i)
        if (predicted[static_cast<std::size_t>(i)] == mapping[test.labels[i]]) ++correct;
    return test.n_points() ? static_cast<double>(correct) / test.n_points() : 0.0;
}

struct DifficultExample {
    std::string point_id;
    int gold_label = -1;
    int predicted_label = -1;
    double gap = 0.0;               // distance_gold - distance_nearest
    double distance_nearest = 0.0;  // to the nearest cluster overall
    double distance_gold = 0.0;     // to the nearest cluster of the gold label
};

/// Misclassified test points ranked by how far the gold label's nearest hull
/// is behind the winning hull. Large gaps flag annotations worth a second look.
inline std::vector<DifficultExample> difficult_examples(const ClusterSet& cs,
                                                        const std::vector<PredictionOutcome>& outcomes,
                                                        int top_n) {
    std::vector<DifficultExample> out;
    for (const auto& o : outcomes) {
        if (o.gold_label < 0)
            throw ConsistencyError("difficult-example ranking needs gold labels on every outcome");
        if (o.predicted_label == o.gold_label) continue;
        DifficultExample ex;
        ex.point_id = o.point_id;
        ex.gold_label = o.gold_label;
        ex.predicted_label = o.predicted_label;
        ex.distance_nearest = std::numeric_limits<double>::infinity();
        ex.distance_gold = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < o.cluster_ids.size(); ++c) {
            ex.distance_nearest = std::min(ex.distance_nearest, o.distances[c]);
            if (cs.clusters[c].label == o.gold_label)
                ex.distance_gold = std::min(ex.distance_gold, o.distances[c]);
        }
        ex.gap = ex.distance_gold - ex.distance_nearest;
        out.push_back(std::move(ex));
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const DifficultExample& a, const DifficultExample& b) { return a.gap > b.gap; });
    if (top_n >= 0 && static_cast<int>(out.size()) > top_n) out.resize(static_cast<std::size_t>(top_n));
    return out;
}

inline std::vector<DifficultExample> difficult_examples(const ClusterSet& cs,
                                                        const LabeledDataset& train,
                                                        const LabeledDataset& test, int top_n,
                                                        int threads = 1) {
    auto batch = intra_accuracy(cs, train, test, /*with_scores=*/false, threads);
    return difficult_examples(cs, batch.outcomes, top_n);
}

struct ErrorDistribution {
    struct Bin {
        double error_pct = 0.0;
        int pair_count = 0;   // label pairs whose distance falls in this bin
        int error_count = 0;  // misclassifications attributed to this bin
    };
    Bin bins[3];  // small, medium, large
    double edges[2] = {0.0, 0.0};
    int total_errors = 0;
};

/// Attributes each misclassification to the distance bin of its (gold,
/// predicted) label pair. Label-pair distance is the minimum over the labels'
/// cluster pairs; bins are an equal-width split of those aggregates.
inline ErrorDistribution error_distribution(const DistanceReport& dr,
                                            const std::vector<PredictionOutcome>& outcomes) {
    if (dr.pairs.empty()) throw ConsistencyError("error distribution needs a non-empty distance report");
    std::map<std::pair<int, int>, double> label_pair_dist;
    for (const auto& p : dr.pairs) {
        auto key = std::minmax(p.label_a, p.label_b);
        auto [it, inserted] = label_pair_dist.try_emplace(key, p.distance);
        if (!inserted) it->second = std::min(it->second, p.distance);
    }
    double lo = label_pair_dist.begin()->second, hi = lo;
    for (const auto& [key, d] : label_pair_dist) {
        lo = std::min(lo, d);
        hi = std::max(hi, d);
    }
    ErrorDistribution ed;
    ed.edges[0] = lo + (hi - lo) / 3.0;
    ed.edges[1] = lo + 2.0 * (hi - lo) / 3.0;

    std::map<std::pair<int, int>, DistanceBin> pair_bin;
    for (const auto& [key, d] : label_pair_dist) {
        DistanceBin b = detail::assign_bin(d, lo, hi);
        pair_bin[key] = b;
        ++ed.bins[static_cast<int>(b)].pair_count;
    }
    for (const auto& o : outcomes) {
        if (o.gold_label < 0)
            throw ConsistencyError("error distribution needs gold labels on every outcome");
        if (o.predicted_label == o.gold_label) continue;
        auto key = std::minmax(o.gold_label, o.predicted_label);
        auto it = pair_bin.find(key);
        if (it == pair_bin.end())
            throw ConsistencyError("outcome references a label pair absent from the distance report");
        ++ed.bins[static_cast<int>(it->second)].error_count;
        ++ed.total_errors;
    }
    for (auto& bin : ed.bins)
        bin.error_pct = ed.total_errors ? 100.0 * bin.error_count / ed.total_errors : 0.0;
    return ed;
}

/// One bin cell in the reporting style "97.17% (555)"; exact zero renders
/// as "0%".
inline std::string format_error_bin(const ErrorDistribution::Bin& bin) {
    char buf[64];
    if (bin.error_pct == 0.0)
        std::snprintf(buf, sizeof(buf), "0%% (%d)", bin.pair_count);
    else
        std::snprintf(buf, sizeof(buf), "%.2f%% (%d)", bin.error_pct, bin.pair_count);
    return buf;
}

inline std::string format_error_distribution(const ErrorDistribution& ed) {
    std::string out;
    const char* names[3] = {"small", "medium", "large"};
    for (int b = 0; b < 3; ++b) {
        if (b) out += "  ";
        out += names[b];
        out += " ";
        out += format_error_bin(ed.bins[b]);
    }
    return out;
}

}  // namespace geoprobe
