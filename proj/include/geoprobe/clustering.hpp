#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <map>
#include <queue>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "geoprobe/dataset.hpp"
#include "geoprobe/errors.hpp"
#include "geoprobe/geometry.hpp"

namespace geoprobe {

/// A label-pure group of point indices. Ids are creation-ordered: singletons
/// take their point index, merged clusters take max existing id + 1.
struct Cluster {
    int id = 0;
    int label = 0;
    std::vector<int> members;  // sorted ascending
    Eigen::VectorXd centroid;

    int size() const { return static_cast<int>(members.size()); }
};

struct MergeRecord {
    int step = 0;  // 1-based commit order
    int id_a = 0;
    int id_b = 0;
    int new_id = 0;
};

struct ProbeConfig {
    enum class Variant { basic, fast };

    Variant variant = Variant::basic;
    bool caching = true;
    int noise_min_size = 0;
    bool normalize = false;
    double tol = 1e-9;      // kernel duality-gap tolerance
    double tau_sep = -1.0;  // absolute separability threshold; < 0 derives from data
    long max_kernel_iterations = 100000;
    // Tie-breaking is always lexicographic on (id_a, id_b); kept as a config
    // field so serialized runs state the rule they used.
    std::string tie_break = "lexicographic";
};

struct ProbeStats {
    long kernel_calls = 0;
    int rollbacks = 0;
};

struct ClusterSet {
    std::vector<Cluster> clusters;  // live clusters, ascending id
    std::vector<MergeRecord> merge_log;
    ProbeConfig config;
    std::vector<std::string> label_names;
    int n_points = 0;
    int dim = 0;
    ProbeStats stats;
    std::vector<int> flagged;  // kept by filter_noise despite being small

    int n_clusters() const { return static_cast<int>(clusters.size()); }

    const Cluster* find(int id) const {
        for (const auto& c : clusters)
            if (c.id == id) return &c;
        return nullptr;
    }

    std::vector<int> per_label_counts() const {
        std::vector<int> counts(label_names.size(), 0);
        for (const auto& c : clusters) ++counts[c.label];
        return counts;
    }
};

/// Applies the in-place transforms the config asks for (currently L2
/// normalization). Call once after loading, before probing or predicting.
inline void prepare_dataset(LabeledDataset& d, const ProbeConfig& cfg) {
    if (cfg.normalize) d.l2_normalize();
}

/// Throws ConsistencyError when a (typically reloaded) ClusterSet does not
/// describe the given dataset: bad member indices, broken partition, label
/// mismatches.
inline void validate_against(const ClusterSet& cs, const LabeledDataset& d) {
    if (cs.n_points != d.n_points())
        throw ConsistencyError("cluster set built for " + std::to_string(cs.n_points) +
                               " points, dataset has " + std::to_string(d.n_points()));
    if (cs.label_names != d.label_names)
        throw ConsistencyError("cluster set label vocabulary does not match dataset");
    std::vector<char> seen(static_cast<std::size_t>(d.n_points()), 0);
    for (const auto& c : cs.clusters) {
        if (c.label < 0 || c.label >= d.n_labels())
            throw ConsistencyError("cluster " + std::to_string(c.id) + " has unknown label id");
        if (c.members.empty())
            throw ConsistencyError("cluster " + std::to_string(c.id) + " is empty");
        for (int m : c.members) {
            if (m < 0 || m >= d.n_points())
                throw ConsistencyError("cluster " + std::to_string(c.id) +
                                       " member index out of range: " + std::to_string(m));
            if (seen[static_cast<std::size_t>(m)]++)
                throw ConsistencyError("point " + std::to_string(m) + " appears in two clusters");
            if (d.labels[m] != c.label)
                throw ConsistencyError("cluster " + std::to_string(c.id) + " label disagrees with point " +
                                       std::to_string(m));
        }
    }
    for (int i = 0; i < d.n_points(); ++i)
        if (!seen[static_cast<std::size_t>(i)])
            throw ConsistencyError("point " + std::to_string(i) + " missing from every cluster");
}

namespace detail {

using Signature = std::vector<int>;  // sorted member indices

inline bool is_subset(const Signature& small, const Signature& big) {
    return small.size() <= big.size() &&
           std::includes(big.begin(), big.end(), small.begin(), small.end());
}

/// Verdict caches lifted over member-set signatures. Blacklist entries are
/// failed merge pairs: any candidate whose sides contain them fails too.
/// Whitelist entries are hull pairs verified disjoint: any pair of subsets
/// is disjoint as well. Both rules only skip kernel calls; they never change
/// a verdict.
struct PairCache {
    std::vector<std::pair<Signature, Signature>> blacklist;
    std::vector<std::pair<Signature, Signature>> whitelist;

    bool blocks_merge(const Signature& p, const Signature& q) const {
        for (const auto& [x, y] : blacklist)
            if ((is_subset(x, p) && is_subset(y, q)) || (is_subset(x, q) && is_subset(y, p)))
                return true;
        return false;
    }

    bool known_disjoint(const Signature& p, const Signature& q) const {
        for (const auto& [x, y] : whitelist)
            if ((is_subset(p, x) && is_subset(q, y)) || (is_subset(q, x) && is_subset(p, y)))
                return true;
        return false;
    }
};

class ProbeEngine {
public:
    ProbeEngine(const LabeledDataset& d, const ProbeConfig& cfg) : data_(d), cfg_(cfg) {
        if (cfg_.tau_sep < 0.0) cfg_.tau_sep = kTauSepScale * (1.0 + d.diameter_bound());
        kernel_opts_.tol = cfg_.tol;
        kernel_opts_.tau_sep = cfg_.tau_sep;
        kernel_opts_.max_iterations = cfg_.max_kernel_iterations;
        build_conflicts();
    }

    ClusterSet run() {
        reset_to_singletons();
        if (cfg_.variant == ProbeConfig::Variant::basic) {
            merge_loop(/*checked=*/true);
        } else {
            merge_loop(/*checked=*/false);
            auto overlaps = collect_overlaps();
            if (!overlaps.empty()) {
                int first_error = walk_back(overlaps);
                rollback_to(first_error - 1);
                ++stats_.rollbacks;
                merge_loop(/*checked=*/true);
            }
        }
        return finish();
    }

private:
    struct Candidate {
        double dist2;
        int a, b;
        bool operator>(const Candidate& o) const {
            if (dist2 != o.dist2) return dist2 > o.dist2;
            if (a != o.a) return a > o.a;
            return b > o.b;
        }
    };
    using Heap = std::priority_queue<Candidate, std::vector<Candidate>, std::greater<Candidate>>;

    void build_conflicts() {
        auto rep = validate(data_);
        for (auto [i, j] : rep.duplicate_conflicts) {
            conflicts_[i].push_back(j);
            conflicts_[j].push_back(i);
        }
    }

    void reset_to_singletons() {
        archive_.clear();
        live_.clear();
        merge_log_.clear();
        id_blacklist_.clear();
        const int n = data_.n_points();
        for (int i = 0; i < n; ++i) {
            Cluster c;
            c.id = i;
            c.label = data_.labels[i];
            c.members = {i};
            c.centroid = data_.points.row(i).transpose();
            archive_.emplace(i, std::move(c));
            live_.insert(i);
        }
        next_id_ = n;
        heap_ = Heap();
        seed_heap();
    }

    void seed_heap() {
        std::vector<int> ids(live_.begin(), live_.end());
        for (std::size_t i = 0; i < ids.size(); ++i)
            for (std::size_t j = i + 1; j < ids.size(); ++j)
                push_candidate(ids[i], ids[j]);
    }

    void push_candidate(int a, int b) {
        const Cluster& ca = archive_.at(a);
        const Cluster& cb = archive_.at(b);
        if (ca.label != cb.label) return;
        heap_.push({(ca.centroid - cb.centroid).squaredNorm(), std::min(a, b), std::max(a, b)});
    }

    // Selection rule: minimum centroid distance, ties by lexicographic
    // (id_a, id_b). Entries for dead or flagged pairs are discarded lazily.
    bool pop_candidate(int& a, int& b) {
        while (!heap_.empty()) {
            Candidate c = heap_.top();
            heap_.pop();
            if (!live_.count(c.a) || !live_.count(c.b)) continue;
            if (id_blacklist_.count({c.a, c.b})) continue;
            a = c.a;
            b = c.b;
            return true;
        }
        return false;
    }

    Signature merged_members(int a, int b) const {
        const auto& ma = archive_.at(a).members;
        const auto& mb = archive_.at(b).members;
        Signature out;
        out.reserve(ma.size() + mb.size());
        std::merge(ma.begin(), ma.end(), mb.begin(), mb.end(), std::back_inserter(out));
        return out;
    }

    /// True when some point of `s` has an identical-coordinate twin with a
    /// different label inside `c`. Such hulls share a point and can never be
    /// strictly separated, so the kernel call is skipped.
    bool conflict_overlap(const Signature& s, const Cluster& c) const {
        if (conflicts_.empty()) return false;
        for (int p : s) {
            auto it = conflicts_.find(p);
            if (it == conflicts_.end()) continue;
            for (int q : it->second)
                if (std::binary_search(c.members.begin(), c.members.end(), q)) return true;
        }
        return false;
    }

    bool hulls_disjoint(const Signature& s, const Cluster& other) {
        if (conflict_overlap(s, other)) return false;
        if (cfg_.caching && cache_.known_disjoint(s, other.members)) return true;
        ++stats_.kernel_calls;
        bool disjoint = false;
        try {
            disjoint = separable_verdict(PointsView(data_.points, s),
                                         PointsView(data_.points, other.members), kernel_opts_);
        } catch (const KernelError& e) {
            throw KernelError(std::string(e.what()) + " while testing a " +
                              std::to_string(s.size()) + "-point hull against cluster " +
                              std::to_string(other.id));
        }
        if (disjoint && cfg_.caching) cache_.whitelist.emplace_back(s, other.members);
        return disjoint;
    }

    /// Algorithm-1 overlap test: the tentative hull against every live
    /// cluster of a different label, ascending id, first failure wins.
    bool merge_allowed(const Signature& s, int label, int skip_a, int skip_b) {
        for (int id : live_) {
            if (id == skip_a || id == skip_b) continue;
            const Cluster& other = archive_.at(id);
            if (other.label == label) continue;
            if (!hulls_disjoint(s, other)) return false;
        }
        return true;
    }

    void commit_merge(int a, int b, Signature members) {
        Cluster merged;
        merged.id = next_id_++;
        merged.label = archive_.at(a).label;
        merged.members = std::move(members);
        merged.centroid = Eigen::VectorXd::Zero(data_.dim());
        for (int m : merged.members) merged.centroid += data_.points.row(m).transpose();
        merged.centroid /= static_cast<double>(merged.members.size());

        live_.erase(a);
        live_.erase(b);
        merge_log_.push_back({static_cast<int>(merge_log_.size()) + 1, a, b, merged.id});
        int new_id = merged.id;
        archive_.emplace(new_id, std::move(merged));
        for (int id : live_) push_candidate(id, new_id);
        live_.insert(new_id);
    }

    void merge_loop(bool checked) {
        int a, b;
        while (pop_candidate(a, b)) {
            if (!checked) {
                commit_merge(a, b, merged_members(a, b));
                continue;
            }
            const Signature& ma = archive_.at(a).members;
            const Signature& mb = archive_.at(b).members;
            if (cfg_.caching && cache_.blocks_merge(ma, mb)) {
                id_blacklist_.insert({a, b});
                continue;
            }
            Signature s = merged_members(a, b);
            if (merge_allowed(s, archive_.at(a).label, a, b)) {
                commit_merge(a, b, std::move(s));
            } else {
                id_blacklist_.insert({a, b});
                if (cfg_.caching) cache_.blacklist.emplace_back(ma, mb);
            }
        }
    }

    using PairSet = std::set<std::pair<int, int>>;

    PairSet collect_overlaps() {
        PairSet overlaps;
        std::vector<int> ids(live_.begin(), live_.end());
        for (std::size_t i = 0; i < ids.size(); ++i)
            for (std::size_t j = i + 1; j < ids.size(); ++j) {
                const Cluster& ca = archive_.at(ids[i]);
                const Cluster& cb = archive_.at(ids[j]);
                if (ca.label == cb.label) continue;
                if (!hulls_disjoint(ca.members, cb)) overlaps.insert({ids[i], ids[j]});
            }
        return overlaps;
    }

    /// Undoes merges from the end until no cross-label overlap remains among
    /// live clusters; returns the 1-based step of the earliest bad commit.
    /// Hulls only grow along the log, so overlap, once present, persists:
    /// the first dirty state is exactly the first invalid commit.
    int walk_back(PairSet& overlaps) {
        int t = static_cast<int>(merge_log_.size());
        while (!overlaps.empty()) {
            const MergeRecord& rec = merge_log_[static_cast<std::size_t>(t) - 1];
            live_.erase(rec.new_id);
            live_.insert(rec.id_a);
            live_.insert(rec.id_b);

            std::vector<int> partners;
            for (auto it = overlaps.begin(); it != overlaps.end();) {
                if (it->first == rec.new_id || it->second == rec.new_id) {
                    partners.push_back(it->first == rec.new_id ? it->second : it->first);
                    it = overlaps.erase(it);
                } else {
                    ++it;
                }
            }
            // Only pairs that overlapped the undone merge can overlap its parts.
            for (int part : {rec.id_a, rec.id_b})
                for (int x : partners)
                    if (!hulls_disjoint(archive_.at(part).members, archive_.at(x)))
                        overlaps.insert({std::min(part, x), std::max(part, x)});
            --t;
        }
        return t + 1;
    }

    /// Restores the state after `keep` commits: the merge log is the
    /// checkpoint, so this is a replay of entries 1..keep from singletons.
    void rollback_to(int keep) {
        live_.clear();
        for (int i = 0; i < data_.n_points(); ++i) live_.insert(i);
        for (int t = 0; t < keep; ++t) {
            const MergeRecord& rec = merge_log_[static_cast<std::size_t>(t)];
            live_.erase(rec.id_a);
            live_.erase(rec.id_b);
            live_.insert(rec.new_id);
        }
        merge_log_.resize(static_cast<std::size_t>(keep));
        next_id_ = data_.n_points() + keep;
        for (auto it = archive_.begin(); it != archive_.end();)
            it = (it->first >= next_id_) ? archive_.erase(it) : std::next(it);
        id_blacklist_.clear();
        heap_ = Heap();
        seed_heap();
    }

    ClusterSet finish() {
        ClusterSet cs;
        cs.config = cfg_;
        cs.label_names = data_.label_names;
        cs.n_points = data_.n_points();
        cs.dim = data_.dim();
        cs.merge_log = std::move(merge_log_);
        cs.stats = stats_;
        for (int id : live_) cs.clusters.push_back(archive_.at(id));
        return cs;
    }

    const LabeledDataset& data_;
    ProbeConfig cfg_;
    KernelOptions kernel_opts_;
    std::unordered_map<int, Cluster> archive_;
    std::set<int> live_;
    std::vector<MergeRecord> merge_log_;
    std::set<std::pair<int, int>> id_blacklist_;
    Heap heap_;
    PairCache cache_;
    std::unordered_map<int, std::vector<int>> conflicts_;
    ProbeStats stats_;
    int next_id_ = 0;
};

}  // namespace detail

/// Bottom-up constrained clustering: repeatedly merge the closest same-label
/// pair whose merged hull stays disjoint from every other label's hulls.
inline ClusterSet direct_probe(const LabeledDataset& d, ProbeConfig cfg = {}) {
    cfg.variant = ProbeConfig::Variant::basic;
    return detail::ProbeEngine(d, cfg).run();
}

/// Merge-to-the-end variant: cluster greedily without overlap checks, locate
/// the first invalid commit, roll back to just before it, and continue with
/// checks. Produces the same partition as direct_probe.
inline ClusterSet direct_probe_fast(const LabeledDataset& d, ProbeConfig cfg = {}) {
    cfg.variant = ProbeConfig::Variant::fast;
    return detail::ProbeEngine(d, cfg).run();
}

struct FilterResult {
    ClusterSet set;
    std::vector<Cluster> removed;
};

/// Drops clusters with at most `min_size` members, except that the last
/// cluster of a label is always kept (and flagged). min_size 0 keeps all.
inline FilterResult filter_noise(const ClusterSet& cs, int min_size) {
    if (min_size < 0) throw ConsistencyError("noise_min_size must be >= 0");
    FilterResult out;
    out.set = cs;
    if (min_size == 0) return out;

    std::map<int, std::vector<const Cluster*>> by_label;
    for (const auto& c : cs.clusters) by_label[c.label].push_back(&c);

    std::set<int> keep, flag;
    for (auto& [label, clusters] : by_label) {
        bool all_small = true;
        for (const Cluster* c : clusters)
            if (c->size() > min_size) all_small = false;
        if (all_small) {
            // Keep the largest (smallest id on ties) so the label survives.
            const Cluster* survivor = clusters.front();
            for (const Cluster* c : clusters)
                if (c->size() > survivor->size()) survivor = c;
            keep.insert(survivor->id);
            flag.insert(survivor->id);
        } else {
            for (const Cluster* c : clusters)
                if (c->size() > min_size) keep.insert(c->id);
        }
    }

    out.set.clusters.clear();
    for (const auto& c : cs.clusters) {
        if (keep.count(c.id))
            out.set.clusters.push_back(c);
        else
            out.removed.push_back(c);
    }
    out.set.flagged.assign(flag.begin(), flag.end());
    return out;
}

/// Rebuilds the cluster state reached after replaying the given merge log
/// from singletons. Ids and centroids come out exactly as the engine made them.
inline ClusterSet replay_merge_log(const LabeledDataset& d, const ProbeConfig& cfg,
                                   const std::vector<MergeRecord>& log) {
    std::map<int, Cluster> live;
    for (int i = 0; i < d.n_points(); ++i) {
        Cluster c;
        c.id = i;
        c.label = d.labels[i];
        c.members = {i};
        c.centroid = d.points.row(i).transpose();
        live.emplace(i, std::move(c));
    }
    int next_id = d.n_points();
    for (const auto& rec : log) {
        auto ia = live.find(rec.id_a), ib = live.find(rec.id_b);
        if (ia == live.end() || ib == live.end() || rec.new_id != next_id)
            throw ConsistencyError("merge log is not replayable at step " + std::to_string(rec.step));
        Cluster merged;
        merged.id = next_id++;
        merged.label = ia->second.label;
        std::merge(ia->second.members.begin(), ia->second.members.end(), ib->second.members.begin(),
                   ib->second.members.end(), std::back_inserter(merged.members));
        merged.centroid = Eigen::VectorXd::Zero(d.dim());
        for (int m : merged.members) merged.centroid += d.points.row(m).transpose();
        merged.centroid /= static_cast<double>(merged.members.size());
        live.erase(ia);
        live.erase(rec.id_b);
        live.emplace(merged.id, std::move(merged));
    }
    ClusterSet cs;
    cs.config = cfg;
    cs.label_names = d.label_names;
    cs.n_points = d.n_points();
    cs.dim = d.dim();
    cs.merge_log = log;
    for (auto& [id, c] : live) cs.clusters.push_back(std::move(c));
    return cs;
}

}  // namespace geoprobe
