#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "geoprobe/errors.hpp"

namespace geoprobe {

/// Separating hyperplane w.x + b = 0; the positive side holds the first set.
struct Hyperplane {
    Eigen::VectorXd w;
    double b = 0.0;
};

/// Outcome of a hull separation query. `distance` is the Euclidean distance
/// between the two convex hulls; the certificate is present iff the pair is
/// separable, scaled so the nearest points of the two sets sit on the +1/-1
/// planes. Witnesses are the closest hull points, with their convex weights
/// over the respective input points.
struct SeparationResult {
    bool separable = false;
    double distance = 0.0;
    std::optional<Hyperplane> certificate;
    Eigen::VectorXd witness_a;
    Eigen::VectorXd witness_b;
    Eigen::VectorXd weights_a;
    Eigen::VectorXd weights_b;
    long iterations = 0;
    double gap = 0.0;       // duality gap at exit
    double tau_sep = 0.0;   // separability threshold used for the verdict
};

struct KernelOptions {
    double tol = 1e-9;          // relative duality-gap stopping rule
    double tau_sep = -1.0;      // absolute; < 0 derives 1e-7 * (1 + bbox diagonal)
    long max_iterations = 100000;
};

inline constexpr double kTauSepScale = 1e-7;
inline constexpr double kTauCert = 1e-6;  // certificate / witness check tolerance

/// Lightweight view over a point set: a dense matrix with rows as points,
/// optionally restricted to a row subset.
class PointsView {
public:
    PointsView(const Eigen::MatrixXd& m) : mat_(&m) {}  // NOLINT: implicit by design
    PointsView(const Eigen::MatrixXd& m, std::span<const int> subset)
        : mat_(&m), rows_(subset), subset_(true) {}

    int size() const { return subset_ ? static_cast<int>(rows_.size()) : static_cast<int>(mat_->rows()); }
    int dim() const { return static_cast<int>(mat_->cols()); }

    auto row(int i) const { return mat_->row(subset_ ? rows_[i] : i); }

    void dots(const Eigen::VectorXd& z, Eigen::VectorXd& out) const {
        if (!subset_) {
            out.noalias() = (*mat_) * z;
        } else {
            out.resize(size());
            for (int i = 0; i < size(); ++i) out[i] = mat_->row(rows_[i]).dot(z);
        }
    }

    Eigen::VectorXd centroid() const {
        Eigen::VectorXd c = Eigen::VectorXd::Zero(dim());
        for (int i = 0; i < size(); ++i) c += row(i).transpose();
        return c / size();
    }

    void grow_bbox(Eigen::VectorXd& lo, Eigen::VectorXd& hi) const {
        for (int i = 0; i < size(); ++i) {
            lo = lo.cwiseMin(row(i).transpose());
            hi = hi.cwiseMax(row(i).transpose());
        }
    }

private:
    const Eigen::MatrixXd* mat_;
    std::span<const int> rows_;
    bool subset_ = false;
};

namespace detail {

inline void check_pair(const PointsView& a, const PointsView& b) {
    if (a.size() == 0 || b.size() == 0)
        throw ConsistencyError("separation query on an empty point set");
    if (a.dim() != b.dim())
        throw ConsistencyError("dimension mismatch: " + std::to_string(a.dim()) + " vs " +
                               std::to_string(b.dim()));
}

inline double resolve_tau_sep(const PointsView& a, const PointsView& b, const KernelOptions& opts) {
    if (opts.tau_sep >= 0.0) return opts.tau_sep;
    Eigen::VectorXd lo = Eigen::VectorXd::Constant(a.dim(), std::numeric_limits<double>::infinity());
    Eigen::VectorXd hi = Eigen::VectorXd::Constant(a.dim(), -std::numeric_limits<double>::infinity());
    a.grow_bbox(lo, hi);
    b.grow_bbox(lo, hi);
    return kTauSepScale * (1.0 + (hi - lo).norm());
}

/// Total order on point sets: size first, then coordinate-lexicographic.
/// Used to canonicalize argument order so that distance is exactly symmetric.
inline int compare_views(const PointsView& a, const PointsView& b) {
    if (a.size() != b.size()) return a.size() < b.size() ? -1 : 1;
    for (int i = 0; i < a.size(); ++i)
        for (int c = 0; c < a.dim(); ++c) {
            double x = a.row(i)[c], y = b.row(i)[c];
            if (x != y) return x < y ? -1 : 1;
        }
    return 0;
}

// Minimum-norm point of conv(A) - conv(B) by pairwise Frank-Wolfe over the
// difference atoms a_i - b_j. The active set carries explicit simplex
// weights, which become the convex-combination weights of the witnesses.
class MinNormKernel {
public:
    MinNormKernel(const PointsView& a, const PointsView& b, const KernelOptions& opts, double tau)
        : a_(a), b_(b), opts_(opts), tau_(tau) {}

    struct Exit {
        long iterations = 0;
        double gap = 0.0;
        bool overlap_certified = false;
        bool separable_certified = false;
    };

    /// verdict_only permits early exit as soon as either verdict is certain.
    Exit run(bool verdict_only) {
        const int dim = a_.dim();
        init();
        Eigen::VectorXd dots_a, dots_b;
        Exit exit;

        for (long iter = 0;; ++iter) {
            if ((iter & 127) == 127) rebuild_iterate();

            a_.dots(z_, dots_a);
            b_.dots(z_, dots_b);
            int fw_i = argmin(dots_a);
            int fw_j = argmax(dots_b);
            double support = dots_a[fw_i] - dots_b[fw_j];  // min over atoms of <z, atom>
            double zz = z_.squaredNorm();
            double gap = 2.0 * (zz - support);
            if (gap < 0.0) gap = 0.0;
            double dist = std::sqrt(zz);

            exit.iterations = iter;
            exit.gap = gap;
            if (dist <= 0.5 * tau_) {
                exit.overlap_certified = true;
                return exit;
            }
            if (verdict_only && support > 0.0 && support / dist > tau_) {
                // support/dist lower-bounds the true distance
                exit.separable_certified = true;
                return exit;
            }
            if (gap <= opts_.tol * std::max(zz, tau_ * tau_)) return exit;
            if (iter >= opts_.max_iterations)
                throw KernelError("separation kernel hit the iteration cap (" +
                                  std::to_string(opts_.max_iterations) + ") with gap " +
                                  std::to_string(gap));

            // Pairwise step: move weight from the worst active atom to the
            // Frank-Wolfe atom; exact line search for the quadratic.
            int away = away_atom();
            Eigen::VectorXd fw_diff = a_.row(fw_i).transpose() - b_.row(fw_j).transpose();
            int fw_k = find_or_add_atom(fw_i, fw_j, fw_diff);
            away = (away < 0) ? fw_k : away;

            if (fw_k == away) {
                // Degenerate pairwise direction; plain Frank-Wolfe step.
                Eigen::VectorXd dir = fw_diff - z_;
                double denom = dir.squaredNorm();
                if (denom <= 0.0) continue;
                double gamma = std::clamp(-z_.dot(dir) / denom, 0.0, 1.0);
                if (gamma <= 0.0) continue;
                for (auto& at : atoms_) at.w *= (1.0 - gamma);
                atoms_[fw_k].w += gamma;
                z_ += gamma * dir;
            } else {
                Eigen::VectorXd dir = atoms_[fw_k].diff - atoms_[away].diff;
                double denom = dir.squaredNorm();
                if (denom <= 0.0) continue;
                double gamma = std::clamp(-z_.dot(dir) / denom, 0.0, atoms_[away].w);
                if (gamma <= 0.0) continue;
                atoms_[fw_k].w += gamma;
                atoms_[away].w -= gamma;
                z_ += gamma * dir;
                if (atoms_[away].w <= 1e-16) drop_atom(away);
            }
            prune_weights();
        }
    }

    /// Per-point simplex weights aggregated from the active atoms.
    void collect_weights(Eigen::VectorXd& wa, Eigen::VectorXd& wb) const {
        wa = Eigen::VectorXd::Zero(a_.size());
        wb = Eigen::VectorXd::Zero(b_.size());
        double total = 0.0;
        for (const auto& at : atoms_) total += at.w;
        for (const auto& at : atoms_) {
            wa[at.ia] += at.w / total;
            wb[at.ib] += at.w / total;
        }
    }

private:
    struct Atom {
        int ia, ib;
        double w;
        Eigen::VectorXd diff;
    };

    void init() {
        // Fixed start: in each set, the vertex nearest the other set's centroid.
        Eigen::VectorXd ca = a_.centroid(), cb = b_.centroid();
        int i0 = nearest(a_, cb), j0 = nearest(b_, ca);
        atoms_.clear();
        atoms_.push_back({i0, j0, 1.0, a_.row(i0).transpose() - b_.row(j0).transpose()});
        z_ = atoms_[0].diff;
    }

    static int nearest(const PointsView& v, const Eigen::VectorXd& target) {
        int best = 0;
        double best_d = (v.row(0).transpose() - target).squaredNorm();
        for (int i = 1; i < v.size(); ++i) {
            double d = (v.row(i).transpose() - target).squaredNorm();
            if (d < best_d) {
                best_d = d;
                best = i;
            }
        }
        return best;
    }

    static int argmin(const Eigen::VectorXd& v) {
        int best = 0;
        for (int i = 1; i < v.size(); ++i)
            if (v[i] < v[best]) best = i;
        return best;
    }
    static int argmax(const Eigen::VectorXd& v) {
        int best = 0;
        for (int i = 1; i < v.size(); ++i)
            if (v[i] > v[best]) best = i;
        return best;
    }

    int away_atom() const {
        int best = -1;
        double best_dot = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < atoms_.size(); ++k) {
            if (atoms_[k].w <= 0.0) continue;
            double d = z_.dot(atoms_[k].diff);
            if (d > best_dot) {
                best_dot = d;
                best = static_cast<int>(k);
            }
        }
        return best;
    }

    int find_or_add_atom(int ia, int ib, const Eigen::VectorXd& diff) {
        for (std::size_t k = 0; k < atoms_.size(); ++k)
            if (atoms_[k].ia == ia && atoms_[k].ib == ib) return static_cast<int>(k);
        atoms_.push_back({ia, ib, 0.0, diff});
        return static_cast<int>(atoms_.size()) - 1;
    }

    void drop_atom(int k) { atoms_.erase(atoms_.begin() + k); }

    void prune_weights() {
        for (auto& at : atoms_)
            if (at.w < 0.0) at.w = 0.0;
    }

    void rebuild_iterate() {
        // Re-derive z and the weight normalization from the atoms to keep
        // incremental drift out of long runs.
        std::erase_if(atoms_, [](const Atom& at) { return at.w <= 0.0; });
        double total = 0.0;
        for (const auto& at : atoms_) total += at.w;
        if (total <= 0.0) return;
        z_.setZero();
        for (auto& at : atoms_) {
            at.w /= total;
            z_ += at.w * at.diff;
        }
    }

    const PointsView& a_;
    const PointsView& b_;
    const KernelOptions& opts_;
    double tau_;
    std::vector<Atom> atoms_;
    Eigen::VectorXd z_;
};

inline SeparationResult run_full(const PointsView& a, const PointsView& b, const KernelOptions& opts) {
    double tau = resolve_tau_sep(a, b, opts);
    MinNormKernel kernel(a, b, opts, tau);
    auto exit = kernel.run(/*verdict_only=*/false);

    SeparationResult res;
    kernel.collect_weights(res.weights_a, res.weights_b);
    res.witness_a = Eigen::VectorXd::Zero(a.dim());
    res.witness_b = Eigen::VectorXd::Zero(a.dim());
    for (int i = 0; i < a.size(); ++i)
        if (res.weights_a[i] > 0.0) res.witness_a += res.weights_a[i] * a.row(i).transpose();
    for (int j = 0; j < b.size(); ++j)
        if (res.weights_b[j] > 0.0) res.witness_b += res.weights_b[j] * b.row(j).transpose();

    res.distance = (res.witness_a - res.witness_b).norm();
    res.tau_sep = tau;
    res.separable = res.distance > tau;
    res.iterations = exit.iterations;
    res.gap = exit.gap;
    if (res.separable) {
        // w = 2(u - v)/d^2 puts the witness pair exactly on the +-1 planes.
        Eigen::VectorXd delta = res.witness_a - res.witness_b;
        double d2 = res.distance * res.distance;
        Hyperplane h;
        h.w = (2.0 / d2) * delta;
        h.b = -h.w.dot(0.5 * (res.witness_a + res.witness_b));
        res.certificate = std::move(h);
    }
    return res;
}

/// Early-exit overlap test used by the clustering engine: certifies the
/// verdict without converging the distance.
inline bool separable_verdict(const PointsView& a, const PointsView& b, const KernelOptions& opts) {
    check_pair(a, b);
    double tau = resolve_tau_sep(a, b, opts);
    MinNormKernel kernel(a, b, opts, tau);
    auto exit = kernel.run(/*verdict_only=*/true);
    if (exit.overlap_certified) return false;
    if (exit.separable_certified) return true;
    Eigen::VectorXd wa, wb;
    kernel.collect_weights(wa, wb);
    Eigen::VectorXd u = Eigen::VectorXd::Zero(a.dim()), v = Eigen::VectorXd::Zero(a.dim());
    for (int i = 0; i < a.size(); ++i)
        if (wa[i] > 0.0) u += wa[i] * a.row(i).transpose();
    for (int j = 0; j < b.size(); ++j)
        if (wb[j] > 0.0) v += wb[j] * b.row(j).transpose();
    return (u - v).norm() > tau;
}

}  // namespace detail

/// Euclidean distance between conv(A) and conv(B) with witnesses and, when
/// the hulls are disjoint, a max-margin hyperplane certificate.
inline SeparationResult hull_distance(const PointsView& a, const PointsView& b,
                                      const KernelOptions& opts = {}) {
    detail::check_pair(a, b);
    if (detail::compare_views(a, b) <= 0) return detail::run_full(a, b, opts);

    // Canonical argument order makes the distance exactly symmetric.
    SeparationResult res = detail::run_full(b, a, opts);
    std::swap(res.witness_a, res.witness_b);
    std::swap(res.weights_a, res.weights_b);
    if (res.certificate) {
        res.certificate->w = -res.certificate->w;
        res.certificate->b = -res.certificate->b;
    }
    return res;
}

/// Feasibility of the two-sided separation system: w.a_i + b >= 1 for A and
/// w.b_j + b <= -1 for B has a solution iff the hulls are disjoint.
inline SeparationResult separation_feasible(const PointsView& a, const PointsView& b,
                                            const KernelOptions& opts = {}) {
    return hull_distance(a, b, opts);
}

/// Distance from a single point to conv(A); zero when the point lies inside.
inline SeparationResult point_hull_distance(const Eigen::VectorXd& x, const PointsView& a,
                                            const KernelOptions& opts = {}) {
    Eigen::MatrixXd xm(1, x.size());
    xm.row(0) = x.transpose();
    return hull_distance(PointsView(xm), a, opts);
}

}  // namespace geoprobe
