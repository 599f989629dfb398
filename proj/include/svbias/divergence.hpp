#pragma once

// Sample-based distances between point distributions: the k-nearest-neighbour
// KL estimator, the debiased Sinkhorn divergence, and an exact assignment
// solver used as an optimal-transport oracle on small instances.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "svbias/density.hpp"
#include "svbias/error.hpp"
#include "svbias/geo.hpp"
#include "svbias/kdtree.hpp"
#include "svbias/parallel.hpp"

// glibc's vector math library; lets the log-sum-exp loops vectorize exp.
#if defined(SVBIAS_USE_LIBMVEC)
extern "C" double exp(double) noexcept __attribute__((simd("notinbranch")));
#define SVBIAS_PRAGMA(x) _Pragma(#x)
#define SVBIAS_SIMD(clauses) SVBIAS_PRAGMA(omp simd clauses)
#else
#define SVBIAS_SIMD(clauses)
#endif

namespace svbias {

// ---------------------------------------------------------------------------
// kNN KL divergence

struct KlConfig {
    int k = 1;
    int dim = 2;                 // exponent d in the estimator
    double min_distance = 1e-9;  // floor for neighbour distances, metres
};

inline std::vector<ProjPoint> unique_points(std::span<const ProjPoint> pts) {
    std::vector<ProjPoint> out(pts.begin(), pts.end());
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

/// Estimates KL(P‖Q) from samples X ~ P and X' ~ Q:
///   (d/n) Σ log(s_k(x_i) / r_k(x_i)) + log(m / (n − 1))
/// where r_k is the k-th neighbour distance within X \ {x_i} and s_k within X'.
/// Exact duplicates are removed from each set first.
inline double knn_kl(std::span<const ProjPoint> x, std::span<const ProjPoint> x_prime, const KlConfig& cfg = {}) {
    if (cfg.k < 1) throw ValidationError("k must be positive");
    if (cfg.dim < 1) throw ValidationError("dimension must be positive");
    const auto xs = unique_points(x);
    const auto ys = unique_points(x_prime);
    const std::size_t n = xs.size(), m = ys.size();
    const auto k = static_cast<std::size_t>(cfg.k);
    if (n < 2) throw ValidationError("knn_kl needs at least 2 distinct samples in X");
    if (k >= n) throw ValidationError("k must be smaller than |X|");
    if (k > m) throw ValidationError("k must not exceed |X'|");

    const KdTree tx(xs), ty(ys);
    std::vector<double> terms(n);
    parallel_for(n, [&](std::size_t i) {
        // The query point itself is the nearest hit in its own set.
        const double r = std::max(tx.kth_distance(xs[i], k + 1), cfg.min_distance);
        const double s = std::max(ty.kth_distance(xs[i], k), cfg.min_distance);
        terms[i] = std::log(s / r);
    });
    const double sum = pairwise_sum(terms.begin(), terms.end());
    return static_cast<double>(cfg.dim) / static_cast<double>(n) * sum +
           std::log(static_cast<double>(m) / static_cast<double>(n - 1));
}

inline double knn_kl(const SamplePoints& x, const SamplePoints& x_prime, const KlConfig& cfg = {}) {
    auto uniform = [](const SamplePoints& s) {
        return std::all_of(s.weights.begin(), s.weights.end(), [&](double w) { return w == s.weights.front(); });
    };
    if (!uniform(x) || !uniform(x_prime)) throw ValidationError("knn_kl does not support non-uniform weights");
    return knn_kl(std::span<const ProjPoint>(x.points), std::span<const ProjPoint>(x_prime.points), cfg);
}

// ---------------------------------------------------------------------------
// Debiased Sinkhorn divergence

struct SinkhornConfig {
    double blur = 0.01;        // target blur, length units of the working frame
    int p = 1;                 // cost ‖x − y‖^p
    int max_iters = 500;       // iterations at the target blur
    double tol = 1e-6;         // change of the dual objective between sweeps
    std::size_t max_points = 50000;
    std::uint64_t seed = 0;
    bool normalize = true;     // map both clouds into the unit square of their joint bbox
    double blur_start = 0.5;   // annealing starts here and halves down to `blur`
};

inline constexpr int kStageIters = 3;  // sweep cap per intermediate annealing stage

struct SinkhornResult {
    double value = 0.0;       // S_ε^(1/p), with S_ε clamped at 0
    double divergence = 0.0;  // raw S_ε
    bool converged = false;
    double dual_gap = 0.0;    // last change of the dual objective
    int iterations = 0;
    std::size_t n_used = 0, m_used = 0;
    double scale = 1.0;       // metres per working-frame unit
};

namespace detail {

struct Cloud {
    std::vector<ProjPoint> pts;
    std::vector<double> log_w;  // log of normalized weights
};

inline Cloud make_cloud(const SamplePoints& s, std::size_t cap, std::mt19937_64& rng) {
    s.validate();
    std::vector<std::size_t> keep;
    keep.reserve(s.size());
    for (std::size_t i = 0; i < s.size(); ++i)
        if (s.weight(i) > 0.0) keep.push_back(i);
    if (keep.size() > cap) {
        std::vector<std::size_t> picked;
        picked.reserve(cap);
        std::sample(keep.begin(), keep.end(), std::back_inserter(picked), cap, rng);
        keep = std::move(picked);
    }
    Cloud c;
    std::vector<double> w;
    for (auto i : keep) {
        c.pts.push_back(s.points[i]);
        w.push_back(s.weight(i));
    }
    const double total = pairwise_sum(w.begin(), w.end());
    for (double wi : w) c.log_w.push_back(std::log(wi / total));
    return c;
}

inline double ground_cost(ProjPoint a, ProjPoint b, int p) {
    const double d2 = squared_distance(a, b);
    return p == 2 ? d2 : std::sqrt(d2);
}

inline constexpr std::size_t kCostCacheEntries = std::size_t{1} << 22;

/// Row-major ground costs C(x_i, y_j); cached when small, recomputed otherwise.
class CostMatrix {
public:
    CostMatrix(const std::vector<ProjPoint>& x, const std::vector<ProjPoint>& y, int p) : x_(x), y_(y), p_(p) {
        if (x.size() * y.size() <= kCostCacheEntries) {
            cache_.resize(x.size() * y.size());
            for (std::size_t i = 0; i < x.size(); ++i)
                for (std::size_t j = 0; j < y.size(); ++j) cache_[i * y.size() + j] = ground_cost(x[i], y[j], p);
        }
    }
    std::size_t rows() const noexcept { return x_.size(); }
    std::size_t cols() const noexcept { return y_.size(); }

    /// Pointer to C(x_i, ·); uses `scratch` when the matrix is not cached.
    const double* row(std::size_t i, std::vector<double>& scratch) const {
        if (!cache_.empty()) return cache_.data() + i * y_.size();
        scratch.resize(y_.size());
        const ProjPoint xi = x_[i];
        const ProjPoint* y = y_.data();
        double* out = scratch.data();
        if (p_ == 2) {
SVBIAS_SIMD()
            for (std::size_t j = 0; j < y_.size(); ++j) {
                const double dx = xi.x - y[j].x, dy = xi.y - y[j].y;
                out[j] = dx * dx + dy * dy;
            }
        } else {
SVBIAS_SIMD()
            for (std::size_t j = 0; j < y_.size(); ++j) {
                const double dx = xi.x - y[j].x, dy = xi.y - y[j].y;
                out[j] = std::sqrt(dx * dx + dy * dy);
            }
        }
        return out;
    }

private:
    const std::vector<ProjPoint>& x_;
    const std::vector<ProjPoint>& y_;
    int p_;
    std::vector<double> cache_;
};

/// out_i = −ε log Σ_j exp(log_w_j + (h_j − C_ij) / ε), with w, h on the column cloud.
inline void softmin(const CostMatrix& cost, const Cloud& y, const std::vector<double>& h, double eps,
                    std::vector<double>& out) {
    out.resize(cost.rows());
    const double inv_eps = 1.0 / eps;
    parallel_for(cost.rows(), [&](std::size_t i) {
        thread_local std::vector<double> scratch, arg;
        const double* c = cost.row(i, scratch);
        const std::size_t m = cost.cols();
        arg.resize(m);
        double* v = arg.data();
        const double* lw = y.log_w.data();
        const double* hh = h.data();
        double mx = -std::numeric_limits<double>::infinity();
SVBIAS_SIMD(reduction(max : mx))
        for (std::size_t j = 0; j < m; ++j) {
            v[j] = lw[j] + (hh[j] - c[j]) * inv_eps;
            mx = std::max(mx, v[j]);
        }
        double s = 0.0;
SVBIAS_SIMD(reduction(+ : s))
        for (std::size_t j = 0; j < m; ++j) s += std::exp(v[j] - mx);
        out[i] = -eps * (mx + std::log(s));
    });
}

inline double weighted_mean(const std::vector<double>& log_w, const std::vector<double>& f) {
    std::vector<double> t(f.size());
    for (std::size_t i = 0; i < f.size(); ++i) t[i] = std::exp(log_w[i]) * f[i];
    return pairwise_sum(t.begin(), t.end());
}

/// Entropic OT between two clouds by alternating (Gauss–Seidel) log-domain
/// Sinkhorn updates over an annealed blur schedule. Returns <a, f> + <b, g>.
struct EntropicRun {
    double value = 0.0;
    double gap = 0.0;
    int iterations = 0;
};

// Runs `sweep(eps)` over the annealing schedule; sweep returns the new dual value.
template <typename Sweep>
EntropicRun anneal(const std::vector<double>& eps_schedule, int stage_iters, int max_iters, double tol, Sweep&& sweep) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s + 1 < eps_schedule.size(); ++s) {
        double value = inf;
        for (int it = 0; it < stage_iters; ++it) {
            const double next = sweep(eps_schedule[s]);
            const bool done = std::abs(next - value) < tol;
            value = next;
            if (done) break;
        }
    }
    EntropicRun run;
    run.value = inf;
    run.gap = inf;
    while (run.iterations < max_iters) {
        const double next = sweep(eps_schedule.back());
        run.gap = std::abs(next - run.value);
        run.value = next;
        ++run.iterations;
        if (run.gap < tol) break;
    }
    return run;
}

inline EntropicRun entropic_ot(const Cloud& a, const Cloud& b, const std::vector<double>& eps_schedule,
                               int stage_iters, int max_iters, double tol, int p) {
    const CostMatrix cab(a.pts, b.pts, p), cba(b.pts, a.pts, p);
    std::vector<double> f, g(b.pts.size(), 0.0);
    return anneal(eps_schedule, stage_iters, max_iters, tol, [&](double eps) {
        softmin(cab, b, g, eps, f);
        softmin(cba, a, f, eps, g);
        return weighted_mean(a.log_w, f) + weighted_mean(b.log_w, g);
    });
}

/// OT_ε(a, a) with the symmetric averaged update f ← ½(f + T f); value 2<a, f>.
inline EntropicRun entropic_self_ot(const Cloud& a, const std::vector<double>& eps_schedule, int stage_iters,
                                    int max_iters, double tol, int p) {
    const CostMatrix caa(a.pts, a.pts, p);
    std::vector<double> f(a.pts.size(), 0.0), t;
    return anneal(eps_schedule, stage_iters, max_iters, tol, [&](double eps) {
        softmin(caa, a, f, eps, t);
        for (std::size_t i = 0; i < f.size(); ++i) f[i] = 0.5 * (f[i] + t[i]);
        return 2.0 * weighted_mean(a.log_w, f);
    });
}

/// Total order on clouds, used to evaluate the cross term in a fixed orientation.
inline int compare_clouds(const Cloud& a, const Cloud& b) {
    if (a.pts.size() != b.pts.size()) return a.pts.size() < b.pts.size() ? -1 : 1;
    for (std::size_t i = 0; i < a.pts.size(); ++i) {
        if (auto c = a.pts[i] <=> b.pts[i]; c != 0) return c < 0 ? -1 : 1;
        if (a.log_w[i] != b.log_w[i]) return a.log_w[i] < b.log_w[i] ? -1 : 1;
    }
    return 0;
}

} // namespace detail

/// Debiased Sinkhorn divergence S_ε(α, β) = OT_ε(α, β) − ½ OT_ε(α, α) − ½ OT_ε(β, β),
/// returned as S_ε^(1/p). The cross term is always evaluated with the clouds in
/// canonical order, so S is exactly symmetric; identical clouds give exactly 0.
inline SinkhornResult sinkhorn_emd(const SamplePoints& xs, const SamplePoints& ys, const SinkhornConfig& cfg = {}) {
    if (xs.size() == 0 || ys.size() == 0) throw ValidationError("sinkhorn_emd needs non-empty inputs");
    if (!(cfg.blur > 0.0)) throw ValidationError("blur must be positive");
    if (cfg.p != 1 && cfg.p != 2) throw ValidationError("p must be 1 or 2");
    if (cfg.max_points < 2) throw ValidationError("max_points must be at least 2");

    std::mt19937_64 rng_x(cfg.seed), rng_y(cfg.seed);
    detail::Cloud a = detail::make_cloud(xs, cfg.max_points, rng_x);
    detail::Cloud b = detail::make_cloud(ys, cfg.max_points, rng_y);
    if (a.pts.empty() || b.pts.empty()) throw ValidationError("sinkhorn_emd inputs carry no mass");

    SinkhornResult res;
    res.n_used = a.pts.size();
    res.m_used = b.pts.size();
    if (cfg.normalize) {
        BBox box;
        for (const auto& q : a.pts) box.extend(q);
        for (const auto& q : b.pts) box.extend(q);
        double scale = std::max(box.width(), box.height());
        if (!(scale > 0.0)) scale = 1.0;
        for (auto* c : {&a, &b})
            for (auto& q : c->pts) q = {(q.x - box.min.x) / scale, (q.y - box.min.y) / scale};
        res.scale = scale;
    }
    const int order = detail::compare_clouds(a, b);
    if (order == 0) {
        res.converged = true;
        return res;
    }

    std::vector<double> eps;
    for (double bl = std::max(cfg.blur_start, cfg.blur); bl > cfg.blur; bl *= 0.5) eps.push_back(std::pow(bl, cfg.p));
    eps.push_back(std::pow(cfg.blur, cfg.p));

    auto track = [&](const detail::EntropicRun& r) {
        res.iterations = std::max(res.iterations, r.iterations);
        res.dual_gap = std::max(res.dual_gap, r.gap);
        return r.value;
    };
    const auto& first = order < 0 ? a : b;
    const auto& second = order < 0 ? b : a;
    const double ab = track(detail::entropic_ot(first, second, eps, kStageIters, cfg.max_iters, cfg.tol, cfg.p));
    const double aa = track(detail::entropic_self_ot(a, eps, kStageIters, cfg.max_iters, cfg.tol, cfg.p));
    const double bb = track(detail::entropic_self_ot(b, eps, kStageIters, cfg.max_iters, cfg.tol, cfg.p));
    res.converged = res.dual_gap < cfg.tol;
    res.divergence = ab - 0.5 * aa - 0.5 * bb;
    res.value = std::pow(std::max(res.divergence, 0.0), 1.0 / cfg.p);
    return res;
}

// ---------------------------------------------------------------------------
// Exact optimal transport between equal-size uniform clouds

inline constexpr std::size_t kExactOtMaxPoints = 256;

/// Minimum-cost perfect matching (Hungarian algorithm with potentials).
/// Returns assignment[row] = column.
inline std::vector<std::size_t> hungarian(const std::vector<double>& cost, std::size_t n) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        match[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const std::size_t i0 = match[j0];
            double delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[match[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (match[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            match[j0] = match[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<std::size_t> assignment(n);
    for (std::size_t j = 1; j <= n; ++j) assignment[match[j] - 1] = j - 1;
    return assignment;
}

/// W_p between two equal-size uniform point clouds: ((1/n) Σ ‖x_i − y_σ(i)‖^p)^(1/p)
/// minimised over permutations σ.
inline double exact_ot(std::span<const ProjPoint> x, std::span<const ProjPoint> y, int p = 1) {
    if (x.size() != y.size()) throw ValidationError("exact_ot needs equal-size inputs");
    if (x.empty()) throw ValidationError("exact_ot needs non-empty inputs");
    if (x.size() > kExactOtMaxPoints) throw ValidationError("exact_ot limited to 256 points");
    if (p != 1 && p != 2) throw ValidationError("p must be 1 or 2");
    const std::size_t n = x.size();
    std::vector<double> cost(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) cost[i * n + j] = detail::ground_cost(x[i], y[j], p);
    const auto assignment = hungarian(cost, n);
    std::vector<double> matched(n);
    for (std::size_t i = 0; i < n; ++i) matched[i] = cost[i * n + assignment[i]];
    const double mean = pairwise_sum(matched.begin(), matched.end()) / static_cast<double>(n);
    return std::pow(mean, 1.0 / p);
}

// ---------------------------------------------------------------------------

struct DistanceResult {
    double emd = 0.0;  // working-frame units (unit square when normalized)
    double kl = 0.0;   // nats
    std::size_t n_used = 0, m_used = 0;
    bool emd_converged = true;
    double emd_dual_gap = 0.0;
    KlConfig kl_config;
    SinkhornConfig sinkhorn_config;
};

/// Both distances from the observed cloud to the prior cloud.
inline DistanceResult compare_samples(const SamplePoints& observed, const SamplePoints& prior, const KlConfig& kl,
                                      const SinkhornConfig& sk) {
    DistanceResult r;
    r.kl = knn_kl(observed, prior, kl);
    const auto s = sinkhorn_emd(observed, prior, sk);
    r.emd = s.value;
    r.n_used = s.n_used;
    r.m_used = s.m_used;
    r.emd_converged = s.converged;
    r.emd_dual_gap = s.dual_gap;
    r.kl_config = kl;
    r.sinkhorn_config = sk;
    return r;
}

inline ordered_json to_json(const DistanceResult& r) {
    ordered_json j;
    j["emd"] = r.emd;
    j["kl"] = r.kl;
    j["n_used"] = r.n_used;
    j["m_used"] = r.m_used;
    j["emd_converged"] = r.emd_converged;
    j["emd_dual_gap"] = r.emd_dual_gap;
    j["config"] = {{"k", r.kl_config.k},
                   {"d", r.kl_config.dim},
                   {"min_distance", r.kl_config.min_distance},
                   {"blur", r.sinkhorn_config.blur},
                   {"p", r.sinkhorn_config.p},
                   {"max_iters", r.sinkhorn_config.max_iters},
                   {"tol", r.sinkhorn_config.tol},
                   {"max_points", r.sinkhorn_config.max_points},
                   {"seed", r.sinkhorn_config.seed},
                   {"normalize", r.sinkhorn_config.normalize}};
    return j;
}

} // namespace svbias
