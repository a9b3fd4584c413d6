#pragma once

#include "aoisched/model.hpp"
#include "aoisched/single_source.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace aoisched {

/// Raised when a requested joint state space exceeds the configured limit.
struct StateSpaceLimitError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

// Shared driver: bisects theta on the sign of the optimal per-stage drift of
// the theta-charged total-cost operator. `sweep` applies one Jacobi sweep of
//   (T_theta h)(s) = min_a [ g(s,a) - theta * tau(s,a) + E h(s') ]
// into `next` and returns nothing; drift bounds min/max of (next - h) bound
// the optimal drift from any starting h, so most trials resolve their sign
// after a few sweeps. Damping keeps periodic chains (p = 1) contracting.
template <typename SweepFn>
struct AvgCostVi {
    std::vector<double> h, next;
    int total_sweeps{0};
    bool converged{true};

    explicit AvgCostVi(std::size_t n) : h(n, 0.0), next(n, 0.0) {}

    // Returns (lo_bound, hi_bound) of the drift at this theta after iterating
    // until the sign is decided or the span falls below span_tol.
    std::pair<double, double> drift_bounds(const SweepFn& sweep, double theta,
                                           double span_tol, int max_sweeps) {
        double m = -1.0, M = 1.0;
        for (int it = 0; it < max_sweeps; ++it) {
            sweep(theta, h, next);
            ++total_sweeps;
            m = next[0] - h[0];
            M = m;
            for (std::size_t s = 1; s < h.size(); ++s) {
                const double d = next[s] - h[s];
                m = std::min(m, d);
                M = std::max(M, d);
            }
            // damped relative update
            const double ref = 0.5 * (next[0] - h[0]);
            for (std::size_t s = 0; s < h.size(); ++s)
                h[s] += 0.5 * (next[s] - h[s]) - ref;
            if (m > 0.0 || M < 0.0) return {m, M};
            if (M - m <= span_tol) return {m, M};
        }
        converged = false;
        return {m, M};
    }

    double solve(const SweepFn& sweep, double theta_hi, double width_tol, double span_tol,
                 int max_sweeps) {
        double lo = 0.0, hi = theta_hi;
        while (hi - lo > width_tol) {
            const double mid = 0.5 * (lo + hi);
            const auto [m, M] =
                drift_bounds(sweep, mid, span_tol, max_sweeps);
            if (0.5 * (m + M) > 0.0)
                lo = mid; // positive drift: theta below optimum
            else
                hi = mid;
        }
        return 0.5 * (lo + hi);
    }
};

} // namespace detail

/// Exact solution of the decoupled single-source SMDP on a truncated age
/// range [L_i, v_cap], with ages clamped at v_cap.
struct SingleOracle {
    double theta{0.0};
    long long v_lo{1};
    long long v_cap{1};
    std::vector<double> h;   // indexed by v - v_lo, normalized to h(v_lo) = 0
    std::vector<int> action; // chosen source id per state
    double residual{0.0};
    int sweeps{0};
    bool converged{false};
};

/// Relative value iteration (theta-bisected) for the tagged source against a
/// set of competing actions. The spec's two-action case passes a single
/// competitor; the full action set exercises the dominant-competitor lemma.
inline SingleOracle rvi_single(const SourceSpec& src,
                               const std::vector<SourceSpec>& competitors, double p,
                               double lambda, long long v_cap, double tol) {
    if (competitors.empty()) throw std::invalid_argument("rvi_single: no competitors");
    if (v_cap < src.L + 2) throw std::invalid_argument("rvi_single: v_cap too small");
    if (!(tol > 0.0)) throw std::invalid_argument("rvi_single: tol <= 0");

    const double tail = 1e-12;
    const StagePmf pmf_i = update_duration_pmf(src.L, p, tail);
    std::vector<StagePmf> pmf_c;
    pmf_c.reserve(competitors.size());
    for (const auto& c : competitors) pmf_c.push_back(update_duration_pmf(c.L, p, tail));

    const long long lo_state = src.L;
    const std::size_t n = static_cast<std::size_t>(v_cap - lo_state + 1);
    const auto clamp_idx = [&](long long v) {
        return static_cast<std::size_t>(std::min(v, v_cap) - lo_state);
    };
    const double w_i = stage_overhead(src.L, p);

    int max_L = src.L;
    for (const auto& c : competitors) max_L = std::max(max_L, c.L);

    const auto sweep = [&](double theta, const std::vector<double>& h,
                           std::vector<double>& out) {
        double reset = 0.0;
        for (long long l = pmf_i.support_min; l <= pmf_i.support_max(); ++l)
            reset += pmf_i.prob(l) * h[clamp_idx(l)];
        for (std::size_t s = 0; s < h.size(); ++s) {
            const long long v = lo_state + static_cast<long long>(s);
            const double cont_fail = (1.0 - p) * h[clamp_idx(v + 1)];
            double best = src.alpha * (static_cast<double>(v) * src.L + w_i) +
                          (lambda - theta) * src.L + cont_fail + p * reset;
            for (std::size_t j = 0; j < competitors.size(); ++j) {
                const auto& pm = pmf_c[j];
                double shift = 0.0;
                for (long long l = pm.support_min; l <= pm.support_max(); ++l)
                    shift += pm.prob(l) * h[clamp_idx(v + l)];
                const double q =
                    src.alpha * (static_cast<double>(v) * competitors[j].L +
                                 stage_overhead(competitors[j].L, p)) -
                    theta * competitors[j].L + cont_fail + p * shift;
                best = std::min(best, q);
            }
            out[s] = best;
        }
    };

    detail::AvgCostVi<decltype(sweep)> vi(n);
    const double g_top =
        src.alpha * (static_cast<double>(v_cap) * max_L + stage_overhead(max_L, p)) +
        std::abs(lambda) * src.L;
    const double theta_hi = g_top / std::min<double>(src.L, max_L) + 1.0;
    const double width = tol / (4.0 * std::max(1, max_L));
    const double span_tol = 0.05 * width;

    SingleOracle out;
    out.theta = vi.solve(sweep, theta_hi, width, span_tol, 40000);
    // final polish at theta*, then extract greedy actions and the residual
    vi.drift_bounds(sweep, out.theta, 0.25 * tol, 40000);
    out.v_lo = lo_state;
    out.v_cap = v_cap;
    out.h = vi.h;
    out.sweeps = vi.total_sweeps;
    out.converged = vi.converged;
    out.action.assign(n, src.id);
    double resid = 0.0;
    std::vector<double> th(n);
    sweep(out.theta, vi.h, th);
    for (std::size_t s = 0; s < n; ++s) {
        resid = std::max(resid, std::abs(th[s] - vi.h[s]));
        const long long v = lo_state + static_cast<long long>(s);
        const double cont_fail = (1.0 - p) * vi.h[clamp_idx(v + 1)];
        double reset = 0.0;
        for (long long l = pmf_i.support_min; l <= pmf_i.support_max(); ++l)
            reset += pmf_i.prob(l) * vi.h[clamp_idx(l)];
        double best = src.alpha * (static_cast<double>(v) * src.L + w_i) +
                      (lambda - out.theta) * src.L + cont_fail + p * reset;
        int arg = src.id;
        for (std::size_t j = 0; j < competitors.size(); ++j) {
            const auto& pm = pmf_c[j];
            double shift = 0.0;
            for (long long l = pm.support_min; l <= pm.support_max(); ++l)
                shift += pm.prob(l) * vi.h[clamp_idx(v + l)];
            const double q = src.alpha * (static_cast<double>(v) * competitors[j].L +
                                          stage_overhead(competitors[j].L, p)) -
                             out.theta * competitors[j].L + cont_fail + p * shift;
            if (q < best) {
                best = q;
                arg = competitors[j].id;
            }
        }
        out.action[s] = arg;
    }
    out.residual = resid;
    const double shiftc = out.h[0];
    for (double& x : out.h) x -= shiftc;
    return out;
}

inline SingleOracle rvi_single(const SourceSpec& src, const SourceSpec& comp, double p,
                               double lambda, long long v_cap, double tol) {
    return rvi_single(src, std::vector<SourceSpec>{comp}, p, lambda, v_cap, tol);
}

/// Exact solution of the unrelaxed joint SMDP on a truncated box of ages.
struct JointOracle {
    double theta{0.0};
    std::vector<long long> v_lo, v_cap;
    std::vector<long long> stride;
    std::vector<double> h;
    std::vector<int> action;
    double residual{0.0};
    int sweeps{0};
    bool converged{false};

    std::size_t index(const std::vector<age_t>& ages) const {
        std::size_t idx = 0;
        for (std::size_t i = 0; i < ages.size(); ++i) {
            const long long v = std::clamp<long long>(ages[i], v_lo[i], v_cap[i]);
            idx += static_cast<std::size_t>((v - v_lo[i]) * stride[i]);
        }
        return idx;
    }
};

inline JointOracle rvi_joint(const SystemSpec& sys, double p,
                             const std::vector<long long>& v_caps, double tol,
                             long long state_limit = 4000000) {
    const int N = sys.num_sources();
    if (static_cast<int>(v_caps.size()) != N)
        throw std::invalid_argument("rvi_joint: caps size mismatch");
    long long count = 1;
    for (int i = 0; i < N; ++i) {
        const long long d = v_caps[i] - sys.sources[i].L + 1;
        if (d < 2) throw std::invalid_argument("rvi_joint: cap too small");
        if (count > state_limit / d)
            throw StateSpaceLimitError("rvi_joint: state space exceeds limit " +
                                       std::to_string(state_limit));
        count *= d;
    }

    JointOracle out;
    out.v_lo.resize(N);
    out.v_cap = v_caps;
    out.stride.assign(N, 1);
    for (int i = 0; i < N; ++i) out.v_lo[i] = sys.sources[i].L;
    for (int i = N - 2; i >= 0; --i)
        out.stride[i] = out.stride[i + 1] * (v_caps[i + 1] - out.v_lo[i + 1] + 1);
    const std::size_t n = static_cast<std::size_t>(count);

    const double tail = 1e-12;
    std::vector<StagePmf> pmf(N);
    double alpha_sum = 0.0;
    int max_L = 1;
    for (int i = 0; i < N; ++i) {
        pmf[i] = update_duration_pmf(sys.sources[i].L, p, tail);
        alpha_sum += sys.sources[i].alpha;
        max_L = std::max(max_L, sys.sources[i].L);
    }

    std::vector<long long> ages(N);
    const auto for_each_state = [&](auto&& fn) {
        for (int i = 0; i < N; ++i) ages[i] = out.v_lo[i];
        for (std::size_t s = 0; s < n; ++s) {
            fn(s, ages);
            for (int i = N - 1; i >= 0; --i) {
                if (++ages[i] <= v_caps[i]) break;
                ages[i] = out.v_lo[i];
            }
        }
    };

    const auto q_action = [&](const std::vector<long long>& v, int j, double theta,
                              const std::vector<double>& h) {
        const SourceSpec& sj = sys.sources[j];
        double weighted_age = 0.0;
        for (int i = 0; i < N; ++i) weighted_age += sys.sources[i].alpha * v[i];
        const double g = sj.L * weighted_age + stage_overhead(sj.L, p) * alpha_sum;
        // failure: every age advances one slot
        std::size_t fail_idx = 0;
        for (int i = 0; i < N; ++i)
            fail_idx += static_cast<std::size_t>(
                (std::min(v[i] + 1, v_caps[i]) - out.v_lo[i]) * out.stride[i]);
        double succ = 0.0;
        for (long long l = pmf[j].support_min; l <= pmf[j].support_max(); ++l) {
            std::size_t idx = 0;
            for (int i = 0; i < N; ++i) {
                const long long vi = (i == j) ? std::min(l, v_caps[i])
                                              : std::min(v[i] + l, v_caps[i]);
                idx += static_cast<std::size_t>((vi - out.v_lo[i]) * out.stride[i]);
            }
            succ += pmf[j].prob(l) * h[idx];
        }
        return g - theta * sj.L + (1.0 - p) * h[fail_idx] + p * succ;
    };

    const auto sweep = [&](double theta, const std::vector<double>& h,
                           std::vector<double>& outv) {
        for_each_state([&](std::size_t s, const std::vector<long long>& v) {
            double best = q_action(v, 0, theta, h);
            for (int j = 1; j < N; ++j) best = std::min(best, q_action(v, j, theta, h));
            outv[s] = best;
        });
    };

    detail::AvgCostVi<decltype(sweep)> vi(n);
    double cap_age_sum = 0.0;
    for (int i = 0; i < N; ++i) cap_age_sum += sys.sources[i].alpha * v_caps[i];
    const double theta_hi =
        (max_L * cap_age_sum + stage_overhead(max_L, p) * alpha_sum) + 1.0;
    const double width = tol / (4.0 * max_L);
    out.theta = vi.solve(sweep, theta_hi, width, 0.05 * width, 40000);
    vi.drift_bounds(sweep, out.theta, 0.25 * tol, 40000);

    out.h = vi.h;
    out.sweeps = vi.total_sweeps;
    out.converged = vi.converged;
    out.action.assign(n, 0);
    std::vector<double> th(n);
    sweep(out.theta, vi.h, th);
    double resid = 0.0;
    for_each_state([&](std::size_t s, const std::vector<long long>& v) {
        resid = std::max(resid, std::abs(th[s] - vi.h[s]));
        double best = q_action(v, 0, out.theta, vi.h);
        int arg = 0;
        for (int j = 1; j < N; ++j) {
            const double q = q_action(v, j, out.theta, vi.h);
            if (q < best) {
                best = q;
                arg = j;
            }
        }
        out.action[s] = arg;
    });
    out.residual = resid;
    const double shiftc = out.h[0];
    for (double& x : out.h) x -= shiftc;
    return out;
}

struct BruteForceResult {
    long long best_T{0};
    std::vector<std::pair<long long, double>> theta_by_T;
};

/// Exhaustive threshold search by forward policy evaluation. For each T the
/// renewal cycle starts from the reset distribution and expected stage visits
/// are accumulated in one ascending pass (the chain only moves upward until
/// the absorbing delivery), giving the exact cost and slot totals per cycle.
/// Exact cost ties are resolved to the threshold the tied average cost itself
/// implies: tied thresholds differ only on unreachable or indifferent states.
inline BruteForceResult brute_force_threshold(const SourceSpec& src,
                                              const SourceSpec& comp, double p,
                                              double lambda, long long T_lo,
                                              long long T_hi, long long v_cap) {
    if (T_lo < src.L) T_lo = src.L;
    if (T_hi < T_lo) throw std::invalid_argument("brute_force_threshold: empty range");
    if (T_hi > v_cap) throw std::invalid_argument("brute_force_threshold: T beyond cap");

    const double tail = 1e-12;
    const StagePmf pmf_i = update_duration_pmf(src.L, p, tail);
    const StagePmf pmf_m = update_duration_pmf(comp.L, p, tail);
    const double w_i = stage_overhead(src.L, p);
    const double w_m = stage_overhead(comp.L, p);
    const std::size_t n = static_cast<std::size_t>(v_cap - src.L + 1);
    const auto clamp_idx = [&](long long v) {
        return static_cast<std::size_t>(std::min(v, v_cap) - src.L);
    };

    BruteForceResult res;
    res.theta_by_T.reserve(static_cast<std::size_t>(T_hi - T_lo + 1));
    std::vector<double> visits(n);
    for (long long T = T_lo; T <= T_hi; ++T) {
        std::fill(visits.begin(), visits.end(), 0.0);
        for (long long l = pmf_i.support_min; l <= pmf_i.support_max(); ++l)
            visits[clamp_idx(l)] += pmf_i.prob(l);
        double cost = 0.0, slots = 0.0;
        for (long long v = src.L; v <= v_cap; ++v) {
            double mass = visits[static_cast<std::size_t>(v - src.L)];
            if (mass == 0.0) continue;
            if (v >= T) {
                if (v == v_cap) mass /= p; // failure self-loop at the clamp
                cost += mass * (src.alpha * (static_cast<double>(v) * src.L + w_i) +
                                lambda * src.L);
                slots += mass * src.L;
                if (v < v_cap)
                    visits[static_cast<std::size_t>(v + 1 - src.L)] += (1.0 - p) * mass;
            } else {
                cost += mass * src.alpha * (static_cast<double>(v) * comp.L + w_m);
                slots += mass * comp.L;
                visits[clamp_idx(v + 1)] += (1.0 - p) * mass;
                for (long long l = pmf_m.support_min; l <= pmf_m.support_max(); ++l)
                    visits[clamp_idx(v + l)] += p * pmf_m.prob(l) * mass;
            }
        }
        res.theta_by_T.emplace_back(T, cost / slots);
    }

    double theta_min = res.theta_by_T.front().second;
    for (const auto& [T, th] : res.theta_by_T) theta_min = std::min(theta_min, th);
    std::vector<long long> tied;
    for (const auto& [T, th] : res.theta_by_T)
        if (th - theta_min <= 1e-10 * (1.0 + std::abs(theta_min))) tied.push_back(T);
    if (tied.size() == 1) {
        res.best_T = tied.front();
    } else {
        const long long canonical =
            threshold_from_theta(theta_min, src.alpha, src.L, comp.L, p);
        res.best_T = tied.front();
        for (long long t : tied)
            if (t == canonical) res.best_T = t;
    }
    return res;
}

} // namespace aoisched
