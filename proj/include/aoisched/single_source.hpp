#pragma once

#include "aoisched/model.hpp"

#include <cassert>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <utility>
#include <vector>

namespace aoisched {

/// Index of the dominant competitor of source i: the other source with the
/// smallest update length, ties broken to the smallest index.
inline int dominant_competitor(const SystemSpec& sys, int i) {
    if (sys.num_sources() < 2)
        throw std::invalid_argument("dominant_competitor: N < 2");
    int best = -1;
    for (int j = 0; j < sys.num_sources(); ++j) {
        if (j == i) continue;
        if (best < 0 || sys.sources[j].L < sys.sources[best].L) best = j;
    }
    return best;
}

/// Threshold implied by an average cost theta, clamped to at least L_i
/// (states below L_i are unreachable after the first delivery).
inline long long threshold_from_theta(double theta, double alpha_i, int L_i, int L_m,
                                      double p) {
    const double x = theta / alpha_i - (L_m - 1) / (2.0 * p) - L_i / p;
    const long long t = static_cast<long long>(std::ceil(x));
    return std::max<long long>(L_i, t);
}

/// Output of the per-source threshold solve at a fixed multiplier.
/// h(v) = f1(v) - theta*f2(v); for v >= T both tables carry the exact affine
/// closed form, so lookups past v_max stay well defined.
struct ThresholdSolution {
    int source_id{-1};
    int competitor_id{-1};
    int L_i{1};
    int L_m{1};
    double alpha_i{1.0};
    double p{1.0};
    double tail_eps{1e-10};
    double lambda{0.0};
    double theta{0.0};
    long long T{1};
    long long v_max{1};
    std::vector<double> f1, f2; // indexed by v - L_i over [L_i, v_max]
    int iterations{0};
    bool converged{false};

    double f1_affine(long long v) const {
        return alpha_i * L_i * static_cast<double>(v) / p;
    }
    double f2_affine() const { return static_cast<double>(L_i) / p; }

    double f1_at(long long v) const {
        if (v >= T || v > v_max) return f1_affine(v);
        return f1[static_cast<std::size_t>(v - L_i)];
    }
    double f2_at(long long v) const {
        if (v >= T || v > v_max) return f2_affine();
        return f2[static_cast<std::size_t>(v - L_i)];
    }
    /// Bias value; queries below L_i clamp to L_i.
    double h_at(long long v) const {
        if (v < L_i) v = L_i;
        return f1_at(v) - theta * f2_at(v);
    }
};

/// Fills the theta-independent tables f1, f2 over [L_i, v_max]: the affine
/// closed form for v >= T and the backward sub-threshold recursion
///   f1(v) = a_i v L_m + a_i w(L_m) + (1-p) f1(v+1) + sum_l p p_l^(m) f1(v+l)
///   f2(v) = L_m        + (1-p) f2(v+1) + sum_l p p_l^(m) f2(v+l)
/// below it, with lookups resolving the affine region by position.
inline void compute_f_tables(const SourceSpec& src, const SourceSpec& comp, double p,
                             long long T, long long v_max, double tail_eps,
                             ThresholdSolution& out) {
    if (T < src.L) throw std::invalid_argument("compute_f_tables: T < L_i");
    const StagePmf pmf_m = update_duration_pmf(comp.L, p, tail_eps);
    if (v_max < T + pmf_m.support_max() - pmf_m.support_min)
        throw std::invalid_argument("compute_f_tables: v_max too small for lookups");

    out.L_i = src.L;
    out.L_m = comp.L;
    out.alpha_i = src.alpha;
    out.p = p;
    out.T = T;
    out.v_max = v_max;
    const std::size_t n = static_cast<std::size_t>(v_max - src.L + 1);
    out.f1.assign(n, 0.0);
    out.f2.assign(n, 0.0);

    for (long long v = std::max<long long>(T, src.L); v <= v_max; ++v) {
        out.f1[static_cast<std::size_t>(v - src.L)] = out.f1_affine(v);
        out.f2[static_cast<std::size_t>(v - src.L)] = out.f2_affine();
    }
    const double w_m = stage_overhead(comp.L, p);
    for (long long v = T - 1; v >= src.L; --v) {
        double s1 = (1.0 - p) * out.f1_at(v + 1);
        double s2 = (1.0 - p) * out.f2_at(v + 1);
        for (long long l = pmf_m.support_min; l <= pmf_m.support_max(); ++l) {
            const double w = p * pmf_m.prob(l);
            s1 += w * out.f1_at(v + l);
            s2 += w * out.f2_at(v + l);
        }
        out.f1[static_cast<std::size_t>(v - src.L)] =
            src.alpha * static_cast<double>(v) * comp.L + src.alpha * w_m + s1;
        out.f2[static_cast<std::size_t>(v - src.L)] = comp.L + s2;
    }
}

/// Average cost of the threshold policy encoded by the tables:
///   theta = [p(lambda L_i + p sum_l p_l^(i) f1(l) + a_i w(L_i)) + a_i L_i (1-p)]
///           / [p^2 sum_l p_l^(i) f2(l)].
inline double theta_from_tables(const SourceSpec& src, double lambda, double p,
                                const ThresholdSolution& tables,
                                const StagePmf& update_pmf) {
    double F1 = 0.0, F2 = 0.0;
    for (long long l = update_pmf.support_min; l <= update_pmf.support_max(); ++l) {
        const double q = update_pmf.prob(l);
        F1 += q * tables.f1_at(l);
        F2 += q * tables.f2_at(l);
    }
    assert(F2 > 0.0); // f2 >= L_i/p > 0 for any valid tables
    const double w_i = stage_overhead(src.L, p);
    return (p * (lambda * src.L + p * F1 + src.alpha * w_i) +
            src.alpha * src.L * (1.0 - p)) /
           (p * p * F2);
}

struct SolveOptions {
    double beta{0.5};
    double eps_theta{1e-10};
    double tail_eps{1e-10};
    int max_iter{200};
    double theta0{std::numeric_limits<double>::quiet_NaN()}; // NaN -> default init
};

namespace detail {

inline long long f_table_horizon(int L_i, long long T, const StagePmf& pmf_m) {
    return std::max<long long>(T, L_i) + (pmf_m.support_max() - pmf_m.support_min) + 10;
}

inline ThresholdSolution build_solution(const SourceSpec& src, const SourceSpec& comp,
                                        double p, double lambda, double tail_eps,
                                        long long T, const StagePmf& pmf_i,
                                        const StagePmf& pmf_m) {
    ThresholdSolution sol;
    sol.source_id = src.id;
    sol.competitor_id = comp.id;
    sol.lambda = lambda;
    sol.tail_eps = tail_eps;
    compute_f_tables(src, comp, p, T, f_table_horizon(src.L, T, pmf_m), tail_eps, sol);
    sol.theta = theta_from_tables(src, lambda, p, sol, pmf_i);
    return sol;
}

} // namespace detail

/// Damped fixed-point iteration between the threshold map and the table
/// average cost. The loop exits as soon as the integer map is consistent
/// (T(theta_bar) == T), at which point theta snaps to the exact table value.
/// A period-2 oscillation or a stall at an indifference point is resolved by
/// comparing the two candidate thresholds' exact average costs; an exact tie
/// picks the threshold implied by the tied cost.
inline ThresholdSolution solve_threshold(const SourceSpec& src, const SourceSpec& comp,
                                         double p, double lambda,
                                         const SolveOptions& opt = {}) {
    if (!(opt.beta > 0.0 && opt.beta < 1.0))
        throw std::invalid_argument("solve_threshold: beta out of (0,1)");
    if (!(opt.eps_theta > 0.0))
        throw std::invalid_argument("solve_threshold: eps_theta <= 0");
    const StagePmf pmf_i = update_duration_pmf(src.L, p, opt.tail_eps);
    const StagePmf pmf_m = update_duration_pmf(comp.L, p, opt.tail_eps);

    double theta = std::isnan(opt.theta0)
                       ? src.alpha * (src.L + stage_overhead(src.L, p)) +
                             std::max(lambda, 0.0)
                       : opt.theta0;

    const auto tie = [](double a, double b) {
        return std::abs(a - b) <= 1e-11 * (1.0 + std::max(std::abs(a), std::abs(b)));
    };
    // Resolves two candidate thresholds once the iteration cycles or stalls.
    const auto resolve = [&](long long Ta, long long Tb, int iters) {
        ThresholdSolution a =
            detail::build_solution(src, comp, p, lambda, opt.tail_eps, Ta, pmf_i, pmf_m);
        ThresholdSolution b =
            detail::build_solution(src, comp, p, lambda, opt.tail_eps, Tb, pmf_i, pmf_m);
        ThresholdSolution* pick;
        if (tie(a.theta, b.theta)) {
            // exact cost tie: the tied thresholds differ only on states that
            // are unreachable or indifferent, so take the one the threshold
            // map itself implies
            const long long Tc =
                threshold_from_theta(std::min(a.theta, b.theta), src.alpha, src.L,
                                     comp.L, p);
            if (Tc == a.T) pick = &a;
            else if (Tc == b.T) pick = &b;
            else pick = (a.T <= b.T) ? &a : &b;
        } else {
            pick = (b.theta < a.theta) ? &b : &a;
        }
        pick->iterations = iters;
        pick->converged = true;
        return std::move(*pick);
    };

    long long prevT1 = -1, prevT2 = -1;
    ThresholdSolution last;
    for (int n = 1; n <= opt.max_iter; ++n) {
        const long long T = threshold_from_theta(theta, src.alpha, src.L, comp.L, p);
        ThresholdSolution sol =
            detail::build_solution(src, comp, p, lambda, opt.tail_eps, T, pmf_i, pmf_m);
        const double theta_bar = sol.theta;
        if (!std::isfinite(theta_bar)) {
            sol.iterations = n;
            sol.converged = false;
            return sol;
        }
        if (threshold_from_theta(theta_bar, src.alpha, src.L, comp.L, p) == T) {
            sol.iterations = n;
            sol.converged = true;
            return sol;
        }
        if (n >= 3 && T == prevT2 && T != prevT1) return resolve(prevT1, T, n);

        const double theta_next = opt.beta * theta + (1.0 - opt.beta) * theta_bar;
        if (std::abs(theta_next - theta) <= opt.eps_theta) {
            // stalled at an indifference point
            const long long Tb =
                threshold_from_theta(theta_bar, src.alpha, src.L, comp.L, p);
            return resolve(T, Tb, n);
        }
        theta = theta_next;
        prevT2 = prevT1;
        prevT1 = T;
        last = std::move(sol);
        last.iterations = n;
    }
    last.converged = false;
    return last;
}

/// Action values of the two-action problem at age v (clamped up to L_i):
///   Q_ii = g_i(v, e_i) + (lambda - theta) L_i + sum_l p p_l^(i) h(l)
///   Q_im = g_i(v, e_m) - theta L_m          + sum_l p p_l^(m) h(v+l)
inline std::pair<double, double> q_values(const ThresholdSolution& sol, age_t v,
                                          const StagePmf& pmf_i, const StagePmf& pmf_m) {
    const double p = sol.p;
    if (v < sol.L_i) v = sol.L_i;
    double reset = 0.0;
    for (long long l = pmf_i.support_min; l <= pmf_i.support_max(); ++l)
        reset += pmf_i.prob(l) * sol.h_at(l);
    double shift = 0.0;
    for (long long l = pmf_m.support_min; l <= pmf_m.support_max(); ++l)
        shift += pmf_m.prob(l) * sol.h_at(v + l);
    const double w_i = stage_overhead(sol.L_i, p);
    const double w_m = stage_overhead(sol.L_m, p);
    const double q_ii = sol.alpha_i * (static_cast<double>(v) * sol.L_i + w_i) +
                        (sol.lambda - sol.theta) * sol.L_i + p * reset;
    const double q_im = sol.alpha_i * (static_cast<double>(v) * sol.L_m + w_m) -
                        sol.theta * sol.L_m + p * shift;
    return {q_ii, q_im};
}

inline std::pair<double, double> q_values(const ThresholdSolution& sol, age_t v,
                                          const SystemSpec& sys, double p) {
    (void)sys;
    const StagePmf pmf_i = update_duration_pmf(sol.L_i, p, sol.tail_eps);
    const StagePmf pmf_m = update_duration_pmf(sol.L_m, p, sol.tail_eps);
    return q_values(sol, v, pmf_i, pmf_m);
}

/// Max residual of the two-action optimality equation
///   h(v) = (1-p) h(v+1) + min(Q_ii(v), Q_im(v))
/// over [v_lo, v_hi], evaluated with the same truncated pmfs the tables use.
inline double bellman_residual_max(const ThresholdSolution& sol, long long v_lo,
                                   long long v_hi) {
    const StagePmf pmf_i = update_duration_pmf(sol.L_i, sol.p, sol.tail_eps);
    const StagePmf pmf_m = update_duration_pmf(sol.L_m, sol.p, sol.tail_eps);
    double worst = 0.0;
    for (long long v = std::max<long long>(v_lo, sol.L_i); v <= v_hi; ++v) {
        const auto [q_ii, q_im] = q_values(sol, v, pmf_i, pmf_m);
        const double rhs = (1.0 - sol.p) * sol.h_at(v + 1) + std::min(q_ii, q_im);
        worst = std::max(worst, std::abs(sol.h_at(v) - rhs));
    }
    return worst;
}

/// Long-run activation bookkeeping for one source at a fixed threshold:
/// A(v) = A1(v) - mu*A2(v) with boundary A1 = A2 = L_i/p above the threshold.
struct ActivationSolution {
    int source_id{-1};
    double lambda{0.0};
    double mu{0.0};
    int L_i{1};
    double p{1.0};
    long long T{1};
    long long v_max{1};
    std::vector<double> A1, A2; // indexed by v - L_i over [L_i, v_max]

    double a_boundary() const { return static_cast<double>(L_i) / p; }
    double A1_at(long long v) const {
        if (v >= T || v > v_max) return a_boundary();
        return A1[static_cast<std::size_t>(v - L_i)];
    }
    double A2_at(long long v) const {
        if (v >= T || v > v_max) return a_boundary();
        return A2[static_cast<std::size_t>(v - L_i)];
    }
};

namespace detail {

inline ActivationSolution activation_tables(int L_i, int L_m, double p, long long T,
                                            double tail_eps) {
    const StagePmf pmf_i = update_duration_pmf(L_i, p, tail_eps);
    const StagePmf pmf_m = update_duration_pmf(L_m, p, tail_eps);
    ActivationSolution act;
    act.L_i = L_i;
    act.p = p;
    act.T = T;
    act.v_max = f_table_horizon(L_i, T, pmf_m);
    const std::size_t n = static_cast<std::size_t>(act.v_max - L_i + 1);
    act.A1.assign(n, act.a_boundary());
    act.A2.assign(n, act.a_boundary());
    for (long long v = T - 1; v >= L_i; --v) {
        double s1 = (1.0 - p) * act.A1_at(v + 1);
        double s2 = (1.0 - p) * act.A2_at(v + 1);
        for (long long l = pmf_m.support_min; l <= pmf_m.support_max(); ++l) {
            const double w = p * pmf_m.prob(l);
            s1 += w * act.A1_at(v + l);
            s2 += w * act.A2_at(v + l);
        }
        act.A1[static_cast<std::size_t>(v - L_i)] = s1;
        act.A2[static_cast<std::size_t>(v - L_i)] = L_m + s2;
    }
    double num = 0.0, den = 0.0;
    for (long long l = pmf_i.support_min; l <= pmf_i.support_max(); ++l) {
        const double q = pmf_i.prob(l);
        num += q * act.A1_at(l);
        den += q * act.A2_at(l);
    }
    act.mu = num / den;
    if (!std::isfinite(act.mu))
        throw std::runtime_error("activation_tables: non-finite activation fraction");
    return act;
}

} // namespace detail

/// Activation fraction mu of the threshold policy in the converged solution,
/// via modified-cost policy evaluation (stage reward 1 when the source is
/// scheduled) and the closed-form ratio over the reset distribution.
inline ActivationSolution activation_fraction(const ThresholdSolution& sol, double p) {
    ActivationSolution act =
        detail::activation_tables(sol.L_i, sol.L_m, p, sol.T, sol.tail_eps);
    act.source_id = sol.source_id;
    act.lambda = sol.lambda;
    return act;
}

/// Columnar dump of the solve artifacts for one source.
inline void dump_tables(std::ostream& os, const ThresholdSolution& sol,
                        const ActivationSolution& act) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "# id=%d lambda=%.17g T=%lld theta=%.17g mu=%.17g\n",
                  sol.source_id, sol.lambda, static_cast<long long>(sol.T), sol.theta,
                  act.mu);
    os << buf << "v f1 f2 A1 A2\n";
    for (long long v = sol.L_i; v <= sol.v_max; ++v) {
        std::snprintf(buf, sizeof(buf), "%lld %.17g %.17g %.17g %.17g\n", v,
                      sol.f1_at(v), sol.f2_at(v), act.A1_at(v), act.A2_at(v));
        os << buf;
    }
}

} // namespace aoisched
