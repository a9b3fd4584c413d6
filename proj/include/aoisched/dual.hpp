#pragma once

#include "aoisched/model.hpp"
#include "aoisched/single_source.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <map>
#include <stdexcept>
#include <tuple>
#include <utility>
#include <vector>

namespace aoisched {

struct DualOptions {
    SolveOptions solver;
    double eps_lambda{1e-6};
    double lambda_lo{0.0};
    double lambda_hi{-1.0}; // <= 0 -> derived from the system
    int max_doublings{60};
};

struct SourceDual {
    ThresholdSolution threshold;
    ActivationSolution activation;
};

struct SumActivationResult {
    double sum{0.0};
    std::vector<SourceDual> per_source;
    int nonconverged{0};
};

namespace detail {

// Sources of the same class against the same competitor share one solve.
using solve_key = std::tuple<int, std::uint64_t, int>;

inline solve_key make_solve_key(const SourceSpec& s, int L_m) {
    std::uint64_t bits;
    static_assert(sizeof(bits) == sizeof(double));
    std::memcpy(&bits, &s.alpha, sizeof(bits));
    return {s.L, bits, L_m};
}

} // namespace detail

/// Solves every source's decoupled problem at the multiplier and returns the
/// total activation fraction. A failed fixed point is retried once with
/// halved damping; a still-unconverged solve is used as-is and counted.
inline SumActivationResult sum_activation(const SystemSpec& sys, double p, double lambda,
                                          const SolveOptions& solver) {
    SumActivationResult out;
    out.per_source.reserve(sys.sources.size());
    std::map<detail::solve_key, std::pair<ThresholdSolution, ActivationSolution>> cache;
    for (int i = 0; i < sys.num_sources(); ++i) {
        const int m = dominant_competitor(sys, i);
        const auto key = detail::make_solve_key(sys.sources[i], sys.sources[m].L);
        auto it = cache.find(key);
        if (it == cache.end()) {
            ThresholdSolution sol =
                solve_threshold(sys.sources[i], sys.sources[m], p, lambda, solver);
            if (!sol.converged) {
                SolveOptions retry = solver;
                retry.beta *= 0.5;
                retry.max_iter *= 4;
                sol = solve_threshold(sys.sources[i], sys.sources[m], p, lambda, retry);
            }
            if (!sol.converged) ++out.nonconverged;
            ActivationSolution act = activation_fraction(sol, p);
            it = cache.emplace(key, std::make_pair(std::move(sol), std::move(act))).first;
        }
        SourceDual sd{it->second.first, it->second.second};
        sd.threshold.source_id = i;
        sd.threshold.competitor_id = m;
        sd.activation.source_id = i;
        out.per_source.push_back(std::move(sd));
        out.sum += it->second.second.mu;
    }
    return out;
}

struct DualBracket {
    double lambda_lo{0.0};
    double lambda_hi{0.0};
    double sum_mu_lo{0.0};
    double sum_mu_hi{0.0};
};

struct DualSolution {
    double lambda_star{0.0};
    std::vector<ThresholdSolution> per_source;
    std::vector<double> mu;
    DualBracket bracket;
    double tolerance{0.0};
    double lower_bound{0.0}; // sum_i theta_i(lambda*) - lambda*
    bool degenerate{false};  // sum mu < 1 already at lambda = 0
    int nonconverged_solves{0};
};

/// Outer dual solve: expands [lambda_lo, lambda_hi] geometrically until
/// sum mu(lo) >= 1 >= sum mu(hi), bisects on the sign of sum mu - 1 down to
/// eps_lambda, and rebuilds the per-source solutions at the midpoint.
/// Termination is purely on bracket width; sum mu = 1 may be unattainable.
inline DualSolution solve_lambda(const SystemSpec& sys, double p,
                                 const DualOptions& opt = {}) {
    validate_system(sys);
    if (!(opt.eps_lambda > 0.0))
        throw std::invalid_argument("solve_lambda: eps_lambda <= 0");

    const auto finish = [&](double lambda_star, const DualBracket& bracket,
                            bool degenerate) {
        SumActivationResult at_star = sum_activation(sys, p, lambda_star, opt.solver);
        DualSolution out;
        out.lambda_star = lambda_star;
        out.bracket = bracket;
        out.tolerance = opt.eps_lambda;
        out.degenerate = degenerate;
        out.nonconverged_solves = at_star.nonconverged;
        double theta_sum = 0.0;
        for (auto& sd : at_star.per_source) {
            theta_sum += sd.threshold.theta;
            out.mu.push_back(sd.activation.mu);
            out.per_source.push_back(std::move(sd.threshold));
        }
        out.lower_bound = theta_sum - lambda_star;
        return out;
    };

    double lo = std::max(0.0, opt.lambda_lo);
    const SumActivationResult at_lo = sum_activation(sys, p, lo, opt.solver);
    if (at_lo.sum < 1.0) {
        // relaxed budget is slack even with free activation
        DualBracket bracket{lo, lo, at_lo.sum, at_lo.sum};
        return finish(lo, bracket, true);
    }

    double hi = opt.lambda_hi;
    if (hi <= lo) {
        double worst = 0.0;
        for (const auto& s : sys.sources)
            worst = std::max(worst, s.alpha * (s.L + stage_overhead(s.L, p)));
        hi = worst * sys.num_sources();
    }
    double sum_hi = sum_activation(sys, p, hi, opt.solver).sum;
    int doublings = 0;
    while (sum_hi > 1.0) {
        if (++doublings > opt.max_doublings)
            throw std::runtime_error("solve_lambda: bracket expansion cap reached");
        hi *= 2.0;
        sum_hi = sum_activation(sys, p, hi, opt.solver).sum;
    }

    double sum_lo = at_lo.sum;
    while (hi - lo >= opt.eps_lambda) {
        const double mid = 0.5 * (lo + hi);
        const double s = sum_activation(sys, p, mid, opt.solver).sum;
        if (s - 1.0 < 0.0) {
            hi = mid;
            sum_hi = s;
        } else {
            lo = mid;
            sum_lo = s;
        }
    }
    DualBracket bracket{lo, hi, sum_lo, sum_hi};
    return finish(0.5 * (lo + hi), bracket, false);
}

/// Lagrange index gamma_i(v) = Q_ii(v) - Q_im(v) at the converged multiplier;
/// ages below L_i clamp, ages past the table resolve through the affine form.
inline double lagrange_index(const DualSolution& dual, int i, age_t v,
                             const SystemSpec& sys, double p) {
    const ThresholdSolution& sol = dual.per_source.at(static_cast<std::size_t>(i));
    const auto [q_ii, q_im] = q_values(sol, v, sys, p);
    return q_ii - q_im;
}

} // namespace aoisched
