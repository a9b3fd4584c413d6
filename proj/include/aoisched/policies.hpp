#pragma once

#include "aoisched/dual.hpp"
#include "aoisched/model.hpp"

#include <cmath>
#include <functional>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace aoisched {

/// Joint state at a decision instant.
struct AgeVector {
    std::vector<age_t> ages;
    long long slot{0};
};

struct Decision {
    int source_id{0};
};

/// A scheduling policy: total on every valid state, ties broken to the
/// smallest source index, deterministic policies ignore the rng.
struct Policy {
    std::string name;
    std::function<int(const AgeVector&, rng_t&)> decide;
};

inline Policy greedy_policy() {
    Policy pol;
    pol.name = "greedy";
    pol.decide = [](const AgeVector& s, rng_t&) {
        int best = 0;
        for (int i = 1; i < static_cast<int>(s.ages.size()); ++i)
            if (s.ages[i] > s.ages[best]) best = i;
        return best;
    };
    return pol;
}

inline Policy scaled_greedy_policy(const SystemSpec& sys) {
    std::vector<double> alpha;
    alpha.reserve(sys.sources.size());
    for (const auto& s : sys.sources) alpha.push_back(s.alpha);
    Policy pol;
    pol.name = "scaled-greedy";
    pol.decide = [alpha = std::move(alpha)](const AgeVector& s, rng_t&) {
        int best = 0;
        for (int i = 1; i < static_cast<int>(s.ages.size()); ++i)
            if (alpha[i] * s.ages[i] > alpha[best] * s.ages[best]) best = i;
        return best;
    };
    return pol;
}

/// State-independent stationary randomized policy over the sources.
inline Policy randomized_policy(std::vector<double> pmf) {
    double sum = 0.0;
    for (double q : pmf) {
        if (q < 0.0) throw std::invalid_argument("randomized_policy: negative entry");
        sum += q;
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw std::invalid_argument("randomized_policy: pmf does not sum to 1");
    Policy pol;
    pol.name = "fixed-randomized";
    pol.decide = [pmf = std::move(pmf)](const AgeVector&, rng_t& rng) {
        const double u = detail::uniform01(rng);
        double acc = 0.0;
        for (int i = 0; i < static_cast<int>(pmf.size()); ++i) {
            acc += pmf[i];
            if (u < acc) return i;
        }
        return static_cast<int>(pmf.size()) - 1;
    };
    return pol;
}

inline Policy fixed_policy(int source_id) {
    Policy pol;
    pol.name = "fixed-" + std::to_string(source_id);
    pol.decide = [source_id](const AgeVector&, rng_t&) { return source_id; };
    return pol;
}

/// Per-source index table: explicit values on [L_i, T) and the affine closed
/// form beyond, which the index follows exactly once the threshold is passed.
struct IndexTable {
    int source_id{0};
    int L{1};
    long long T{1};
    std::vector<double> gamma; // v in [L, T)
    double slope{0.0};
    double intercept{0.0};

    double gamma_at(age_t v) const {
        if (v < L) v = L;
        if (v < T) return gamma[static_cast<std::size_t>(v - L)];
        return slope * static_cast<double>(v) + intercept;
    }
};

struct LagrangeIndexSet {
    std::vector<IndexTable> tables;
};

/// Materializes the per-source index tables from a converged dual solution.
inline LagrangeIndexSet build_index_set(const DualSolution& dual,
                                        const SystemSpec& sys, double p) {
    LagrangeIndexSet set;
    set.tables.reserve(dual.per_source.size());
    for (const auto& sol : dual.per_source) {
        IndexTable tab;
        tab.source_id = sol.source_id;
        tab.L = sol.L_i;
        tab.T = sol.T;
        const StagePmf pmf_i = update_duration_pmf(sol.L_i, p, sol.tail_eps);
        const StagePmf pmf_m = update_duration_pmf(sol.L_m, p, sol.tail_eps);
        tab.gamma.reserve(static_cast<std::size_t>(std::max<long long>(0, sol.T - sol.L_i)));
        for (long long v = sol.L_i; v < sol.T; ++v) {
            const auto [qii, qim] = q_values(sol, v, pmf_i, pmf_m);
            tab.gamma.push_back(qii - qim);
        }
        // the affine region is exactly linear; two points pin it
        const auto [a0, b0] = q_values(sol, sol.T, pmf_i, pmf_m);
        const auto [a1, b1] = q_values(sol, sol.T + 1, pmf_i, pmf_m);
        const double g0 = a0 - b0, g1 = a1 - b1;
        tab.slope = g1 - g0;
        tab.intercept = g0 - tab.slope * static_cast<double>(sol.T);
        set.tables.push_back(std::move(tab));
    }
    return set;
}

/// Selects argmin_i gamma_i(v_i); ties go to the smallest index.
inline Policy lagrange_policy(LagrangeIndexSet set) {
    auto shared = std::make_shared<LagrangeIndexSet>(std::move(set));
    Policy pol;
    pol.name = "lagrange";
    pol.decide = [shared](const AgeVector& s, rng_t&) {
        int best = 0;
        double best_gamma = shared->tables[0].gamma_at(s.ages[0]);
        for (int i = 1; i < static_cast<int>(shared->tables.size()); ++i) {
            const double g = shared->tables[i].gamma_at(s.ages[i]);
            if (g < best_gamma) {
                best_gamma = g;
                best = i;
            }
        }
        return best;
    };
    return pol;
}

} // namespace aoisched
