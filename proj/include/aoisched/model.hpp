#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace aoisched {

using age_t = std::int64_t;
using rng_t = std::mt19937_64;

/// One update source: update length in packets and a positive cost weight.
struct SourceSpec {
    int id{0};
    int L{1};
    double alpha{1.0};
};

struct ChannelSpec {
    double p{1.0}; // per-slot packet success probability, in (0, 1]
};

struct SystemSpec {
    std::vector<SourceSpec> sources;
    ChannelSpec channel;

    int num_sources() const { return static_cast<int>(sources.size()); }
};

/// Builds a system from (L, alpha) pairs; ids are assigned by position.
inline SystemSpec make_system(const std::vector<std::pair<int, double>>& lengths_weights,
                              double p) {
    SystemSpec sys;
    sys.channel.p = p;
    sys.sources.reserve(lengths_weights.size());
    int id = 0;
    for (const auto& [L, alpha] : lengths_weights)
        sys.sources.push_back(SourceSpec{id++, L, alpha});
    return sys;
}

/// Checks all model invariants; returns the spec unchanged or throws
/// std::invalid_argument naming the first violated invariant.
inline const SystemSpec& validate_system(const SystemSpec& spec) {
    for (const auto& s : spec.sources) {
        if (!(s.alpha > 0.0))
            throw std::invalid_argument("source " + std::to_string(s.id) +
                                        ": non-positive alpha");
        if (s.L < 1)
            throw std::invalid_argument("source " + std::to_string(s.id) + ": L < 1");
    }
    if (!(spec.channel.p > 0.0 && spec.channel.p <= 1.0))
        throw std::invalid_argument("channel: p out of range (0, 1]");
    if (spec.num_sources() < 2)
        throw std::invalid_argument("system: N < 2");
    for (int i = 0; i < spec.num_sources(); ++i)
        if (spec.sources[i].id != i)
            throw std::invalid_argument("system: source ids are not 0..N-1 in order");
    return spec;
}

/// Truncated pmf over stage-related lengths, stored densely from support_min.
/// sum(probs) + tail_mass == 1 up to rounding; tail_mass <= tail_eps.
struct StagePmf {
    int source_id{-1};
    long long support_min{1};
    std::vector<double> probs;
    double tail_mass{0.0};
    double tail_eps{0.0};

    long long support_max() const {
        return support_min + static_cast<long long>(probs.size()) - 1;
    }
    double prob(long long l) const {
        const long long k = l - support_min;
        if (k < 0 || k >= static_cast<long long>(probs.size())) return 0.0;
        return probs[static_cast<std::size_t>(k)];
    }
    double mass() const {
        double sum = 0.0, c = 0.0;
        for (double q : probs) {
            const double y = q - c;
            const double t = sum + y;
            c = (t - sum) - y;
            sum = t;
        }
        return sum;
    }
    /// Mean over the truncated support.
    double mean() const {
        double sum = 0.0;
        long long l = support_min;
        for (double q : probs) sum += q * static_cast<double>(l++);
        return sum;
    }
};

namespace detail {

inline void check_pmf_args(int L, double p, double tail_eps) {
    if (L < 1) throw std::invalid_argument("pmf: L < 1");
    if (!(p > 0.0 && p <= 1.0)) throw std::invalid_argument("pmf: p out of range (0, 1]");
    if (!(tail_eps > 0.0 && tail_eps < 1.0))
        throw std::invalid_argument("pmf: tail_eps out of range (0, 1)");
}

} // namespace detail

/// Pmf of the number of slots needed to deliver one L-packet update,
/// counted from the slot in which the first packet succeeds. For L = 1 the
/// mass is all at 1; for L >= 2 the remaining L-1 successes take a negative
/// binomial number of extra slots. Support is truncated once the remaining
/// tail mass drops to tail_eps; binomials are evaluated in log space.
inline StagePmf update_duration_pmf(int L, double p, double tail_eps) {
    detail::check_pmf_args(L, p, tail_eps);
    StagePmf pmf;
    pmf.support_min = L;
    pmf.tail_eps = tail_eps;
    if (L == 1 || p == 1.0) {
        pmf.probs.assign(1, 1.0);
        pmf.tail_mass = 0.0;
        return pmf;
    }
    const double log_p = std::log(p);
    const double log_q = std::log1p(-p);
    const double lg_top = std::lgamma(static_cast<double>(L - 1));
    double cum = 0.0, comp = 0.0;
    for (long long l = L;; ++l) {
        const double log_prob = std::lgamma(static_cast<double>(l - 1)) - lg_top -
                                std::lgamma(static_cast<double>(l - L + 1)) +
                                (L - 1) * log_p + (l - L) * log_q;
        const double q = std::exp(log_prob);
        pmf.probs.push_back(q);
        const double y = q - comp;
        const double t = cum + y;
        comp = (t - cum) - y;
        cum = t;
        if (1.0 - cum <= tail_eps) break;
        if (l - L > 100000000)
            throw std::runtime_error("update_duration_pmf: support did not close");
    }
    pmf.tail_mass = std::max(0.0, 1.0 - cum);
    return pmf;
}

/// Pmf of the gap between consecutive decision instants given the source is
/// scheduled: mass 1-p at 1 (first-packet failure) plus p times the update
/// duration pmf. The truncated mean approaches L as tail_eps -> 0.
inline StagePmf stage_length_pmf(int L, double p, double tail_eps) {
    detail::check_pmf_args(L, p, tail_eps);
    const StagePmf upd = update_duration_pmf(L, p, tail_eps);
    StagePmf pmf;
    pmf.support_min = 1;
    pmf.tail_eps = tail_eps;
    pmf.probs.assign(static_cast<std::size_t>(upd.support_max()), 0.0);
    pmf.probs[0] = 1.0 - p;
    for (long long l = upd.support_min; l <= upd.support_max(); ++l)
        pmf.probs[static_cast<std::size_t>(l - 1)] += p * upd.prob(l);
    pmf.tail_mass = p * upd.tail_mass;
    return pmf;
}

/// w(L): expected accumulated-age overhead of one stage, L(L-1)/(2p).
inline double stage_overhead(int L, double p) {
    if (L < 1) throw std::invalid_argument("stage_overhead: L < 1");
    if (!(p > 0.0 && p <= 1.0)) throw std::invalid_argument("stage_overhead: p out of range");
    return static_cast<double>(L) * static_cast<double>(L - 1) / (2.0 * p);
}

/// Expected cumulative weighted-age cost accrued by `tagged` over one stage
/// in which `scheduled` holds the channel, the tagged source entering the
/// stage at age v.
inline double stage_cost(age_t v, const SourceSpec& scheduled, const SourceSpec& tagged,
                         double p) {
    if (v < 1) throw std::invalid_argument("stage_cost: v < 1");
    return tagged.alpha *
           (static_cast<double>(v) * scheduled.L + stage_overhead(scheduled.L, p));
}

struct StageSample {
    long long delta{1};
    bool delivered{false};
};

namespace detail {

inline double uniform01(rng_t& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Slots until the first success inclusive, success probability p per slot.
inline long long geometric_slots(rng_t& rng, double p) {
    if (p >= 1.0) return 1;
    const double u = uniform01(rng);
    const double g = std::ceil(std::log1p(-u) / std::log1p(-p));
    return std::max<long long>(1, static_cast<long long>(g));
}

} // namespace detail

/// Samples one decision stage for a scheduled source of length L. With
/// probability 1-p the first packet fails and the stage is a single slot;
/// otherwise the remaining L-1 packets each take a geometric number of slots.
/// Sampling is exact: no truncated table is involved.
inline StageSample sample_stage(rng_t& rng, int L, double p) {
    if (detail::uniform01(rng) >= p) return {1, false};
    long long delta = 1;
    for (int k = 1; k < L; ++k) delta += detail::geometric_slots(rng, p);
    return {delta, true};
}

} // namespace aoisched
