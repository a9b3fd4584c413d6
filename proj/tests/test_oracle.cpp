#include "doctest.h"

#include "aoisched/oracle.hpp"
#include "aoisched/single_source.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

using namespace aoisched;

TEST_CASE("rvi_single yields a threshold-type policy with nondecreasing bias") {
    const SourceSpec src{0, 2, 5.0};
    const SourceSpec comp{1, 2, 1.0};
    const SingleOracle ora = rvi_single(src, comp, 0.7, 3.0, 200, 1e-7);
    REQUIRE(ora.converged);
    CHECK(ora.residual < 1e-7);
    // first index serving src, all later states must also serve src
    std::size_t first_own = ora.action.size();
    for (std::size_t s = 0; s < ora.action.size(); ++s)
        if (ora.action[s] == src.id) {
            first_own = s;
            break;
        }
    REQUIRE(first_own < ora.action.size());
    for (std::size_t s = first_own; s < ora.action.size(); ++s)
        CHECK(ora.action[s] == src.id);
    for (std::size_t s = 0; s + 1 < ora.h.size(); ++s)
        CHECK(ora.h[s + 1] >= ora.h[s] - 1e-9);
}

TEST_CASE("rvi_single theta agrees with the table solver") {
    const SourceSpec src{0, 2, 5.0};
    const SourceSpec comp{1, 2, 1.0};
    for (double lambda : {0.0, 3.0}) {
        const ThresholdSolution sol = solve_threshold(src, comp, 0.7, lambda);
        REQUIRE(sol.converged);
        const SingleOracle ora = rvi_single(src, comp, 0.7, lambda, 160, 1e-7);
        CHECK(std::abs(ora.theta - sol.theta) <= 1e-3 * (1.0 + std::abs(sol.theta)));
    }
}

TEST_CASE("rvi_single truncation robustness") {
    const SourceSpec src{0, 2, 5.0};
    const SourceSpec comp{1, 3, 1.0};
    const SingleOracle a = rvi_single(src, comp, 0.8, 2.0, 120, 1e-7);
    const SingleOracle b = rvi_single(src, comp, 0.8, 2.0, 240, 1e-7);
    CHECK(std::abs(a.theta - b.theta) < 1e-6);
}

TEST_CASE("multi-action oracle always deviates to the smallest competitor") {
    // three sources; whenever the tagged arm rests, the smallest-L wins
    const SystemSpec sys = make_system({{2, 5.0}, {2, 1.0}, {7, 1.0}}, 0.6);
    for (int i : {0, 1, 2}) {
        std::vector<SourceSpec> rivals;
        for (int j = 0; j < 3; ++j)
            if (j != i) rivals.push_back(sys.sources[j]);
        const SingleOracle ora = rvi_single(sys.sources[i], rivals, 0.6, 1.0, 150, 1e-6);
        const int m = dominant_competitor(sys, i);
        for (std::size_t s = 0; s < ora.action.size(); ++s) {
            if (ora.action[s] == i) continue;
            CHECK(sys.sources[ora.action[s]].L == sys.sources[m].L);
        }
    }
}

TEST_CASE("rvi_joint on the deterministic two-source cycle") {
    const SystemSpec sys = make_system({{1, 1.0}, {1, 1.0}}, 1.0);
    const JointOracle ora = rvi_joint(sys, 1.0, {25, 25}, 1e-8);
    REQUIRE(ora.converged);
    CHECK(ora.theta == doctest::Approx(3.0).epsilon(1e-6));
}

TEST_CASE("rvi_joint symmetric system has a symmetric policy") {
    const SystemSpec sys = make_system({{2, 1.0}, {2, 1.0}}, 0.7);
    const JointOracle ora = rvi_joint(sys, 0.7, {90, 90}, 1e-6);
    REQUIRE(ora.converged);
    // stay away from the clamped rim, where mirrored states collapse to ties
    const long long lo = 2, hi = 50;
    for (long long v1 = lo; v1 <= hi; ++v1) {
        for (long long v2 = lo; v2 <= hi; ++v2) {
            if (v1 == v2) continue;
            const int a = ora.action[ora.index({v1, v2})];
            const int b = ora.action[ora.index({v2, v1})];
            CHECK(a == 1 - b);
        }
    }
}

TEST_CASE("rvi_joint state-space guard") {
    const SystemSpec sys = make_system({{2, 1.0}, {3, 1.0}}, 0.8);
    CHECK_THROWS_AS(rvi_joint(sys, 0.8, {4000, 4000}, 1e-6, 1000000),
                    StateSpaceLimitError);
}

TEST_CASE("rvi_joint truncation robustness on a small instance") {
    const SystemSpec sys = make_system({{2, 1.0}, {3, 1.0}}, 0.8);
    const JointOracle a = rvi_joint(sys, 0.8, {70, 90}, 1e-6);
    const JointOracle b = rvi_joint(sys, 0.8, {140, 180}, 1e-6);
    CHECK(std::abs(a.theta - b.theta) < 1e-5);
}

TEST_CASE("brute force threshold curve is unimodal at the optimum") {
    const SourceSpec src{0, 2, 5.0};
    const SourceSpec comp{1, 2, 1.0};
    const auto bf = brute_force_threshold(src, comp, 0.7, 2.0, 2, 60, 400);
    double best_theta = 0.0;
    for (const auto& [T, th] : bf.theta_by_T)
        if (T == bf.best_T) best_theta = th;
    for (const auto& [T, th] : bf.theta_by_T) {
        if (T == bf.best_T - 1 || T == bf.best_T + 1) CHECK(th >= best_theta - 1e-12);
        CHECK(th >= best_theta - 1e-12);
    }
}

TEST_CASE("brute force best_T equals the fixed point over a small grid") {
    const SourceSpec comp{1, 2, 1.0};
    for (double alpha : {1.0, 5.0}) {
        const SourceSpec src{0, 2, alpha};
        for (double p : {0.5, 0.7, 1.0}) {
            for (double lambda : {0.0, 2.0, 5.0}) {
                const ThresholdSolution sol = solve_threshold(src, comp, p, lambda);
                REQUIRE(sol.converged);
                const long long hi = std::max<long long>(2 * sol.T + 10, 40);
                const auto bf =
                    brute_force_threshold(src, comp, p, lambda, 2, hi, hi + 400);
                CHECK(bf.best_T == sol.T);
            }
        }
    }
}

TEST_CASE("brute force best_T is nondecreasing in lambda") {
    const SourceSpec src{0, 2, 1.0};
    const SourceSpec comp{1, 3, 1.0};
    long long prev = -1;
    for (double lambda : {0.0, 1.0, 2.0, 4.0, 8.0}) {
        const auto bf = brute_force_threshold(src, comp, 0.6, lambda, 2, 80, 500);
        CHECK(bf.best_T >= prev);
        prev = bf.best_T;
    }
}
