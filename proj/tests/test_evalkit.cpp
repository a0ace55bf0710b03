#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "sublearn/evalkit.hpp"

using namespace sublearn;

TEST_CASE("rmse examples") {
    using dv = std::vector<double>;
    CHECK(rmse(dv{1.0, 2.0, 3.0}, dv{1.0, 2.0, 3.0}) == 0.0);
    CHECK(rmse(dv{0.0, 0.0}, dv{3.0, 4.0}) ==
          doctest::Approx(std::sqrt(12.5)).epsilon(1e-15));
    // invariant under pairwise reordering
    CHECK(rmse(dv{3.0, 0.0}, dv{4.0, 1.0}) == rmse(dv{0.0, 3.0}, dv{1.0, 4.0}));
    CHECK_THROWS_AS(rmse(dv{1.0}, dv{1.0, 2.0}), std::invalid_argument);
}

TEST_CASE("jaccard examples") {
    CHECK(mean_jaccard({{1, 2, 3}}, {{1, 2, 3}}) == doctest::Approx(1.0));
    CHECK(mean_jaccard({{4, 5, 6}}, {{1, 2, 3}}) == doctest::Approx(0.0));
    // |T| = 3 with 2 overlaps -> 2 / 4
    CHECK(mean_jaccard({{1, 2, 9}}, {{1, 2, 3}}) == doctest::Approx(0.5));
    // prefix rule: only the first |T| entries of the prediction matter
    CHECK(mean_jaccard({{9, 1, 2, 3}}, {{1, 2, 3}}) ==
          doctest::Approx(2.0 / 4.0));
    CHECK_THROWS_AS(mean_jaccard({{1}}, {{1, 2}}), std::invalid_argument);
}

TEST_CASE("ndcg examples") {
    std::vector<int> seq = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    CHECK(ndcg_at_10(seq, {0, 1, 2}) == doctest::Approx(1.0));
    CHECK(ndcg_at_10(seq, {77}) == doctest::Approx(0.0));
    // one relevant item at position 2, |T| = 1 -> 1 / log2(3)
    CHECK(ndcg_at_10(seq, {1}) ==
          doctest::Approx(1.0 / std::log2(3.0)).epsilon(1e-12));
    CHECK(ndcg_at_10(seq, {}) == 0.0);
    // short universes score over the available prefix
    CHECK(ndcg_at_10({3, 4}, {3}) == doctest::Approx(1.0));
}

TEST_CASE("concavity audit examples") {
    auto concave = [](double x) { return -x * x; };
    auto convex = [](double x) { return x * x; };
    CHECK(audit_concave(concave, -1.0, 1.0, 41, 1e-9).pass);
    AuditReport bad = audit_concave(convex, -1.0, 1.0, 41, 1e-9);
    CHECK_FALSE(bad.pass);
    CHECK(bad.max_violation == doctest::Approx(2.0).epsilon(1e-6));
    CHECK(bad.violation_rate == doctest::Approx(1.0));
}

TEST_CASE("monotone audit examples") {
    CHECK(audit_monotone([](double x) { return 2 * x; }, 0, 1, 20, 1e-12).pass);
    CHECK_FALSE(
        audit_monotone([](double x) { return -x; }, 0, 1, 20, 1e-12).pass);
}

TEST_CASE("alpha inequality audit accepts exp(kappa x) and rejects exp growth") {
    // f(x) = e^{kappa x} satisfies f'' = kappa f' exactly at the boundary
    const double kappa = 0.3;
    auto boundary = [&](double x) { return std::exp(kappa * x); };
    CHECK(audit_alpha_inequality(boundary, kappa, 0.1, 2.0, 20, 1e-2, 1e-3).pass);
    // doubling the growth rate violates the inequality
    auto fast = [&](double x) { return std::exp(2.0 * kappa * x); };
    CHECK_FALSE(
        audit_alpha_inequality(fast, kappa, 0.5, 2.0, 20, 1e-2, 1e-3).pass);
}

TEST_CASE("audit report serializes") {
    AuditReport r;
    r.property = "concave";
    r.samples = 10;
    r.tolerance = 1e-4;
    r.pass = true;
    json j = r.to_json();
    CHECK(j.at("property") == "concave");
    CHECK(j.at("pass") == true);
}

TEST_CASE("chain audit validates its configuration") {
    ChainAuditConfig cfg;
    cfg.universe = 2;
    BatchSetValues dummy = [](const std::vector<ElementSet>& sets) {
        return Vec::Zero(Eigen::Index(sets.size()));
    };
    CHECK_THROWS_AS(audit_submodular(dummy, cfg), std::invalid_argument);
}
