#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "rlcd/oracle.hpp"
#include "rlcd/rank_test.hpp"
#include "rlcd/sim.hpp"
#include "rlcd/stats.hpp"
#include "test_helpers.hpp"

#include <fstream>

using namespace rlcd;
using rlcd::test::random_latent_dag;
using rlcd::test::random_subset;

TEST_CASE("chi-square quantile and cdf") {
    // spot values (R: qchisq)
    CHECK(chi2_quantile(0.95, 1) == doctest::Approx(3.841459).epsilon(1e-4));
    CHECK(chi2_quantile(0.95, 4) == doctest::Approx(9.487729).epsilon(1e-4));
    CHECK(chi2_quantile(0.995, 10) == doctest::Approx(25.18818).epsilon(1e-4));
    CHECK(chi2_cdf(chi2_quantile(0.9, 7), 7) == doctest::Approx(0.9).epsilon(1e-8));
}

TEST_CASE("csv loading") {
    const char* path = "test_rank_io.csv";
    {
        std::ofstream out(path);
        out << "a,b\n1,2\n2,1\n3,4\n";
    }
    auto d = load_csv(path);
    CHECK(d.n_samples() == 3);
    CHECK(d.column_names == std::vector<std::string>{"a", "b"});
    CHECK(d.values.col(0).mean() == doctest::Approx(0.0));

    {
        std::ofstream out(path);
        out << "a,b\n1,\n2,1\n";
    }
    CHECK_THROWS_WITH_AS(load_csv(path), doctest::Contains("row 2"), std::runtime_error);
    std::remove(path);
}

TEST_CASE("sample covariance basics") {
    DataMatrix d;
    d.values.resize(4, 2);
    d.values << 1, 1, 2, 2, 3, 3, 4, 4;
    d.column_names = {"a", "b"};
    auto cov = sample_covariance(d);
    CHECK(cov(0, 1) == doctest::Approx(cov(0, 0)));  // identical columns

    DataMatrix c;
    c.values.resize(3, 1);
    c.values << 5, 5, 5;
    c.column_names = {"const"};
    CHECK_THROWS_WITH_AS(sample_covariance(c), doctest::Contains("constant"),
                         std::runtime_error);
}

TEST_CASE("sample covariance approaches the population covariance") {
    Dag g = fixture("fig3d");
    ScmSpec spec;
    spec.seed = 3;
    ScmModel m = generate_scm(g, spec);
    auto pop = population_covariance(m);
    auto data = sample(m, 200000, 17);
    auto cov = sample_covariance(data);
    auto ix = pop.index();
    VarSet obs = g.observed_ids();
    for (size_t i = 0; i < obs.size(); ++i)
        for (size_t j = 0; j < obs.size(); ++j) {
            double expect = pop.sigma(ix.at(obs[i]), ix.at(obs[j]));
            double got = cov(static_cast<long>(i), static_cast<long>(j));
            CHECK(std::fabs(got - expect) <= 0.05 * std::max(1.0, std::fabs(expect)));
        }
}

TEST_CASE("standardized single column has unit covariance") {
    DataMatrix d;
    d.values.resize(4, 1);
    d.values << 1, 2, 3, 4;
    d.column_names = {"a"};
    standardize(d, true);
    auto cov = sample_covariance(d);
    CHECK(cov(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("canonical correlations") {
    SUBCASE("singleton pair is the correlation") {
        Eigen::MatrixXd s(2, 2);
        s << 1.0, 0.6, 0.6, 1.0;
        auto cc = canonical_correlations(s, {0}, {1});
        REQUIRE(cc.size() == 1);
        CHECK(cc[0] == doctest::Approx(0.6));
    }
    SUBCASE("identical sets give all ones") {
        Eigen::MatrixXd s(3, 3);
        s << 1.0, 0.3, 0.1, 0.3, 1.0, 0.2, 0.1, 0.2, 1.0;
        auto cc = canonical_correlations(s, {0, 1, 2}, {0, 1, 2});
        REQUIRE(cc.size() == 3);
        for (double v : cc) CHECK(v == doctest::Approx(1.0));
    }
    SUBCASE("fig7 population covariance has exactly two nonzero values") {
        Dag g = fixture("fig7");
        ScmSpec spec;
        spec.seed = 5;
        ScmModel m = generate_scm(g, spec);
        auto pop = population_covariance(m);
        auto ix = pop.index();
        std::vector<int> a = {ix.at(3), ix.at(4), ix.at(5)};
        std::vector<int> b = {ix.at(1), ix.at(6), ix.at(7)};
        auto cc = canonical_correlations(pop.sigma, a, b);
        REQUIRE(cc.size() == 3);
        CHECK(cc[0] > 1e-4);
        CHECK(cc[1] > 1e-4);
        CHECK(cc[2] < 1e-7);
    }
    SUBCASE("non-PD block fails loudly") {
        Eigen::MatrixXd s = Eigen::MatrixXd::Zero(2, 2);
        s(0, 0) = 1.0;  // second variable has zero variance
        CHECK_THROWS_WITH_AS(canonical_correlations(s, {0, 1}, {0, 1}),
                             doctest::Contains("positive definite"), std::runtime_error);
    }
}

TEST_CASE("rank_le_test precondition") {
    Eigen::MatrixXd s = Eigen::MatrixXd::Identity(4, 4);
    CHECK_THROWS_AS(rank_le_test(s, 100, {0, 1}, {2, 3}, 2, 0.05), std::invalid_argument);
}

TEST_CASE("reduce_overlap") {
    std::mt19937_64 rng(31);
    SUBCASE("disjoint sets pass through") {
        Eigen::MatrixXd s = Eigen::MatrixXd::Identity(4, 4);
        auto red = reduce_overlap(s, {0, 1}, {2, 3});
        REQUIRE(red.has_value());
        CHECK(red->base_rank == 0);
        CHECK(red->a.size() == 2);
        CHECK(red->b.size() == 2);
    }
    SUBCASE("identical sets reduce to the base rank") {
        Eigen::MatrixXd s(2, 2);
        s << 1.0, 0.5, 0.5, 1.0;
        auto red = reduce_overlap(s, {0, 1}, {0, 1});
        REQUIRE(red.has_value());
        CHECK(red->base_rank == 2);
        CHECK(red->a.empty());
        CHECK(red->b.empty());
    }
    SUBCASE("base rank plus reduced numeric rank equals raw numeric rank") {
        for (int rep = 0; rep < 30; ++rep) {
            Dag g = random_latent_dag(6, 2, 0.35, rng);
            ScmSpec spec;
            spec.seed = 100 + rep;
            ScmModel m = generate_scm(g, spec);
            auto pop = population_covariance(m);
            auto ix = pop.index();
            Eigen::VectorXd d = pop.sigma.diagonal().array().rsqrt();
            Eigen::MatrixXd corr = d.asDiagonal() * pop.sigma * d.asDiagonal();
            VarSet pool = g.all_ids();
            VarSet av = random_subset(pool, 4, rng);
            VarSet bv = random_subset(pool, 4, rng);
            if (av.empty() || bv.empty()) continue;
            std::vector<int> a, b;
            for (int v : av) a.push_back(ix.at(v));
            for (int v : bv) b.push_back(ix.at(v));
            auto red = reduce_overlap(corr, a, b);
            REQUIRE(red.has_value());
            Eigen::MatrixXd raw(a.size(), b.size());
            for (size_t i = 0; i < a.size(); ++i)
                for (size_t j = 0; j < b.size(); ++j)
                    raw(static_cast<long>(i), static_cast<long>(j)) = corr(a[i], b[j]);
            Eigen::MatrixXd cross(red->a.size(), red->b.size());
            for (size_t i = 0; i < red->a.size(); ++i)
                for (size_t j = 0; j < red->b.size(); ++j)
                    cross(static_cast<long>(i), static_cast<long>(j)) =
                        red->sigma(red->a[i], red->b[j]);
            CHECK(red->base_rank + numeric_rank(cross) == numeric_rank(raw));
            CHECK(red->base_rank + numeric_rank(cross) == trek_rank(g, av, bv));
        }
    }
}

TEST_CASE("rank test calibration under the null and power under alternatives") {
    // true rank-1 structure: L -> {a1, a2}, L -> {b1, b2}
    Dag g;
    g.add_node_with_id(100, Kind::latent, "L");
    for (int i = 1; i <= 4; ++i) g.add_node_with_id(i, Kind::observed, "X" + std::to_string(i));
    for (int i = 1; i <= 4; ++i) g.add_edge(100, i);
    ScmSpec spec;
    spec.seed = 9;
    spec.weight_low = -2.0;
    spec.weight_high = 2.0;
    ScmModel m = generate_scm(g, spec);

    const int reps = 600;
    const long n = 10000;
    int rejects_null = 0;
    int rejects_alt = 0;
    for (int rep = 0; rep < reps; ++rep) {
        auto data = sample(m, n, 1000 + rep);
        auto cov = sample_covariance(data);
        auto [rej1, st1] = rank_le_test(cov, n, {0, 1}, {2, 3}, 1, 0.05);  // true rank 1
        if (rej1) ++rejects_null;
        auto [rej0, st0] = rank_le_test(cov, n, {0, 1}, {2, 3}, 0, 0.05);  // rank 0 is false
        if (rej0) ++rejects_alt;
    }
    double null_rate = double(rejects_null) / reps;
    double power = double(rejects_alt) / reps;
    CHECK(null_rate > 0.02);
    CHECK(null_rate < 0.08);
    CHECK(power > 0.95);
}

TEST_CASE("providers answer rank queries consistently") {
    Dag g = fixture("fig3d");
    ExactRankProvider exact(g);
    SUBCASE("exact provider matches trek rank") {
        auto q = exact.rank_le({2, 4, 5}, {1, 2, 3, 6, 7, 8}, 2, QueryStage::cluster);
        REQUIRE(q.has_value());
        CHECK(*q);
        auto q1 = exact.rank_le({2, 4, 5}, {1, 2, 3, 6, 7, 8}, 1, QueryStage::cluster);
        REQUIRE(q1.has_value());
        CHECK_FALSE(*q1);
    }
    SUBCASE("caching is idempotent") {
        auto a = exact.rank_of({1, 2}, {3}, QueryStage::cluster);
        auto b = exact.rank_of({1, 2}, {3}, QueryStage::cluster);
        CHECK(a == b);
        CHECK(exact.cache_hits() >= 1);
    }
    SUBCASE("monotonicity in r") {
        std::mt19937_64 rng(41);
        VarSet obs = g.observed_ids();
        for (int rep = 0; rep < 40; ++rep) {
            VarSet a = random_subset(obs, 4, rng);
            VarSet b = random_subset(obs, 4, rng);
            if (a.empty() || b.empty()) continue;
            for (int r = 0; r < 3; ++r) {
                auto low = exact.rank_le(a, b, r, QueryStage::cluster);
                auto high = exact.rank_le(a, b, r + 1, QueryStage::cluster);
                if (low.has_value() && *low) CHECK(*high);
            }
        }
    }
}

TEST_CASE("finite-sample provider agrees with the oracle on generic queries") {
    std::mt19937_64 rng(43);
    Dag g = fixture("fig3d");
    ScmSpec spec;
    spec.seed = 21;
    ScmModel m = generate_scm(g, spec);
    auto data = sample(m, 100000, 77);
    auto cov = sample_covariance(data);
    VarSet obs = g.observed_ids();
    FiniteSampleRankProvider fin(cov, 100000, obs, 0.05, 0.005);
    ExactRankProvider exact(g);

    int agree = 0, total = 0;
    for (int rep = 0; rep < 1200 && total < 1000; ++rep) {
        VarSet a = random_subset(obs, 4, rng);
        VarSet b = random_subset(obs, 4, rng);
        if (a.empty() || b.empty()) continue;
        std::uniform_int_distribution<int> rr(0, 3);
        int r = rr(rng);
        auto fq = fin.rank_le(a, b, r, QueryStage::cluster);
        auto eq = exact.rank_le(a, b, r, QueryStage::cluster);
        if (!fq.has_value() || !eq.has_value()) continue;
        ++total;
        if (*fq == *eq) ++agree;
    }
    CHECK(total >= 700);
    CHECK(double(agree) / total >= 0.97);
}

TEST_CASE("population covariance with huge synthetic N recovers exact ranks") {
    Dag g = fixture("fig7");
    ScmSpec spec;
    spec.seed = 2;
    ScmModel m = generate_scm(g, spec);
    auto pop = population_covariance(m);
    auto ix = pop.index();
    VarSet obs = g.observed_ids();
    Eigen::MatrixXd sig(obs.size(), obs.size());
    for (size_t i = 0; i < obs.size(); ++i)
        for (size_t j = 0; j < obs.size(); ++j)
            sig(static_cast<long>(i), static_cast<long>(j)) =
                pop.sigma(ix.at(obs[i]), ix.at(obs[j]));
    FiniteSampleRankProvider fin(sig, 100000000, obs, 0.005, 0.005);
    auto at_true = fin.rank_le({3, 4, 5}, {1, 6, 7}, 2, QueryStage::cluster);
    auto below = fin.rank_le({3, 4, 5}, {1, 6, 7}, 1, QueryStage::cluster);
    REQUIRE(at_true.has_value());
    REQUIRE(below.has_value());
    CHECK(*at_true);
    CHECK_FALSE(*below);
}
