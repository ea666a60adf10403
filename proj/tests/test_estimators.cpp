#include "harmony/error.hpp"
#include "harmony/estimators.hpp"
#include "helpers.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

using namespace harmony;
using testing_support::binary_dataset;
using testing_support::code_of;
using testing_support::rec;

TEST_SUITE("estimators") {

TEST_CASE("overall difference of means") {
    auto ds = testing_support::empty_dataset(1);
    ds.rct = {rec(2, 1, 0, Study::Rct), rec(4, 1, 0, Study::Rct), rec(1, 0, 0, Study::Rct),
              rec(3, 0, 0, Study::Rct)};
    CHECK(*diff_means_overall(ds).theta_overall == doctest::Approx(1.0));
    CHECK_FALSE(diff_means_overall(ds).uses_ec);
    for (auto& r : ds.rct) r.outcome = 7.0;
    CHECK(*diff_means_overall(ds).theta_overall == 0.0);
    ds.rct = {rec(2, 1, 0, Study::Rct)};
    CHECK(code_of([&] { diff_means_overall(ds); }) == ErrorCode::EmptyArm);
}

TEST_CASE("pooled subgroup difference of means") {
    auto ds = testing_support::empty_dataset(2);
    ds.rct = {rec(1, 1, 0, Study::Rct), rec(0, 0, 0, Study::Rct), rec(5, 1, 1, Study::Rct),
              rec(4, 0, 1, Study::Rct)};
    ds.ec = {rec(1, 0, 0, Study::Ec), rec(2, 0, 0, Study::Ec), rec(3, 0, 0, Study::Ec)};
    auto e = diff_means_pooled_subgroups(ds);
    CHECK(e.theta(0) == doctest::Approx(-0.5));
    CHECK(e.theta(1) == doctest::Approx(1.0));
    CHECK(e.uses_ec);

    auto one = testing_support::empty_dataset(1);
    one.rct = {rec(3, 1, 0, Study::Rct), rec(1, 0, 0, Study::Rct)};
    one.ec = {rec(2, 0, 0, Study::Ec)};
    CHECK(diff_means_pooled_subgroups(one).theta(0) == doctest::Approx(3.0 - 1.5));

    ds.rct.erase(ds.rct.begin());
    CHECK(code_of([&] { diff_means_pooled_subgroups(ds); }) == ErrorCode::EmptySubgroupArm);
}

TEST_CASE("RCT-only estimators ignore EC data") {
    std::mt19937_64 rng(3);
    auto ds = testing_support::normal_dataset(rng, 3, 6, 10, {0.5, 0, -0.5}, 1.0);
    auto a = rct_only_subgroups(ds, RctModel::DiffMeans);
    auto other = ds;
    for (auto& r : other.ec) r.outcome += 100.0;
    auto b = rct_only_subgroups(other, RctModel::DiffMeans);
    CHECK(a.theta == b.theta);
    CHECK_FALSE(a.uses_ec);
    auto none = ds.rct_only();
    CHECK(rct_only_subgroups(none, RctModel::DiffMeans).theta == a.theta);

    auto ols = rct_only_subgroups(ds, RctModel::Ols);
    CHECK((ols.theta - a.theta).lpNorm<Eigen::Infinity>() < 1e-8);
}

TEST_CASE("prevalence-weighted subgroup effects recover the overall effect") {
    std::mt19937_64 rng(4);
    auto ds = testing_support::normal_dataset(rng, 4, 7, 3, {1, 2, 3, 4});
    auto sub = rct_only_subgroups(ds, RctModel::DiffMeans);
    auto dc = compute_design_counts(ds);
    CHECK(std::abs(dc.pi.dot(sub.theta) - *diff_means_overall(ds).theta_overall) < 1e-10);
}

TEST_CASE("oracle estimator") {
    auto ds = testing_support::empty_dataset(1);
    ds.rct = {rec(1.0, 1, 0, Study::Rct), rec(1.4, 1, 0, Study::Rct), rec(0, 0, 0, Study::Rct)};
    Eigen::VectorXd mu(1);
    mu << 1.0;
    CHECK(oracle_subgroups(ds, mu).theta(0) == doctest::Approx(0.2));
    mu << 1.2;
    CHECK(std::abs(oracle_subgroups(ds, mu).theta(0)) < 1e-15);
}

TEST_CASE("OLS pooled model equals pooled difference of means without covariates") {
    std::mt19937_64 rng(8);
    auto ds = testing_support::normal_dataset(rng, 3, 5, 9, {0.2, 0.4, 0.6}, 0.3);
    auto ols = ols_subgroup_effects(ds);
    auto dm = diff_means_pooled_subgroups(ds);
    CHECK((ols.theta - dm.theta).lpNorm<Eigen::Infinity>() < 1e-8);
    auto overall = ols_overall_effect(ds);
    CHECK(*overall.theta_overall == doctest::Approx(*diff_means_overall(ds).theta_overall));

    // Linear weights reproduce the estimates.
    Eigen::VectorXd y(static_cast<Eigen::Index>(ds.n_rct() + ds.n_ec()));
    Eigen::Index i = 0;
    for (const auto& r : ds.rct) y(i++) = r.outcome;
    for (const auto& r : ds.ec) y(i++) = r.outcome;
    auto w = diff_means_weights(ds);
    CHECK((w.subgroup_weights * y - dm.theta).norm() < 1e-12);
    CHECK(std::abs(w.overall_weights.dot(y) - *diff_means_overall(ds).theta_overall) < 1e-12);
    auto ow = ols_weights(ds);
    CHECK((ow.subgroup_weights * y - ols.theta).norm() < 1e-10);
}

TEST_CASE("OLS with covariates carries the bias B gamma on average") {
    std::mt19937_64 rng(21);
    Eigen::VectorXd mean_err = Eigen::VectorXd::Zero(2);
    const int reps = 400;
    for (int r = 0; r < reps; ++r) {
        auto ds = testing_support::normal_dataset(rng, 2, 10, 30, {0.5, -0.5}, 0.0, 0.5);
        auto e = ols_subgroup_effects(ds);
        mean_err += e.theta - Eigen::Vector2d(0.5, -0.5);
    }
    mean_err /= reps;
    CHECK(mean_err.lpNorm<Eigen::Infinity>() < 0.05);
}

TEST_CASE("logistic marginal effects without covariates are proportion differences") {
    auto ds = testing_support::empty_dataset(1);
    ds.family = OutcomeFamily::Binary;
    for (int i = 0; i < 10; ++i) ds.rct.push_back(rec(i < 7 ? 1 : 0, 1, 0, Study::Rct));
    for (int i = 0; i < 10; ++i) ds.rct.push_back(rec(i < 4 ? 1 : 0, 0, 0, Study::Rct));
    auto e = logistic_marginal_effects(ds);
    CHECK(e.theta(0) == doctest::Approx(0.3).epsilon(1e-10));

    auto balanced = testing_support::empty_dataset(1);
    balanced.family = OutcomeFamily::Binary;
    for (int i = 0; i < 8; ++i) balanced.rct.push_back(rec(i % 2, i / 4, 0, Study::Rct));
    CHECK(std::abs(logistic_marginal_effects(balanced).theta(0)) < 1e-12);

    auto overall = logistic_overall_rct(ds);
    CHECK(*overall.theta_overall == doctest::Approx(0.3).epsilon(1e-10));
}

TEST_CASE("delta-method covariance tracks the bootstrap") {
    std::mt19937_64 rng(99);
    auto ds = binary_dataset(rng, 2, 100, 0, 0.0, 0.0);
    auto fit = logistic_marginal_effects(ds);
    const int B = 300;
    std::vector<Eigen::VectorXd> draws;
    for (int b = 0; b < B; ++b) {
        auto boot = ds;
        // Resample within (subgroup, arm) cells so every cell stays populated.
        for (std::size_t i = 0; i < ds.rct.size(); ++i) {
            const std::size_t cell = i / 100;
            std::uniform_int_distribution<std::size_t> in_cell(cell * 100, cell * 100 + 99);
            boot.rct[i] = ds.rct[in_cell(rng)];
        }
        try {
            draws.push_back(logistic_marginal_effects(boot).theta);
        } catch (const Error&) {
        }
    }
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(2);
    for (const auto& d : draws) mean += d;
    mean /= static_cast<double>(draws.size());
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(2, 2);
    for (const auto& d : draws) cov += (d - mean) * (d - mean).transpose();
    cov /= static_cast<double>(draws.size() - 1);
    for (int k = 0; k < 2; ++k) {
        CHECK((*fit.covariance)(k, k) == doctest::Approx(cov(k, k)).epsilon(0.15));
    }
}

TEST_CASE("propensity weights") {
    auto ds = testing_support::empty_dataset(2, 1);
    ds.family = OutcomeFamily::Binary;
    std::mt19937_64 rng(1);
    std::normal_distribution<double> z;
    for (int i = 0; i < 40; ++i) {
        const double x = z(rng);
        const std::size_t k = static_cast<std::size_t>(i % 2);
        ds.rct.push_back(rec(i % 3 == 0, i % 4 < 2, k, Study::Rct, {x}));
        ds.ec.push_back(rec(i % 5 == 0, 0, k, Study::Ec, {x}));
    }
    auto pm = fit_propensity(ds);
    CHECK((pm.weights.array() - 1.0).abs().maxCoeff() < 1e-8);

    for (auto& r : ds.ec) r.covariates(0) += 1.0;

    ds.ec.push_back(rec(1, 0, 0, Study::Ec, {8.0}));
    ds.ec.push_back(rec(0, 0, 1, Study::Ec, {-0.5}));
    pm = fit_propensity(ds);
    CHECK(pm.weights.maxCoeff() == 1.0);
    CHECK((pm.weights.array() > 0.0).all());
    CHECK(pm.weights(pm.weights.size() - 2) < 0.05);
    CHECK((pm.rho_ec.array() > 0.0).all());
    CHECK((pm.rho_ec.array() < 1.0).all());
}

TEST_CASE("weighted logistic limiting cases") {
    std::mt19937_64 rng(12);
    auto ds = binary_dataset(rng, 2, 60, 80, 0.0, 0.0);
    const auto n_ec = static_cast<Eigen::Index>(ds.n_ec());
    auto ones = logistic_marginal_effects(ds, stacked_weights(ds, Eigen::VectorXd::Ones(n_ec)));
    auto pooled = logistic_marginal_effects(ds);
    CHECK(ones.theta == pooled.theta);
    auto zero = logistic_marginal_effects(ds, stacked_weights(ds, Eigen::VectorXd::Zero(n_ec)));
    auto rct = rct_only_subgroups(ds, RctModel::Logistic);
    CHECK((zero.theta - rct.theta).lpNorm<Eigen::Infinity>() < 1e-6);
    auto ipw = weighted_logistic_effects(ds);
    CHECK(ipw.method == EstimatorMethod::IpwLogistic);
}

TEST_CASE("IPW reduces covariate-shift bias relative to pooling") {
    // EC outcomes depend on x more steeply than the working model allows, so the
    // covariate shift leaks into the pooled subgroup effects.
    std::mt19937_64 rng(31);
    Eigen::VectorXd bias_pooled = Eigen::VectorXd::Zero(2), bias_ipw = Eigen::VectorXd::Zero(2);
    std::normal_distribution<double> z;
    std::uniform_real_distribution<double> u;
    const int reps = 60;
    int used = 0;
    for (int r = 0; r < reps; ++r) {
        auto ds = testing_support::empty_dataset(2, 1);
        ds.family = OutcomeFamily::Binary;
        Eigen::VectorXd truth = Eigen::VectorXd::Zero(2), count = Eigen::VectorXd::Zero(2);
        for (std::size_t k = 0; k < 2; ++k) {
            for (int i = 0; i < 200; ++i) {
                const double x = z(rng);
                const int t = i % 2;
                const double p = expit(-0.3 + 0.6 * t + 0.8 * x * x * 0.5);
                ds.rct.push_back(rec(u(rng) < p, t, k, Study::Rct, {x}));
            }
            for (int i = 0; i < 400; ++i) {
                const double x = 1.5 + z(rng);
                const double p = expit(-0.3 + 0.8 * x * x * 0.5);
                ds.ec.push_back(rec(u(rng) < p, 0, k, Study::Ec, {x}));
            }
        }
        try {
            auto rct = rct_only_subgroups(ds, RctModel::Logistic);
            bias_pooled += logistic_marginal_effects(ds).theta - rct.theta;
            bias_ipw += weighted_logistic_effects(ds).theta - rct.theta;
            ++used;
        } catch (const Error&) {
        }
    }
    REQUIRE(used > reps / 2);
    CHECK(bias_ipw.cwiseAbs().sum() < bias_pooled.cwiseAbs().sum());
}

TEST_CASE("estimates do not depend on row order") {
    std::mt19937_64 rng(17);
    auto ds = testing_support::normal_dataset(rng, 3, 5, 6, {1, 0, -1}, 0.2, 0.3);
    auto shuffled = ds;
    std::shuffle(shuffled.rct.begin(), shuffled.rct.end(), rng);
    std::shuffle(shuffled.ec.begin(), shuffled.ec.end(), rng);
    CHECK((diff_means_pooled_subgroups(ds).theta - diff_means_pooled_subgroups(shuffled).theta).norm() <
          1e-12);
    CHECK((ols_subgroup_effects(ds).theta - ols_subgroup_effects(shuffled).theta).norm() < 1e-10);
}

}
