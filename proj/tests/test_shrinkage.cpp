#include "disagg/shrinkage.hpp"

#include "disagg/error.hpp"
#include "disagg/rng.hpp"

#include <doctest.h>

#include <cmath>

using namespace disagg;

namespace {

struct Instance {
    EstimateSet z;
    VarianceModel variances;
};

// Pooled-consistent random instance: sizes n_a >= 1, variances scale/n_a.
Instance random_instance(Rng& rng, std::size_t groups) {
    Instance inst;
    inst.z.method = "standard";
    inst.variances.pooled_scale = 0.2 + rng.next_double();
    for (std::size_t g = 0; g < groups; ++g) {
        const std::size_t n = 1 + rng.next_index(60);
        inst.z.sizes.push_back(n);
        inst.z.values.emplace_back(rng.next_normal());
        inst.variances.sizes.push_back(n);
        inst.variances.pooled_var.emplace_back(inst.variances.pooled_scale /
                                               static_cast<double>(n));
        inst.variances.boot_var.emplace_back(std::nullopt);
    }
    return inst;
}

Instance fixed_instance(std::vector<double> z, std::vector<std::size_t> n, double scale) {
    Instance inst;
    inst.z.method = "standard";
    inst.variances.pooled_scale = scale;
    for (std::size_t g = 0; g < z.size(); ++g) {
        inst.z.values.emplace_back(z[g]);
        inst.z.sizes.push_back(n[g]);
        inst.variances.sizes.push_back(n[g]);
        inst.variances.pooled_var.emplace_back(n[g] == 0 ? std::optional<double>()
                                                         : scale / static_cast<double>(n[g]));
        inst.variances.boot_var.emplace_back(std::nullopt);
    }
    return inst;
}

} // namespace

TEST_CASE("james-stein matches a hand-evaluated four-group instance") {
    // Z = {0.2, 0.5, 0.8, 0.4}, n = {10, 20, 30, 40}, scale = 0.9.
    // mu0 = (2 + 10 + 24 + 16)/100 = 0.52
    // spread = 10(.32^2) + 20(.02^2) + 30(.28^2) + 40(.12^2) = 3.96
    // factor = 1 - 4(0.9)/3.96 = 1/11
    const Instance inst = fixed_instance({0.2, 0.5, 0.8, 0.4}, {10, 20, 30, 40}, 0.9);
    const EstimateSet js = james_stein(inst.z, inst.variances);
    CHECK(js.method == "js");
    CHECK(*js.values[0] == doctest::Approx(0.52 + (0.2 - 0.52) / 11.0).epsilon(1e-12));
    CHECK(*js.values[1] == doctest::Approx(0.52 + (0.5 - 0.52) / 11.0).epsilon(1e-12));
    CHECK(*js.values[2] == doctest::Approx(0.52 + (0.8 - 0.52) / 11.0).epsilon(1e-12));
    CHECK(*js.values[3] == doctest::Approx(0.52 + (0.4 - 0.52) / 11.0).epsilon(1e-12));

    // The groups-minus-3 variant uses c = 4 - 3 = 1 and shrinks less.
    JsOptions minus3;
    minus3.numerator_minus_3 = true;
    const EstimateSet js3 = james_stein(inst.z, inst.variances, minus3);
    const double factor3 = 1.0 - 1.0 * 0.9 / 3.96;
    CHECK(*js3.values[0] == doctest::Approx(0.52 + factor3 * (0.2 - 0.52)).epsilon(1e-12));
}

TEST_CASE("james-stein edge cases") {
    // All estimates equal: zero spread resolves to complete shrinkage at
    // the common value.
    const Instance equal = fixed_instance({0.4, 0.4, 0.4}, {5, 9, 14}, 0.3);
    const EstimateSet js = james_stein(equal.z, equal.variances);
    for (const auto& v : js.values) CHECK(*v == doctest::Approx(0.4).epsilon(1e-12));

    // Zero pooled scale: noiseless, no shrinkage at all.
    const Instance noiseless = fixed_instance({0.1, 0.7, 0.4}, {5, 9, 14}, 0.0);
    const EstimateSet identity = james_stein(noiseless.z, noiseless.variances);
    CHECK(*identity.values[0] == doctest::Approx(0.1).epsilon(1e-14));
    CHECK(*identity.values[1] == doctest::Approx(0.7).epsilon(1e-14));
    CHECK(*identity.values[2] == doctest::Approx(0.4).epsilon(1e-14));

    // A single defined group cannot be shrunk.
    Instance lone = fixed_instance({0.1, 0.7}, {5, 9}, 0.2);
    lone.z.values[1].reset();
    CHECK_THROWS_AS(james_stein(lone.z, lone.variances), Error);
}

TEST_CASE("james-stein skips undefined groups and keeps them undefined") {
    Instance inst = fixed_instance({0.2, 0.5, 0.8, 0.4}, {10, 20, 30, 40}, 0.9);
    inst.z.values[2].reset();
    const EstimateSet js = james_stein(inst.z, inst.variances);
    CHECK(!js.values[2].has_value());
    // mu0 over the remaining groups: (2 + 10 + 16)/70 = 0.4
    const double mu0 = (10 * 0.2 + 20 * 0.5 + 40 * 0.4) / 70.0;
    const double spread =
        10 * std::pow(0.2 - mu0, 2) + 20 * std::pow(0.5 - mu0, 2) + 40 * std::pow(0.4 - mu0, 2);
    const double factor = std::max(0.0, 1.0 - 3.0 * 0.9 / spread);
    CHECK(*js.values[0] == doctest::Approx(mu0 + factor * (0.2 - mu0)).epsilon(1e-12));
}

TEST_CASE("empirical bayes tau2 matches the size-weighted display on random instances") {
    // Appendix-style weighted-moment estimate vs the main display
    //   (sum n_a (Z_a - mu0)^2 - (|A|-1) scale) / (n - sum n_a^2 / n),
    // equal under w_a = n_a/n and sigma_a^2 = scale/n_a.
    Rng rng = Rng::from_seed(404);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t groups = 2 + rng.next_index(30);
        const Instance inst = random_instance(rng, groups);
        const EbFit fit = empirical_bayes(inst.z, inst.variances);

        double n_total = 0.0, weighted = 0.0;
        for (std::size_t g = 0; g < groups; ++g) {
            n_total += static_cast<double>(inst.z.sizes[g]);
            weighted += static_cast<double>(inst.z.sizes[g]) * *inst.z.values[g];
        }
        const double mu0 = weighted / n_total;
        double spread = 0.0, sq_sizes = 0.0;
        for (std::size_t g = 0; g < groups; ++g) {
            const double n = static_cast<double>(inst.z.sizes[g]);
            spread += n * std::pow(*inst.z.values[g] - mu0, 2);
            sq_sizes += n * n;
        }
        const double display =
            std::max(0.0, (spread - (static_cast<double>(groups) - 1.0) *
                                        inst.variances.pooled_scale) /
                              (n_total - sq_sizes / n_total));
        CHECK(std::fabs(fit.tau2 - display) < 1e-10);
    }
}

TEST_CASE("empirical bayes posterior shapes") {
    // Within-group noise explains all spread: tau2 clips to zero and every
    // posterior mean collapses to mu.
    const Instance flat = fixed_instance({0.5, 0.5, 0.5, 0.5}, {8, 16, 24, 32}, 1.0);
    const EbFit zero = empirical_bayes(flat.z, flat.variances);
    CHECK(zero.tau2 == 0.0);
    for (const auto& v : zero.means.values) CHECK(*v == doctest::Approx(zero.mu));

    // A nearly noiseless group keeps its own estimate.
    Instance precise = fixed_instance({0.1, 0.9, 0.5}, {10, 10, 10}, 0.5);
    precise.variances.pooled_var[0] = 1e-12;
    const EbFit keep = empirical_bayes(precise.z, precise.variances);
    CHECK(*keep.means.values[0] == doctest::Approx(0.1).epsilon(1e-5));

    // Posterior variance identity: shrink * sigma_a^2, never larger than
    // sigma_a^2, and equal to the two-factor form of the posterior.
    Rng rng = Rng::from_seed(7);
    for (int trial = 0; trial < 50; ++trial) {
        const Instance inst = random_instance(rng, 2 + rng.next_index(12));
        const EbFit fit = empirical_bayes(inst.z, inst.variances);
        for (std::size_t g = 0; g < inst.z.values.size(); ++g) {
            const double sigma2 = *inst.variances.pooled_var[g];
            const double expected = fit.tau2 * sigma2 / (fit.tau2 + std::max(sigma2, 1e-300));
            CHECK(*fit.posterior_var[g] == doctest::Approx(expected).epsilon(1e-12));
            CHECK(*fit.posterior_var[g] <= sigma2 + 1e-15);
        }
    }
}

TEST_CASE("shrinkage estimators are translation-equivariant and contract") {
    Rng rng = Rng::from_seed(909);
    for (int trial = 0; trial < 300; ++trial) {
        const Instance inst = random_instance(rng, 2 + rng.next_index(20));
        const double shift = 2.0 * rng.next_normal();

        Instance shifted = inst;
        for (auto& v : shifted.z.values) *v += shift;

        const EstimateSet js = james_stein(inst.z, inst.variances);
        const EstimateSet js_shifted = james_stein(shifted.z, shifted.variances);
        const EbFit eb = empirical_bayes(inst.z, inst.variances);
        const EbFit eb_shifted = empirical_bayes(shifted.z, shifted.variances);

        double n_total = 0.0, weighted = 0.0;
        for (std::size_t g = 0; g < inst.z.values.size(); ++g) {
            n_total += static_cast<double>(inst.z.sizes[g]);
            weighted += static_cast<double>(inst.z.sizes[g]) * *inst.z.values[g];
        }
        const double mu0 = weighted / n_total;

        for (std::size_t g = 0; g < inst.z.values.size(); ++g) {
            CHECK(std::fabs(*js_shifted.values[g] - (*js.values[g] + shift)) < 1e-12);
            CHECK(std::fabs(*eb_shifted.means.values[g] - (*eb.means.values[g] + shift)) <
                  1e-12);
            // Contraction toward the respective centers.
            CHECK(std::fabs(*js.values[g] - mu0) <=
                  std::fabs(*inst.z.values[g] - mu0) + 1e-12);
            CHECK(std::fabs(*eb.means.values[g] - eb.mu) <=
                  std::fabs(*inst.z.values[g] - eb.mu) + 1e-12);
        }
    }
}
