#include "disagg/gof.hpp"

#include "disagg/error.hpp"
#include "disagg/feature_builder.hpp"
#include "disagg/numerics.hpp"
#include "disagg/rng.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace disagg;

namespace {

// Feature matrix over one synthetic 2x4 schema with an explanatory column.
struct Fixture {
    AttributeSchema schema;
    FeatureMatrix phi;
    std::vector<double> weights;
};

Fixture make_fixture(std::uint64_t seed) {
    Fixture f{AttributeSchema(std::vector<Attribute>{{"a", {"x", "y"}},
                                                     {"b", {"0", "1", "2", "3"}}}),
              {}, {}};
    std::vector<EvalRecord> records;
    Rng rng = Rng::from_seed(seed);
    for (std::size_t g = 0; g < f.schema.group_count(); ++g) {
        for (int i = 0; i < 6; ++i) {
            EvalRecord rec;
            rec.attrs = f.schema.group_key(g);
            rec.record_value = rng.next_double();
            rec.covariates["x1"] = rng.next_normal();
            records.push_back(std::move(rec));
        }
    }
    FeatureSpec spec;
    spec.group_identity = false;
    spec.attribute_indicators = true;
    spec.explanatory = {"x1"};
    f.phi = build_features(stratify(records, f.schema), spec);
    f.weights.assign(f.schema.group_count(), 1.0);
    return f;
}

std::vector<std::optional<double>> wrap(const std::vector<double>& values) {
    return {values.begin(), values.end()};
}

} // namespace

TEST_CASE("intercept-only fit is the weighted mean") {
    const Fixture f = make_fixture(3);
    Rng rng = Rng::from_seed(5);
    std::vector<double> z(f.schema.group_count());
    std::vector<double> w(f.schema.group_count());
    for (auto& v : z) v = rng.next_normal();
    for (auto& v : w) v = 0.5 + rng.next_double();

    const WlsFit fit = fit_weighted_ols(f.phi, {}, wrap(z), w);
    double weighted = 0.0, total = 0.0;
    for (std::size_t g = 0; g < z.size(); ++g) {
        weighted += w[g] * z[g];
        total += w[g];
    }
    const double mu0 = weighted / total;
    CHECK(fit.rank == 1);
    CHECK(fit.coefficients[0] == doctest::Approx(mu0).epsilon(1e-10));
    double rss = 0.0;
    for (std::size_t g = 0; g < z.size(); ++g) rss += w[g] * std::pow(z[g] - mu0, 2);
    CHECK(fit.rss == doctest::Approx(rss).epsilon(1e-10));
}

TEST_CASE("saturated model interpolates with zero residual") {
    const Fixture f = make_fixture(7);
    Rng rng = Rng::from_seed(11);
    std::vector<double> z(f.schema.group_count());
    for (auto& v : z) v = rng.next_normal();
    // attr:a=* x attr:b=* products span all 8 cells without using
    // group-identity indicators.
    FeatureSpec spec;
    spec.group_identity = false;
    spec.attribute_indicators = true;
    spec.interactions = {{"attr:a=*", "attr:b=*"}};
    std::vector<EvalRecord> records;
    Rng record_rng = Rng::from_seed(13);
    for (std::size_t g = 0; g < f.schema.group_count(); ++g) {
        for (int i = 0; i < 3; ++i) {
            EvalRecord rec;
            rec.attrs = f.schema.group_key(g);
            rec.record_value = record_rng.next_double();
            records.push_back(std::move(rec));
        }
    }
    const FeatureMatrix phi = build_features(stratify(records, f.schema), spec);
    const WlsFit fit = fit_weighted_ols(phi, {"int:*"}, wrap(z), f.weights);
    CHECK(fit.rank == 8);
    CHECK(fit.rss == doctest::Approx(0.0).epsilon(1e-18));
}

TEST_CASE("weighted ols matches an independent normal-equations solve") {
    const Fixture f = make_fixture(17);
    Rng rng = Rng::from_seed(19);
    std::vector<double> z(f.schema.group_count());
    std::vector<double> w(f.schema.group_count());
    for (auto& v : z) v = rng.next_normal();
    for (auto& v : w) v = 0.3 + rng.next_double();

    const std::vector<std::string> columns = {"attr:a=x", "attr:b=1", "expl:x1"};
    const WlsFit fit = fit_weighted_ols(f.phi, columns, wrap(z), w);

    Eigen::MatrixXd design(8, 4);
    design.col(0).setOnes();
    for (std::size_t j = 0; j < columns.size(); ++j) {
        design.col(static_cast<Eigen::Index>(j + 1)) =
            f.phi.values.col(static_cast<Eigen::Index>(*f.phi.column_index(columns[j])));
    }
    Eigen::VectorXd zv(8), wv(8);
    for (int g = 0; g < 8; ++g) {
        zv(g) = z[static_cast<std::size_t>(g)];
        wv(g) = w[static_cast<std::size_t>(g)];
    }
    const Eigen::MatrixXd gram = design.transpose() * wv.asDiagonal() * design;
    const Eigen::VectorXd solution = gram.fullPivLu().solve(
        design.transpose() * (wv.asDiagonal() * zv));
    for (int j = 0; j < 4; ++j) {
        CHECK(fit.coefficients[static_cast<std::size_t>(j)] ==
              doctest::Approx(solution(j)).epsilon(1e-8));
    }
}

TEST_CASE("f_test rejects group-identity columns, non-nesting, and rank ties") {
    const Fixture f = make_fixture(23);
    Rng rng = Rng::from_seed(29);
    std::vector<double> z(f.schema.group_count());
    for (auto& v : z) v = rng.next_normal();

    // Group-identity columns are banned from GOF models outright.
    std::vector<EvalRecord> records;
    for (std::size_t g = 0; g < f.schema.group_count(); ++g) {
        EvalRecord rec;
        rec.attrs = f.schema.group_key(g);
        rec.record_value = 0.5;
        records.push_back(std::move(rec));
    }
    FeatureSpec with_grp;
    with_grp.group_identity = true;
    with_grp.attribute_indicators = true;
    const FeatureMatrix phi_grp = build_features(stratify(records, f.schema), with_grp);
    CHECK_THROWS_AS(
        f_test({"m0", {}}, {"m1", {"grp:*"}}, phi_grp, wrap(z), f.weights), Error);

    // Non-nested: m0 has a column outside m1.
    CHECK_THROWS_AS(f_test({"m0", {"expl:x1"}}, {"m1", {"attr:a=x"}}, f.phi, wrap(z),
                           f.weights),
                    Error);

    // Adding only columns inside the span of m0 leaves the rank unchanged.
    CHECK_THROWS_AS(f_test({"m0", {"attr:a=*"}}, {"m1", {"attr:a=*", "attr:a=x"}}, f.phi,
                           wrap(z), f.weights),
                    Error);
}

TEST_CASE("identical residuals give F = 0 and p = 1") {
    const Fixture f = make_fixture(31);
    // Response depends only on attribute a; adding attribute b columns
    // orthogonal to the truth can still reduce RSS by chance, so build the
    // degenerate case directly: m1 adds a column of zeros... which has no
    // rank. Instead test with a response constant in b across equal
    // weights, where the b-block regression coefficients are exactly zero.
    std::vector<double> z(f.schema.group_count());
    for (std::size_t g = 0; g < z.size(); ++g) {
        z[g] = f.schema.group_key(g)[0] == "x" ? 0.3 : 0.9;
    }
    const GofResult result =
        f_test({"m0", {"attr:a=*"}}, {"m1", {"attr:a=*", "attr:b=*"}}, f.phi, wrap(z),
               f.weights);
    CHECK(result.f_stat == doctest::Approx(0.0).epsilon(1e-20));
    CHECK(result.p_value == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(!result.significant);
    CHECK(result.rss1 <= result.rss0 + 1e-9);
}

TEST_CASE("f_test is invariant to reparameterizing the added columns") {
    const Fixture f = make_fixture(37);
    Rng rng = Rng::from_seed(41);
    std::vector<double> z(f.schema.group_count());
    std::vector<double> w(f.schema.group_count());
    for (auto& v : z) v = rng.next_normal();
    for (auto& v : w) v = 0.4 + rng.next_double();

    const GofResult base =
        f_test({"m0", {"expl:x1"}}, {"m1", {"expl:x1", "attr:a=x", "attr:b=1"}}, f.phi,
               wrap(z), w);

    // Replace the added block with an invertible linear recombination.
    FeatureMatrix phi = f.phi;
    const auto a_col = *phi.column_index("attr:a=x");
    const auto b_col = *phi.column_index("attr:b=1");
    Eigen::VectorXd col_a = phi.values.col(static_cast<Eigen::Index>(a_col));
    Eigen::VectorXd col_b = phi.values.col(static_cast<Eigen::Index>(b_col));
    phi.values.col(static_cast<Eigen::Index>(a_col)) = 2.0 * col_a - col_b;
    phi.values.col(static_cast<Eigen::Index>(b_col)) = col_a + 3.0 * col_b;

    const GofResult mixed =
        f_test({"m0", {"expl:x1"}}, {"m1", {"expl:x1", "attr:a=x", "attr:b=1"}}, phi,
               wrap(z), w);
    CHECK(mixed.f_stat == doctest::Approx(base.f_stat).epsilon(1e-9));
    CHECK(mixed.p_value == doctest::Approx(base.p_value).epsilon(1e-9));
}

TEST_CASE("adding a column outside the span never increases RSS") {
    const Fixture f = make_fixture(43);
    Rng rng = Rng::from_seed(47);
    for (int trial = 0; trial < 40; ++trial) {
        std::vector<double> z(f.schema.group_count());
        for (auto& v : z) v = rng.next_normal();
        const WlsFit small = fit_weighted_ols(f.phi, {"attr:a=x"}, wrap(z), f.weights);
        const WlsFit large =
            fit_weighted_ols(f.phi, {"attr:a=x", "expl:x1"}, wrap(z), f.weights);
        CHECK(large.rss <= small.rss + 1e-9);
    }
}

TEST_CASE("groups with undefined estimates are dropped from both models") {
    const Fixture f = make_fixture(53);
    Rng rng = Rng::from_seed(59);
    std::vector<std::optional<double>> z(f.schema.group_count());
    for (std::size_t g = 0; g < z.size() - 2; ++g) z[g] = rng.next_normal();
    const GofResult result = f_test({"m0", {}}, {"m1", {"attr:a=*"}}, f.phi, z, f.weights);
    CHECK(result.n_groups == f.schema.group_count() - 2);
}

TEST_CASE("p-values are uniform under the null") {
    // Data generated from M0 (intercept + explanatory) with noise matched
    // to the weights; the F statistic is exact, so p is uniform on [0,1].
    const Fixture f = make_fixture(61);
    Rng rng = Rng::from_seed(67);
    const int draws = 2000;
    std::vector<double> pvalues;
    pvalues.reserve(draws);
    std::vector<double> w(f.schema.group_count());
    for (std::size_t g = 0; g < w.size(); ++g) w[g] = 0.5 + 3.0 * rng.next_double();

    const auto x1 = *f.phi.column_index("expl:x1");
    for (int draw = 0; draw < draws; ++draw) {
        std::vector<std::optional<double>> z(f.schema.group_count());
        for (std::size_t g = 0; g < z.size(); ++g) {
            const double mean =
                0.4 + 0.3 * f.phi.values(static_cast<Eigen::Index>(g),
                                         static_cast<Eigen::Index>(x1));
            z[g] = mean + rng.next_normal() / std::sqrt(w[g]);
        }
        pvalues.push_back(
            f_test({"m0", {"expl:x1"}}, {"m1", {"expl:x1", "attr:a=*", "attr:b=*"}}, f.phi,
                   z, w)
                .p_value);
    }
    std::sort(pvalues.begin(), pvalues.end());
    double ks = 0.0;
    for (std::size_t i = 0; i < pvalues.size(); ++i) {
        const double empirical_hi = static_cast<double>(i + 1) / draws;
        const double empirical_lo = static_cast<double>(i) / draws;
        ks = std::max(ks, std::fabs(empirical_hi - pvalues[i]));
        ks = std::max(ks, std::fabs(pvalues[i] - empirical_lo));
    }
    CHECK(ks < 0.05);
}

TEST_CASE("gof ladder runs comparisons in order") {
    const Fixture f = make_fixture(71);
    Rng rng = Rng::from_seed(73);
    std::vector<double> z(f.schema.group_count());
    for (auto& v : z) v = rng.next_normal();
    const GofModelSpec empty{"empty", {}};
    const GofModelSpec expl{"expl", {"expl:x1"}};
    const GofModelSpec both{"expl+sens", {"expl:x1", "attr:a=*", "attr:b=*"}};
    const auto results = gof_ladder({{empty, expl}, {expl, both}}, f.phi, wrap(z), f.weights);
    REQUIRE(results.size() == 2);
    CHECK(results[0].comparison == "expl vs empty");
    CHECK(results[1].comparison == "expl+sens vs expl");
    for (const auto& r : results) {
        CHECK(r.p_value >= 0.0);
        CHECK(r.p_value <= 1.0);
        CHECK(r.f_stat >= 0.0);
    }
}
