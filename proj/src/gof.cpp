#include "disagg/gof.hpp"

#include "disagg/error.hpp"
#include "disagg/numerics.hpp"
#include "disagg/structured_regression.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace disagg {

namespace {

std::vector<std::size_t> resolve_columns(const FeatureMatrix& phi,
                                         const std::vector<std::string>& patterns) {
    std::vector<std::size_t> out;
    std::set<std::size_t> seen;
    for (const auto& pattern : patterns) {
        const auto matched = phi.match_columns(pattern);
        if (matched.empty()) {
            fail(ErrorKind::config, "gof: no feature column matches '" + pattern + "'");
        }
        for (const std::size_t j : matched) {
            if (phi.columns[j].name.rfind("grp:", 0) == 0) {
                fail(ErrorKind::config,
                     "gof: group-identity indicators are not allowed in GOF models ('" +
                         phi.columns[j].name + "')");
            }
            if (seen.insert(j).second) out.push_back(j);
        }
    }
    return out;
}

struct LossRows {
    std::vector<std::size_t> groups;  // defined Z, positive weight
    Eigen::VectorXd z;
    Eigen::VectorXd w;
};

LossRows collect_rows(const FeatureMatrix& phi, const std::vector<std::optional<double>>& z,
                      const std::vector<double>& weights) {
    if (z.size() != static_cast<std::size_t>(phi.values.rows()) || z.size() != weights.size()) {
        fail(ErrorKind::param, "gof: inputs not aligned with the feature matrix");
    }
    LossRows rows;
    for (std::size_t g = 0; g < z.size(); ++g) {
        if (!z[g] || weights[g] <= 0.0) continue;
        rows.groups.push_back(g);
    }
    if (rows.groups.empty()) {
        fail(ErrorKind::estimation, "gof: no group with a defined estimate");
    }
    rows.z.resize(static_cast<Eigen::Index>(rows.groups.size()));
    rows.w.resize(static_cast<Eigen::Index>(rows.groups.size()));
    for (std::size_t i = 0; i < rows.groups.size(); ++i) {
        rows.z(static_cast<Eigen::Index>(i)) = *z[rows.groups[i]];
        rows.w(static_cast<Eigen::Index>(i)) = weights[rows.groups[i]];
    }
    return rows;
}

WlsFit fit_on_rows(const FeatureMatrix& phi, const std::vector<std::size_t>& columns,
                   const LossRows& rows) {
    const auto n = static_cast<Eigen::Index>(rows.groups.size());
    const auto p = static_cast<Eigen::Index>(columns.size());
    Eigen::MatrixXd design(n, p + 1);
    design.col(0).setOnes();
    for (Eigen::Index j = 0; j < p; ++j) {
        for (Eigen::Index i = 0; i < n; ++i) {
            design(i, j + 1) = phi.values(static_cast<Eigen::Index>(rows.groups[i]),
                                          static_cast<Eigen::Index>(columns[j]));
        }
    }
    const WlsResult solved = weighted_least_squares(design, rows.z, rows.w);
    WlsFit fit;
    fit.coefficients.assign(solved.solution.data(), solved.solution.data() + p + 1);
    fit.rss = solved.rss;
    fit.rank = static_cast<int>(solved.rank);
    return fit;
}

} // namespace

WlsFit fit_weighted_ols(const FeatureMatrix& phi, const std::vector<std::string>& columns,
                        const std::vector<std::optional<double>>& z,
                        const std::vector<double>& weights) {
    return fit_on_rows(phi, resolve_columns(phi, columns), collect_rows(phi, z, weights));
}

GofResult f_test(const GofModelSpec& m0, const GofModelSpec& m1, const FeatureMatrix& phi,
                 const std::vector<std::optional<double>>& z,
                 const std::vector<double>& weights) {
    const auto cols0 = resolve_columns(phi, m0.columns);
    const auto cols1 = resolve_columns(phi, m1.columns);

    const std::set<std::size_t> set1(cols1.begin(), cols1.end());
    for (const std::size_t j : cols0) {
        if (!set1.count(j)) {
            fail(ErrorKind::config, "gof: model '" + m0.name + "' is not nested in '" +
                                        m1.name + "' (column '" + phi.columns[j].name +
                                        "' missing)");
        }
    }

    const LossRows rows = collect_rows(phi, z, weights);
    const WlsFit fit0 = fit_on_rows(phi, cols0, rows);
    const WlsFit fit1 = fit_on_rows(phi, cols1, rows);

    GofResult result;
    result.comparison = m1.name + " vs " + m0.name;
    result.rss0 = fit0.rss;
    result.rss1 = fit1.rss;
    result.rank0 = fit0.rank;
    result.rank1 = fit1.rank;
    result.n_groups = rows.groups.size();

    if (result.rss1 > result.rss0 + 1e-9) {
        fail(ErrorKind::numeric, "gof: nested model has larger residual than its extension");
    }
    if (fit1.rank <= fit0.rank) {
        fail(ErrorKind::config, "gof: '" + m1.name + "' adds no rank over '" + m0.name + "'");
    }
    const auto residual_df = static_cast<double>(result.n_groups) - fit1.rank;
    if (residual_df < 1.0) {
        fail(ErrorKind::inference, "gof: no residual degrees of freedom for '" + m1.name + "'");
    }

    const double added_rank = fit1.rank - fit0.rank;
    const double improvement = std::max(0.0, result.rss0 - result.rss1);
    if (result.rss1 <= 0.0) {
        result.f_stat = improvement > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
    } else {
        result.f_stat = (improvement / added_rank) / (result.rss1 / residual_df);
    }
    result.p_value = 1.0 - f_cdf(result.f_stat, added_rank, residual_df);
    result.significant = result.p_value < kGofSignificance;
    return result;
}

std::vector<GofResult> gof_ladder(
    const std::vector<std::pair<GofModelSpec, GofModelSpec>>& comparisons,
    const FeatureMatrix& phi, const std::vector<std::optional<double>>& z,
    const std::vector<double>& weights) {
    std::vector<GofResult> out;
    out.reserve(comparisons.size());
    for (const auto& [m0, m1] : comparisons) {
        out.push_back(f_test(m0, m1, phi, z, weights));
    }
    return out;
}

std::vector<double> gof_weights(const EstimateSet& z, const VarianceModel& variances) {
    return lasso_weights(z, variances);
}

} // namespace disagg
