#include "disagg/numerics.hpp"

#include "disagg/error.hpp"

#include <algorithm>
#include <limits>

namespace disagg {

namespace {

// Lanczos approximation, g = 7, 9 coefficients.
constexpr double kLanczos[9] = {
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
};

constexpr double kPi = 3.14159265358979323846;

} // namespace

double log_gamma(double x) {
    if (x < 0.5) {
        // reflection formula
        return std::log(kPi / std::sin(kPi * x)) - log_gamma(1.0 - x);
    }
    x -= 1.0;
    double a = kLanczos[0];
    for (int i = 1; i < 9; ++i) a += kLanczos[i] / (x + i);
    const double t = x + 7.5;
    return 0.5 * std::log(2.0 * kPi) + (x + 0.5) * std::log(t) - t + std::log(a);
}

namespace {

// Continued fraction for the incomplete beta (Lentz's algorithm).
double beta_cont_frac(double a, double b, double x) {
    constexpr int kMaxIter = 500;
    constexpr double kEps = 3e-16;
    constexpr double kTiny = 1e-300;

    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;

    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;

    for (int m = 1; m <= kMaxIter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;

        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) return h;
    }
    fail(ErrorKind::numeric, "incomplete_beta: continued fraction did not converge");
}

} // namespace

double incomplete_beta(double a, double b, double x) {
    if (!(a > 0.0) || !(b > 0.0)) {
        fail(ErrorKind::param, "incomplete_beta: shape parameters must be positive");
    }
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;

    const double log_front = log_gamma(a + b) - log_gamma(a) - log_gamma(b) +
                             a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(log_front);
    // Symmetry switch keeps the continued fraction in its fast region.
    if (x < (a + 1.0) / (a + b + 2.0)) {
        return front * beta_cont_frac(a, b, x) / a;
    }
    return 1.0 - front * beta_cont_frac(b, a, 1.0 - x) / b;
}

double normal_cdf(double x) {
    return 0.5 * std::erfc(-x / 1.4142135623730950488016887242097);
}

namespace {

double normal_pdf(double x) {
    return std::exp(-0.5 * x * x) / std::sqrt(2.0 * kPi);
}

// Acklam's rational approximation for the inverse normal CDF,
// relative error ~1.15e-9 before refinement.
double acklam_initial(double p) {
    static const double a[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                -2.759285104469687e+02, 1.383577518672690e+02,
                                -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                -1.556989798598866e+02, 6.680131188771972e+01,
                                -1.328068155288572e+01};
    static const double c[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                -2.400758277161838e+00, -2.549732539343734e+00,
                                4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                                2.445134137142996e+00, 3.754408661907416e+00};
    const double plow = 0.02425;

    if (p < plow) {
        const double q = std::sqrt(-2.0 * std::log(p));
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    if (p > 1.0 - plow) {
        const double q = std::sqrt(-2.0 * std::log(1.0 - p));
        return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    const double q = p - 0.5;
    const double r = q * q;
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

} // namespace

double normal_quantile(double p) {
    if (!(p > 0.0) || !(p < 1.0)) {
        fail(ErrorKind::param, "normal_quantile: p must lie in (0, 1)");
    }
    double x = acklam_initial(p);
    // Two Halley refinements against the erfc-based CDF push the error
    // to a few ulps.
    for (int i = 0; i < 2; ++i) {
        const double e = normal_cdf(x) - p;
        const double u = e / normal_pdf(x);
        x -= u / (1.0 + 0.5 * x * u);
    }
    return x;
}

double f_cdf(double x, double d1, double d2) {
    if (!(d1 >= 1.0) || !(d2 >= 1.0)) {
        fail(ErrorKind::param, "f_cdf: degrees of freedom must be >= 1");
    }
    if (std::isnan(x)) fail(ErrorKind::param, "f_cdf: x is NaN");
    if (x <= 0.0) return 0.0;
    if (std::isinf(x)) return 1.0;
    const double z = d1 * x / (d1 * x + d2);
    return incomplete_beta(0.5 * d1, 0.5 * d2, z);
}

WlsResult weighted_least_squares(const Eigen::MatrixXd& design,
                                 const Eigen::VectorXd& response,
                                 const Eigen::VectorXd& weights) {
    if (design.rows() != response.size() || design.rows() != weights.size()) {
        fail(ErrorKind::param, "weighted_least_squares: dimension mismatch");
    }
    if (!design.allFinite() || !response.allFinite() || !weights.allFinite()) {
        fail(ErrorKind::numeric, "weighted_least_squares: non-finite input");
    }
    if ((weights.array() < 0.0).any()) {
        fail(ErrorKind::param, "weighted_least_squares: negative weight");
    }

    const Eigen::VectorXd root_w = weights.array().sqrt();
    const Eigen::MatrixXd scaled = root_w.asDiagonal() * design;
    const Eigen::VectorXd target = root_w.asDiagonal() * response;

    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(scaled.rows(),
                                                                scaled.cols());
    cod.setThreshold(1e-10);
    cod.compute(scaled);

    WlsResult out;
    out.solution = cod.solve(target);
    out.rank = cod.rank();
    out.rss = (scaled * out.solution - target).squaredNorm();
    return out;
}

} // namespace disagg
