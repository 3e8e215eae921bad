#include "rlcd/stats.hpp"

#include <cmath>
#include <stdexcept>

namespace rlcd {

namespace {

// Series expansion of P(a,x), valid for x < a+1.
double gamma_p_series(double a, double x) {
    double ap = a;
    double sum = 1.0 / a;
    double del = sum;
    for (int n = 0; n < 500; ++n) {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if (std::fabs(del) < std::fabs(sum) * 1e-15) break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Continued fraction for Q(a,x) (modified Lentz), valid for x >= a+1.
double gamma_q_cf(double a, double x) {
    const double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i < 500; ++i) {
        double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < 1e-15) break;
    }
    return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace

double gamma_p(double a, double x) {
    if (x < 0.0 || a <= 0.0) throw std::invalid_argument("gamma_p domain");
    if (x == 0.0) return 0.0;
    if (x < a + 1.0) return gamma_p_series(a, x);
    return 1.0 - gamma_q_cf(a, x);
}

double chi2_cdf(double x, double dof) {
    if (x <= 0.0) return 0.0;
    return gamma_p(dof / 2.0, x / 2.0);
}

double chi2_quantile(double p, double dof) {
    if (p <= 0.0) return 0.0;
    if (p >= 1.0) throw std::invalid_argument("chi2_quantile: p must be in (0,1)");
    // Wilson-Hilferty start, then bisection + Newton polish
    double z;  // normal quantile of p, Acklam-style rational approximation
    {
        static const double a1 = -3.969683028665376e+01, a2 = 2.209460984245205e+02,
                            a3 = -2.759285104469687e+02, a4 = 1.383577518672690e+02,
                            a5 = -3.066479806614716e+01, a6 = 2.506628277459239e+00;
        static const double b1 = -5.447609879822406e+01, b2 = 1.615858368580409e+02,
                            b3 = -1.556989798598866e+02, b4 = 6.680131188771972e+01,
                            b5 = -1.328068155288572e+01;
        static const double c1 = -7.784894002430293e-03, c2 = -3.223964580411365e-01,
                            c3 = -2.400758277161838e+00, c4 = -2.549732539343734e+00,
                            c5 = 4.374664141464968e+00, c6 = 2.938163982698783e+00;
        static const double d1 = 7.784695709041462e-03, d2 = 3.224671290700398e-01,
                            d3 = 2.445134137142996e+00, d4 = 3.754408661907416e+00;
        const double plow = 0.02425, phigh = 1 - plow;
        if (p < plow) {
            double q = std::sqrt(-2 * std::log(p));
            z = (((((c1 * q + c2) * q + c3) * q + c4) * q + c5) * q + c6) /
                ((((d1 * q + d2) * q + d3) * q + d4) * q + 1);
        } else if (p <= phigh) {
            double q = p - 0.5, r = q * q;
            z = (((((a1 * r + a2) * r + a3) * r + a4) * r + a5) * r + a6) * q /
                (((((b1 * r + b2) * r + b3) * r + b4) * r + b5) * r + 1);
        } else {
            double q = std::sqrt(-2 * std::log(1 - p));
            z = -(((((c1 * q + c2) * q + c3) * q + c4) * q + c5) * q + c6) /
                ((((d1 * q + d2) * q + d3) * q + d4) * q + 1);
        }
    }
    double k = dof;
    double wh = k * std::pow(1.0 - 2.0 / (9.0 * k) + z * std::sqrt(2.0 / (9.0 * k)), 3.0);
    double lo = 0.0, hi = std::max(wh * 4.0 + 10.0, 10.0);
    while (chi2_cdf(hi, dof) < p) hi *= 2.0;
    double x = std::min(std::max(wh, 1e-8), hi);
    for (int it = 0; it < 200; ++it) {
        double f = chi2_cdf(x, dof) - p;
        if (f > 0)
            hi = x;
        else
            lo = x;
        // Newton step with density
        double logpdf = (dof / 2.0 - 1.0) * std::log(x) - x / 2.0 -
                        std::lgamma(dof / 2.0) - (dof / 2.0) * std::log(2.0);
        double pdf = std::exp(logpdf);
        double nx = pdf > 0 ? x - f / pdf : (lo + hi) / 2.0;
        if (!(nx > lo && nx < hi)) nx = (lo + hi) / 2.0;
        if (std::fabs(nx - x) < 1e-12 * std::max(1.0, x)) return nx;
        x = nx;
    }
    return x;
}

}  // namespace rlcd
