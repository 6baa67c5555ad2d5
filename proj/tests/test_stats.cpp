#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

#include "protokd/rng.hpp"
#include "protokd/stats.hpp"

using namespace protokd;

namespace {

// adaptive Simpson integration of the t density, used as an independent
// reference for the tail probability
double t_density(double x, int df) {
    double v = df;
    double c = std::lgamma((v + 1) / 2) - std::lgamma(v / 2) - 0.5 * std::log(v * M_PI);
    return std::exp(c - (v + 1) / 2 * std::log1p(x * x / v));
}

double simpson(const std::function<double(double)>& f, double a, double b) {
    double m = (a + b) / 2;
    return (b - a) / 6 * (f(a) + 4 * f(m) + f(b));
}

double adaptive(const std::function<double(double)>& f, double a, double b, double whole,
                double tol, int depth) {
    double m = (a + b) / 2;
    double left = simpson(f, a, m), right = simpson(f, m, b);
    if (depth <= 0 || std::abs(left + right - whole) < 15 * tol)
        return left + right + (left + right - whole) / 15;
    return adaptive(f, a, m, left, tol / 2, depth - 1) +
           adaptive(f, m, b, right, tol / 2, depth - 1);
}

double two_sided_p_by_integration(double t, int df) {
    double at = std::abs(t);
    auto f = [df](double x) { return t_density(x, df); };
    double body = adaptive(f, -at, at, simpson(f, -at, at), 1e-12, 40);
    return 1.0 - body;
}

}  // namespace

TEST_CASE("incomplete beta basics") {
    CHECK(stats::regularized_incomplete_beta(2.0, 3.0, 0.0) == 0.0);
    CHECK(stats::regularized_incomplete_beta(2.0, 3.0, 1.0) == 1.0);
    // I_x(1,1) = x
    for (double x : {0.1, 0.35, 0.5, 0.9})
        CHECK(stats::regularized_incomplete_beta(1.0, 1.0, x) == doctest::Approx(x).epsilon(1e-12));
    // I_x(a,b) = 1 - I_{1-x}(b,a)
    CHECK(stats::regularized_incomplete_beta(2.5, 4.0, 0.3) ==
          doctest::Approx(1.0 - stats::regularized_incomplete_beta(4.0, 2.5, 0.7)).epsilon(1e-12));
    CHECK_THROWS_AS(stats::regularized_incomplete_beta(2.0, 3.0, -0.1), DegenerateInputError);
    CHECK_THROWS_AS(stats::regularized_incomplete_beta(0.0, 3.0, 0.5), DegenerateInputError);
}

TEST_CASE("two-sided t tail matches numerical integration of the density") {
    for (int df : {1, 2, 4, 9, 19, 60}) {
        for (double t : {0.0, 0.3, 1.0, 2.0, 3.5, 6.0}) {
            double want = two_sided_p_by_integration(t, df);
            double got = stats::student_t_two_sided_p(t, df);
            CHECK_MESSAGE(std::abs(got - want) < 1e-6, "df=", df, " t=", t, " got=", got,
                          " want=", want);
            CHECK(stats::student_t_two_sided_p(-t, df) == doctest::Approx(got).epsilon(1e-14));
        }
    }
}

TEST_CASE("two-sided t tail closed forms") {
    // df=1 is Cauchy: p = 1 - (2/pi) atan(t)
    for (double t : {0.5, 1.0, 4.0})
        CHECK(stats::student_t_two_sided_p(t, 1) ==
              doctest::Approx(1.0 - 2.0 / M_PI * std::atan(t)).epsilon(1e-10));
    CHECK(stats::student_t_two_sided_p(0.0, 5) == doctest::Approx(1.0));
}

TEST_CASE("paired t-test on a hand-checked sample") {
    // differences 1..5: mean 3, sd sqrt(2.5), t = 3 / (sqrt(2.5)/sqrt(5)) = sqrt(18)
    std::vector<double> a{1, 2, 3, 4, 5};
    std::vector<double> b{0, 0, 0, 0, 0};
    stats::TTestResult r = stats::paired_t_test(a, b);
    CHECK_FALSE(r.infinite);
    CHECK(r.t == doctest::Approx(std::sqrt(18.0)).epsilon(1e-12));
    CHECK(r.p == doctest::Approx(0.013238).epsilon(1e-3));
    CHECK(r.p == doctest::Approx(two_sided_p_by_integration(r.t, 4)).epsilon(1e-6));

    // swapping the samples flips the sign but not the p-value
    stats::TTestResult s = stats::paired_t_test(b, a);
    CHECK(s.t == doctest::Approx(-r.t));
    CHECK(s.p == doctest::Approx(r.p).epsilon(1e-14));
}

TEST_CASE("paired t-test degenerate cases") {
    std::vector<double> a{1, 1, 1, 1};
    CHECK_THROWS_AS(stats::paired_t_test(a, a), DegenerateInputError);

    std::vector<double> b{0, 0, 0, 0};
    stats::TTestResult r = stats::paired_t_test(a, b);
    CHECK(r.infinite);
    CHECK(r.p == 0.0);
    CHECK(r.t > 0);

    CHECK_THROWS_AS(stats::paired_t_test({1.0}, {0.0}), DegenerateInputError);
    CHECK_THROWS_AS(stats::paired_t_test({1, 2}, {1, 2, 3}), DegenerateInputError);
}

TEST_CASE("p-values are calibrated under the null") {
    // under equal means the p-value should not be systematically tiny
    Rng rng(99);
    int small = 0;
    const int reps = 200;
    for (int rep = 0; rep < reps; ++rep) {
        std::vector<double> a(8), b(8);
        for (int i = 0; i < 8; ++i) {
            a[static_cast<size_t>(i)] = rng.normal();
            b[static_cast<size_t>(i)] = rng.normal();
        }
        if (stats::paired_t_test(a, b).p < 0.05) ++small;
    }
    CHECK(small < reps / 4);  // ~5% expected, generous bound
}
