#pragma once

#include <vector>

#include "protokd/error.hpp"

namespace protokd {
namespace stats {

// I_x(a, b), continued-fraction evaluation.
double regularized_incomplete_beta(double a, double b, double x);

// two-sided tail probability of Student's t with df degrees of freedom
double student_t_two_sided_p(double t, int df);

struct TTestResult {
    double t = 0.0;
    double p = 1.0;
    bool infinite = false;  // zero variance with nonzero mean difference
};

// Paired two-sided t-test on per-seed scores. Zero-variance differences with
// a nonzero mean give an infinite t (p = 0); identical samples are an error.
TTestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace stats
}  // namespace protokd
