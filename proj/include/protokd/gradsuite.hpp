#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace protokd {
namespace gradsuite {

struct CheckResult {
    std::string name;
    bool pass = false;
    double max_rel_err = 0.0;
};

// Finite-difference checks of every exported loss graph and the full model
// forward pass on random instances (grids up to 6x6, K=3, D=8).
std::vector<CheckResult> run(int instances_per_loss, std::uint64_t seed, double step = 1e-5,
                             double tol = 1e-4);

bool all_pass(const std::vector<CheckResult>& results);

}  // namespace gradsuite
}  // namespace protokd
