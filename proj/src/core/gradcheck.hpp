#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace msce {

struct GradCheckResult {
    std::string name;
    double max_rel_err = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

// Central finite differences in 64-bit against the analytic backward pass:
// conv1d (dx/dw/db), batchnorm in train mode (dx/dgamma/dbeta), leaky_relu,
// tanh, the sinc kernel map (df1/ddf), and the full miniature model
// (fn=4, fl=5, N=2, T=32) in both variants. Relative error is
// |analytic-numeric| / max(|analytic|, |numeric|, 1e-4); tolerance 1e-4.
std::vector<GradCheckResult> run_gradcheck();

bool gradcheck_all_passed(const std::vector<GradCheckResult>& results);
nlohmann::json gradcheck_report(const std::vector<GradCheckResult>& results);

}  // namespace msce
