#pragma once

#include <string>
#include <vector>

namespace emoflow {

struct GradCheckCase {
    std::string name;
    double max_rel_err = 0.0;
    double tolerance = 1e-4;
    bool pass = false;
};

// Central-difference verification (step 1e-5) of every differentiable loss in
// the project on three fixed seeds each: orthogonality (both modes),
// contrastive, cross-attention, flow-matching, and the combined objective
// through the full pipeline. Shared by the CLI grad-check command, the unit
// tests and the acceptance suite.
std::vector<GradCheckCase> run_grad_check_suite();

} // namespace emoflow
