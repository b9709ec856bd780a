#pragma once

#include <functional>
#include <vector>

namespace crisiscast::optim {

struct NelderMeadOptions {
    double initial_step = 0.1;
    /// Stop once every vertex lies within this distance of the best vertex.
    double diameter_tol = 1e-8;
    int max_iterations = 2000;
};

struct NelderMeadResult {
    std::vector<double> x;
    double value = 0.0;
    int iterations = 0;
    int evaluations = 0;
    bool converged = false;
};

/// Derivative-free minimization. Non-finite objective values are treated as +inf.
NelderMeadResult nelder_mead(const std::function<double(const std::vector<double> &)> &f,
                             std::vector<double> x0, const NelderMeadOptions &opts = {});

}  // namespace crisiscast::optim
