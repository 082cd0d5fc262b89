#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace kgcal {

/// f(x) with gradient written into grad (same length as x).
using Objective = std::function<double(std::span<const double> x, std::span<double> grad)>;

struct LbfgsOptions {
    std::size_t max_iterations = 2000;
    double gradient_tolerance = 1e-7;  // on the Euclidean gradient norm
    std::size_t history = 10;
    std::size_t max_line_search_steps = 40;
    double c1 = 1e-4;  // sufficient decrease
    double c2 = 0.9;   // curvature
};

enum class LbfgsStatus { Converged, MaxIterations, LineSearchFailed };

struct LbfgsResult {
    std::vector<double> x;
    double value = 0.0;
    double initial_value = 0.0;
    double gradient_norm = 0.0;
    std::size_t iterations = 0;
    LbfgsStatus status = LbfgsStatus::MaxIterations;
};

std::string to_string(LbfgsStatus status);

/// Limited-memory BFGS with a strong-Wolfe line search. Never returns an
/// iterate worse than the starting point.
LbfgsResult minimize_lbfgs(const Objective& f, std::vector<double> x0, const LbfgsOptions& options = {});

}  // namespace kgcal
