#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include "kgcal/matrix.hpp"
#include "kgcal/model.hpp"

namespace kgcal {

/// Validation queries scored over every relation, with the held-out relation
/// as the class label.
struct CalibrationSet {
    Matrix scores;                     // n x k
    std::vector<std::int32_t> labels;  // n, each in [0, k)

    std::size_t size() const noexcept { return labels.size(); }
    std::size_t num_classes() const noexcept { return scores.cols(); }
    /// Throws DataError on shape mismatch, out-of-range labels or non-finite scores.
    void validate() const;
};

struct Prediction {
    std::int32_t head = 0;
    std::int32_t tail = 0;
    std::vector<double> probs;
    std::int32_t predicted = 0;
    double confidence = 0.0;
};

struct IdentitySoftmax {
    std::size_t k = 0;
};

struct PlattOvA {
    std::vector<double> a;
    std::vector<double> b;
};

/// Right-continuous step function: g(x) = values[j] for the largest j with
/// breakpoints[j] <= x, and values[0] below the first breakpoint.
struct IsotonicStep {
    std::vector<double> breakpoints;
    std::vector<double> values;

    double operator()(double x) const;
};

struct IsotonicOvA {
    std::vector<IsotonicStep> classes;
};

struct VectorScaling {
    std::vector<double> a;
    std::vector<double> b;
};

struct MatrixScaling {
    Matrix A;
    std::vector<double> b;
};

enum class CalibrationMethod { Softmax, Platt, Isotonic, Vector, Matrix };

std::string_view to_string(CalibrationMethod method);
CalibrationMethod parse_calibration_method(std::string_view name);

class Calibrator {
public:
    using Variant = std::variant<IdentitySoftmax, PlattOvA, IsotonicOvA, VectorScaling, MatrixScaling>;

    Calibrator() = default;
    explicit Calibrator(Variant params);

    const Variant& params() const noexcept { return params_; }
    CalibrationMethod method() const noexcept;
    std::size_t num_classes() const noexcept;

    /// Calibrated probability vector for raw scores z. Throws DataError on a
    /// length mismatch.
    std::vector<double> probabilities(std::span<const double> z) const;

    /// Throws DataError on non-finite parameters or a malformed isotonic map.
    void validate() const;

private:
    Variant params_{IdentitySoftmax{}};
};

/// Lowest index among the maxima.
std::int32_t argmax(std::span<const double> v);

/// exp(z_i - max z) / sum_j exp(z_j - max z)
std::vector<double> softmax(std::span<const double> z);
Prediction softmax_confidence(const ScoreVector& z);

Prediction calibrate(const Calibrator& calibrator, const ScoreVector& z);

struct PlattFitOptions {
    std::size_t max_iterations = 10000;
    double gradient_tolerance = 1e-8;
    double hessian_jitter = 1e-12;
};

/// Per-class logistic fits of sigma(a z_i + b) by damped Newton. Classes without
/// positives get a = 0 and sigma(b) = 1 / (n + 2).
Calibrator fit_platt_ova(const CalibrationSet& data, const PlattFitOptions& options = {}, int threads = 1);

/// Per-class pool-adjacent-violators fit of the labels against sigma(z_i).
Calibrator fit_isotonic_ova(const CalibrationSet& data, int threads = 1);

/// Least-squares nondecreasing step fit of (x, y) pairs; equal x values share one block.
IsotonicStep fit_isotonic(std::span<const double> x, std::span<const double> y);

struct AffineFitOptions {
    std::size_t max_iterations = 2000;
    double gradient_tolerance = 1e-7;
    double l2 = 0.0;  // pulls (A, b) toward (I, 0)
    // Optional random perturbation of the (I, 0) start, for restart checks.
    double init_noise = 0.0;
    std::uint64_t init_seed = 0;
    int threads = 1;
};

struct AffineFitReport {
    double initial_loss = 0.0;
    double final_loss = 0.0;
    double gradient_norm = 0.0;
    std::size_t iterations = 0;
    bool converged = false;
};

/// softmax(A z + b) fit by L-BFGS on mean cross-entropy, A diagonal (vector
/// scaling) or full (matrix scaling). Throws NumericalError if the optimizer
/// ends above its starting loss.
Calibrator fit_affine_scaling(const CalibrationSet& data, bool diagonal_only, const AffineFitOptions& options = {},
                              AffineFitReport* report = nullptr);

/// Mean multiclass cross-entropy of the calibrated probabilities.
double mean_cross_entropy(const Calibrator& calibrator, const CalibrationSet& data);

Calibrator fit_calibrator(CalibrationMethod method, const CalibrationSet& data, const AffineFitOptions& affine = {});

void save_calibrator(const Calibrator& calibrator, const std::filesystem::path& path);
Calibrator load_calibrator(const std::filesystem::path& path);

}  // namespace kgcal
