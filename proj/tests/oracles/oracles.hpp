#pragma once

// Deliberately naive reference implementations used to check the library.
// They share no code with src/ beyond the data types.

#include <cstdint>
#include <span>
#include <vector>

#include "kgcal/graph.hpp"
#include "kgcal/model.hpp"
#include "kgcal/train.hpp"

namespace kgcal::oracle {

using Vec = std::vector<double>;

double transe(const Vec& h, const Vec& r, const Vec& t);
double transh(const Vec& h, const Vec& r, const Vec& w, const Vec& t);
double distmult(const Vec& h, const Vec& r, const Vec& t);
// Separate real and imaginary parts, evaluated with std::complex.
double complex(const Vec& h_re, const Vec& h_im, const Vec& r_re, const Vec& r_im, const Vec& t_re,
               const Vec& t_im);

// Dispatches on model.kind, copying rows out of the model.
double score(const KgeModel& model, std::int32_t h, std::int32_t r, std::int32_t t);

// Softmax in long double without any max shift when safe.
Vec softmax(const Vec& z);

// Binning by explicit interval membership (m/M, (m+1)/M], zero into the first bin.
double ece(std::span<const double> confidence, std::span<const char> correct, std::size_t bins);

// Sorts the unfiltered candidates and returns the gold's 1-based position,
// placing it after every competitor with an equal score.
std::size_t filtered_rank(const KgeModel& model, const KnowledgeGraph& graph, std::int32_t h, std::int32_t t,
                          std::int32_t gold);

// Least-squares isotonic fit by the max-min formula over the sorted distinct x
// values; returns the fitted value at each input point.
Vec isotonic_fit(const Vec& x, const Vec& y);

// Loss of one positive against its negatives, scored with score() above.
double loss(const KgeModel& model, LossKind kind, double margin, const Triple& positive,
            const std::vector<Triple>& negatives);

struct GradientCheck {
    double max_relative_error = 0.0;
    std::size_t probes = 0;
    // the pair behind max_relative_error
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
};

// Compares example_loss's analytic gradient with central differences of
// loss() over every parameter of the rows the example touches, with the
// differences taken in extended precision. Relative error is
// |a - n| / max(1e-6, |a|, |n|).
GradientCheck check_gradient(const KgeModel& model, LossKind kind, double margin, const Triple& positive,
                             const std::vector<Triple>& negatives, double step = 1e-5);

}  // namespace kgcal::oracle
