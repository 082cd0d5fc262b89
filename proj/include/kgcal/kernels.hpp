#pragma once

// Data-parallel hot loops. Every OpenMP kernel has a serial reference twin
// that the tests compare against and the benchmark times.

#include <cstdint>
#include <span>

#include "kgcal/graph.hpp"
#include "kgcal/matrix.hpp"
#include "kgcal/model.hpp"

namespace kgcal {

/// Thread count: `requested` if positive, else $KGCAL_THREADS, else 1.
int resolve_threads(int requested);

namespace kernels {

/// Row q holds score_all_relations(model, queries[q]).
Matrix score_queries_serial(const KgeModel& model, std::span<const PairQuery> queries);
Matrix score_queries(const KgeModel& model, std::span<const PairQuery> queries, int threads);

/// Parameter layout for softmax(A z + b): diagonal -> [a_0..a_{k-1}, b_0..b_{k-1}],
/// full -> [A row-major (k*k), b (k)].
std::size_t affine_param_count(std::size_t k, bool diagonal);

/// Mean cross-entropy of softmax(A z + b) against labels plus
/// 0.5 * l2 * (||A - I||^2 + ||b||^2). Writes the gradient into `grad` if non-empty.
double affine_cross_entropy_serial(const Matrix& scores, std::span<const std::int32_t> labels,
                                   std::span<const double> params, bool diagonal, double l2,
                                   std::span<double> grad);
/// Chunked OpenMP reduction; partial sums are merged in chunk order, so the
/// result is deterministic for a fixed thread count and equals the serial
/// result bit-for-bit when threads == 1.
double affine_cross_entropy(const Matrix& scores, std::span<const std::int32_t> labels,
                            std::span<const double> params, bool diagonal, double l2, std::span<double> grad,
                            int threads);

}  // namespace kernels
}  // namespace kgcal
