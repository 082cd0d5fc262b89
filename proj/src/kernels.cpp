#include "kgcal/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace kgcal {

int resolve_threads(int requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("KGCAL_THREADS")) {
        try {
            const int n = std::stoi(env);
            if (n > 0) return n;
        } catch (const std::exception&) {
        }
    }
    return 1;
}

namespace kernels {

namespace {

void score_row(const KgeModel& model, const PairQuery& q, std::span<double> out) {
    for (std::size_t r = 0; r < out.size(); ++r)
        out[r] = score_unchecked(model, q.head, static_cast<std::int32_t>(r), q.tail);
}

void check_queries(const KgeModel& model, std::span<const PairQuery> queries) {
    for (const auto& q : queries) (void)score_triple(model, q.head, 0, q.tail);
}

}  // namespace

Matrix score_queries_serial(const KgeModel& model, std::span<const PairQuery> queries) {
    check_queries(model, queries);
    Matrix out(queries.size(), model.num_relations());
    for (std::size_t q = 0; q < queries.size(); ++q) score_row(model, queries[q], out.row(q));
    return out;
}

Matrix score_queries(const KgeModel& model, std::span<const PairQuery> queries, int threads) {
    check_queries(model, queries);
    Matrix out(queries.size(), model.num_relations());
    const auto n = static_cast<std::ptrdiff_t>(queries.size());
#pragma omp parallel for schedule(static) num_threads(threads)
    for (std::ptrdiff_t q = 0; q < n; ++q)
        score_row(model, queries[static_cast<std::size_t>(q)], out.row(static_cast<std::size_t>(q)));
    return out;
}

std::size_t affine_param_count(std::size_t k, bool diagonal) { return diagonal ? 2 * k : k * k + k; }

namespace {

// Cross-entropy of rows [begin, end); accumulates (unscaled) gradient into grad.
double ce_range(const Matrix& scores, std::span<const std::int32_t> labels, std::span<const double> params,
                bool diagonal, std::size_t begin, std::size_t end, std::span<double> grad,
                std::vector<double>& logits) {
    const std::size_t k = scores.cols();
    const double* bias = params.data() + (diagonal ? k : k * k);
    double loss = 0.0;
    for (std::size_t n = begin; n < end; ++n) {
        const auto z = scores.row(n);
        for (std::size_t i = 0; i < k; ++i) {
            double v = bias[i];
            if (diagonal) {
                v += params[i] * z[i];
            } else {
                const double* arow = params.data() + i * k;
                for (std::size_t j = 0; j < k; ++j) v += arow[j] * z[j];
            }
            logits[i] = v;
        }
        const double mx = *std::max_element(logits.begin(), logits.begin() + static_cast<std::ptrdiff_t>(k));
        double sum = 0.0;
        for (std::size_t i = 0; i < k; ++i) sum += std::exp(logits[i] - mx);
        const double log_norm = mx + std::log(sum);
        const auto y = static_cast<std::size_t>(labels[n]);
        loss += log_norm - logits[y];
        if (grad.empty()) continue;
        double* gbias = grad.data() + (diagonal ? k : k * k);
        for (std::size_t i = 0; i < k; ++i) {
            const double g = std::exp(logits[i] - log_norm) - (i == y ? 1.0 : 0.0);
            gbias[i] += g;
            if (diagonal) {
                grad[i] += g * z[i];
            } else {
                double* grow = grad.data() + i * k;
                for (std::size_t j = 0; j < k; ++j) grow[j] += g * z[j];
            }
        }
    }
    return loss;
}

double finish(const Matrix& scores, std::span<const double> params, bool diagonal, double l2, double loss,
              std::span<double> grad) {
    const std::size_t k = scores.cols();
    const double inv_n = 1.0 / static_cast<double>(scores.rows());
    loss *= inv_n;
    for (double& g : grad) g *= inv_n;
    if (l2 > 0.0) {
        const std::size_t na = diagonal ? k : k * k;
        double reg = 0.0;
        for (std::size_t p = 0; p < params.size(); ++p) {
            const bool on_diag = p < na && (diagonal || p / k == p % k);
            const double dev = params[p] - (on_diag ? 1.0 : 0.0);
            reg += dev * dev;
            if (!grad.empty()) grad[p] += l2 * dev;
        }
        loss += 0.5 * l2 * reg;
    }
    return loss;
}

}  // namespace

double affine_cross_entropy_serial(const Matrix& scores, std::span<const std::int32_t> labels,
                                   std::span<const double> params, bool diagonal, double l2,
                                   std::span<double> grad) {
    std::fill(grad.begin(), grad.end(), 0.0);
    std::vector<double> logits(scores.cols());
    const double loss = ce_range(scores, labels, params, diagonal, 0, scores.rows(), grad, logits);
    return finish(scores, params, diagonal, l2, loss, grad);
}

double affine_cross_entropy(const Matrix& scores, std::span<const std::int32_t> labels,
                            std::span<const double> params, bool diagonal, double l2, std::span<double> grad,
                            int threads) {
    const std::size_t n = scores.rows();
    const std::size_t chunks = std::max<std::size_t>(1, std::min<std::size_t>(static_cast<std::size_t>(threads), n));
    std::vector<double> partial_loss(chunks, 0.0);
    std::vector<std::vector<double>> partial_grad(chunks, std::vector<double>(grad.size(), 0.0));
    const auto nchunks = static_cast<std::ptrdiff_t>(chunks);
#pragma omp parallel for schedule(static, 1) num_threads(threads)
    for (std::ptrdiff_t c = 0; c < nchunks; ++c) {
        const auto ci = static_cast<std::size_t>(c);
        const std::size_t begin = n * ci / chunks;
        const std::size_t end = n * (ci + 1) / chunks;
        std::vector<double> logits(scores.cols());
        partial_loss[ci] = ce_range(scores, labels, params, diagonal, begin, end, partial_grad[ci], logits);
    }
    double loss = 0.0;
    std::fill(grad.begin(), grad.end(), 0.0);
    for (std::size_t c = 0; c < chunks; ++c) {
        loss += partial_loss[c];
        for (std::size_t p = 0; p < grad.size(); ++p) grad[p] += partial_grad[c][p];
    }
    return finish(scores, params, diagonal, l2, loss, grad);
}

}  // namespace kernels
}  // namespace kgcal
