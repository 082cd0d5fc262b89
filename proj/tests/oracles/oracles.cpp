#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <numeric>
#include <utility>

namespace kgcal::oracle {

namespace {

using Ext = long double;

template <class T>
T transe_t(std::span<const double> h, std::span<const double> r, std::span<const double> t) {
    T s = 0;
    for (std::size_t i = 0; i < h.size(); ++i) {
        const T d = T(h[i]) + T(r[i]) - T(t[i]);
        s += d * d;
    }
    return -std::sqrt(s);
}

template <class T>
T transh_t(std::span<const double> h, std::span<const double> r, std::span<const double> w,
           std::span<const double> t) {
    T wh = 0, wt = 0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        wh += T(w[i]) * T(h[i]);
        wt += T(w[i]) * T(t[i]);
    }
    T s = 0;
    for (std::size_t i = 0; i < h.size(); ++i) {
        const T d = (T(h[i]) - wh * T(w[i])) + T(r[i]) - (T(t[i]) - wt * T(w[i]));
        s += d * d;
    }
    return -std::sqrt(s);
}

template <class T>
T distmult_t(std::span<const double> h, std::span<const double> r, std::span<const double> t) {
    T s = 0;
    for (std::size_t i = 0; i < h.size(); ++i) s += T(h[i]) * T(r[i]) * T(t[i]);
    return s;
}

template <class T>
T complex_t(std::span<const double> h_re, std::span<const double> h_im, std::span<const double> r_re,
            std::span<const double> r_im, std::span<const double> t_re, std::span<const double> t_im) {
    std::complex<T> s = 0;
    for (std::size_t i = 0; i < h_re.size(); ++i) {
        const std::complex<T> h(h_re[i], h_im[i]), r(r_re[i], r_im[i]), t(t_re[i], t_im[i]);
        s += h * r * std::conj(t);
    }
    return s.real();
}

template <class T>
T score_t(const KgeModel& m, std::int32_t h, std::int32_t r, std::int32_t t) {
    const auto hr = m.entity.row(static_cast<std::size_t>(h));
    const auto rr = m.relation.row(static_cast<std::size_t>(r));
    const auto tr = m.entity.row(static_cast<std::size_t>(t));
    const std::size_t d = m.dim;
    switch (m.kind) {
        case ModelKind::TransE:
            return transe_t<T>(hr.first(d), rr.first(d), tr.first(d));
        case ModelKind::TransH:
            return transh_t<T>(hr.first(d), rr.first(d), m.normals.row(static_cast<std::size_t>(r)).first(d),
                               tr.first(d));
        case ModelKind::DistMult:
            return distmult_t<T>(hr.first(d), rr.first(d), tr.first(d));
        case ModelKind::ComplEx:
            return complex_t<T>(hr.first(d), hr.subspan(d, d), rr.first(d), rr.subspan(d, d), tr.first(d),
                                tr.subspan(d, d));
    }
    return 0;
}

template <class T>
T loss_t(const KgeModel& model, LossKind kind, T margin, const Triple& positive, const std::vector<Triple>& negatives) {
    const T pos = score_t<T>(model, positive.head, positive.relation, positive.tail);
    T total = kind == LossKind::BinaryCrossEntropy ? std::log1p(std::exp(-pos)) : T(0);
    for (const auto& n : negatives) {
        const T neg = score_t<T>(model, n.head, n.relation, n.tail);
        if (kind == LossKind::MarginRanking)
            total += std::max(T(0), margin - pos + neg);
        else
            total += std::log1p(std::exp(neg));
    }
    return total;
}

}  // namespace

double transe(const Vec& h, const Vec& r, const Vec& t) { return transe_t<double>(h, r, t); }

double transh(const Vec& h, const Vec& r, const Vec& w, const Vec& t) { return transh_t<double>(h, r, w, t); }

double distmult(const Vec& h, const Vec& r, const Vec& t) { return distmult_t<double>(h, r, t); }

double complex(const Vec& h_re, const Vec& h_im, const Vec& r_re, const Vec& r_im, const Vec& t_re,
               const Vec& t_im) {
    return complex_t<double>(h_re, h_im, r_re, r_im, t_re, t_im);
}

double score(const KgeModel& m, std::int32_t h, std::int32_t r, std::int32_t t) { return score_t<double>(m, h, r, t); }

Vec softmax(const Vec& z) {
    const long double shift = *std::max_element(z.begin(), z.end());
    long double total = 0.0L;
    std::vector<long double> e(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
        e[i] = std::exp(static_cast<long double>(z[i]) - shift);
        total += e[i];
    }
    Vec out(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) out[i] = static_cast<double>(e[i] / total);
    return out;
}

double ece(std::span<const double> confidence, std::span<const char> correct, std::size_t bins) {
    const double M = static_cast<double>(bins);
    double total = 0.0;
    for (std::size_t m = 0; m < bins; ++m) {
        const double lo = static_cast<double>(m) / M;
        const double hi = static_cast<double>(m + 1) / M;
        double conf = 0.0, acc = 0.0;
        std::size_t count = 0;
        for (std::size_t i = 0; i < confidence.size(); ++i) {
            const double c = confidence[i];
            const bool in = (c > lo && c <= hi) || (m == 0 && c <= 0.0) || (m + 1 == bins && c > 1.0);
            if (!in) continue;
            ++count;
            conf += c;
            acc += correct[i] ? 1.0 : 0.0;
        }
        if (count == 0) continue;
        total += static_cast<double>(count) / static_cast<double>(confidence.size()) *
                 std::abs(acc / static_cast<double>(count) - conf / static_cast<double>(count));
    }
    return total;
}

std::size_t filtered_rank(const KgeModel& model, const KnowledgeGraph& graph, std::int32_t h, std::int32_t t,
                          std::int32_t gold) {
    std::vector<std::pair<double, int>> pool;  // (score, 1 for gold) so gold sorts after ties
    for (std::int32_t r = 0; r < static_cast<std::int32_t>(model.num_relations()); ++r) {
        if (r != gold && graph.is_known(Triple{h, r, t})) continue;
        pool.push_back({score(model, h, r, t), r == gold ? 1 : 0});
    }
    std::sort(pool.begin(), pool.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (std::size_t i = 0; i < pool.size(); ++i)
        if (pool[i].second == 1) return i + 1;
    return 0;
}

Vec isotonic_fit(const Vec& x, const Vec& y) {
    std::map<double, std::pair<double, double>> groups;  // x -> (sum y, count)
    for (std::size_t i = 0; i < x.size(); ++i) {
        groups[x[i]].first += y[i];
        groups[x[i]].second += 1.0;
    }
    std::vector<double> xs, sums, counts;
    for (const auto& [k, v] : groups) {
        xs.push_back(k);
        sums.push_back(v.first);
        counts.push_back(v.second);
    }
    const std::size_t n = xs.size();
    std::vector<double> fit(n);
    for (std::size_t i = 0; i < n; ++i) {
        double best = -1e300;
        for (std::size_t j = 0; j <= i; ++j) {
            double worst = 1e300;
            for (std::size_t k = i; k < n; ++k) {
                double s = 0.0, c = 0.0;
                for (std::size_t q = j; q <= k; ++q) {
                    s += sums[q];
                    c += counts[q];
                }
                worst = std::min(worst, s / c);
            }
            best = std::max(best, worst);
        }
        fit[i] = best;
    }
    Vec out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i)
        out[i] = fit[static_cast<std::size_t>(std::lower_bound(xs.begin(), xs.end(), x[i]) - xs.begin())];
    return out;
}

double loss(const KgeModel& model, LossKind kind, double margin, const Triple& positive,
            const std::vector<Triple>& negatives) {
    return loss_t<double>(model, kind, margin, positive, negatives);
}

GradientCheck check_gradient(const KgeModel& model, LossKind kind, double margin, const Triple& positive,
                             const std::vector<Triple>& negatives, double step) {
    GradientBuffer grad(model);
    example_loss(model, kind, margin, positive, negatives, &grad, 1.0);

    std::vector<std::int32_t> entities{positive.head, positive.tail}, relations{positive.relation};
    for (const auto& n : negatives) {
        entities.push_back(n.head);
        entities.push_back(n.tail);
        relations.push_back(n.relation);
    }
    std::sort(entities.begin(), entities.end());
    entities.erase(std::unique(entities.begin(), entities.end()), entities.end());
    std::sort(relations.begin(), relations.end());
    relations.erase(std::unique(relations.begin(), relations.end()), relations.end());

    GradientCheck out;
    KgeModel probe = model;
    auto check = [&](Matrix KgeModel::*table, const Matrix& analytic, std::size_t row) {
        for (std::size_t j = 0; j < (probe.*table).cols(); ++j) {
            double& x = (probe.*table)(row, j);
            const double saved = x;
            // extended precision keeps the difference quotient above rounding noise
            x = saved + step;
            const Ext xu = x;
            const Ext up = loss_t<Ext>(probe, kind, margin, positive, negatives);
            x = saved - step;
            const Ext xd = x;
            const Ext down = loss_t<Ext>(probe, kind, margin, positive, negatives);
            x = saved;
            const double numeric = static_cast<double>((up - down) / (xu - xd));
            const double a = analytic(row, j);
            const double rel = std::abs(a - numeric) / std::max({1e-6, std::abs(a), std::abs(numeric)});
            if (rel > out.max_relative_error) {
                out.max_relative_error = rel;
                out.worst_analytic = a;
                out.worst_numeric = numeric;
            }
            ++out.probes;
        }
    };
    for (auto e : entities) check(&KgeModel::entity, grad.entity_grad(), static_cast<std::size_t>(e));
    for (auto r : relations) {
        check(&KgeModel::relation, grad.relation_grad(), static_cast<std::size_t>(r));
        if (model.kind == ModelKind::TransH) check(&KgeModel::normals, grad.normal_grad(), static_cast<std::size_t>(r));
    }
    return out;
}

}  // namespace kgcal::oracle
