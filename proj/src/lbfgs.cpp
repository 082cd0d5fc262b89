#include "kgcal/lbfgs.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <deque>

namespace kgcal {

std::string to_string(LbfgsStatus status) {
    switch (status) {
        case LbfgsStatus::Converged: return "converged";
        case LbfgsStatus::MaxIterations: return "max-iterations";
        case LbfgsStatus::LineSearchFailed: return "line-search-failed";
    }
    return "?";
}

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

struct Point {
    double alpha = 0.0;
    double value = 0.0;
    double slope = 0.0;
    std::vector<double> x;
    std::vector<double> grad;
};

class LineSearch {
public:
    LineSearch(const Objective& f, const LbfgsOptions& opt, std::span<const double> x, std::span<const double> dir,
               double f0, double slope0)
        : f_(f), opt_(opt), x_(x), dir_(dir), f0_(f0), slope0_(slope0) {}

    // Returns true and fills `out` on a strong-Wolfe point; otherwise fills
    // `out` with the best sufficient-decrease point seen (if any) and returns false.
    bool run(double alpha0, Point& out) {
        Point prev{0.0, f0_, slope0_, {}, {}};
        double alpha = alpha0;
        for (std::size_t i = 0; i < opt_.max_line_search_steps; ++i) {
            Point cur = eval(alpha);
            if (!armijo(cur) || (i > 0 && cur.value >= prev.value)) return zoom(prev, cur, out);
            if (std::abs(cur.slope) <= -opt_.c2 * slope0_) {
                out = std::move(cur);
                return true;
            }
            if (cur.slope >= 0.0) return zoom(cur, prev, out);
            prev = std::move(cur);
            alpha *= 2.0;
        }
        return finish(out);
    }

private:
    Point eval(double alpha) {
        Point p;
        p.alpha = alpha;
        p.x.resize(x_.size());
        p.grad.resize(x_.size());
        for (std::size_t i = 0; i < x_.size(); ++i) p.x[i] = x_[i] + alpha * dir_[i];
        p.value = f_(p.x, p.grad);
        p.slope = std::isfinite(p.value) ? dot(p.grad, dir_) : 0.0;
        if (!std::isfinite(p.value)) p.value = std::numeric_limits<double>::infinity();
        if (armijo(p) && (!best_ || p.value < best_->value)) best_ = p;
        return p;
    }

    bool armijo(const Point& p) const { return p.value <= f0_ + opt_.c1 * p.alpha * slope0_; }

    bool zoom(Point lo, Point hi, Point& out) {
        for (std::size_t i = 0; i < opt_.max_line_search_steps; ++i) {
            double alpha = 0.5 * (lo.alpha + hi.alpha);
            // Safeguarded quadratic interpolation from lo's value/slope and hi's value.
            const double da = hi.alpha - lo.alpha;
            const double denom = 2.0 * (hi.value - lo.value - lo.slope * da);
            if (std::isfinite(hi.value) && denom > 0.0) {
                const double cand = lo.alpha - lo.slope * da * da / denom;
                const double a = std::min(lo.alpha, hi.alpha), b = std::max(lo.alpha, hi.alpha);
                if (cand > a + 0.1 * (b - a) && cand < b - 0.1 * (b - a)) alpha = cand;
            }
            Point cur = eval(alpha);
            if (!armijo(cur) || cur.value >= lo.value) {
                hi = std::move(cur);
            } else {
                if (std::abs(cur.slope) <= -opt_.c2 * slope0_) {
                    out = std::move(cur);
                    return true;
                }
                if (cur.slope * (hi.alpha - lo.alpha) >= 0.0) hi = lo;
                lo = std::move(cur);
            }
            if (std::abs(hi.alpha - lo.alpha) < 1e-16 * std::max(1.0, lo.alpha)) break;
        }
        return finish(out);
    }

    bool finish(Point& out) {
        if (best_) out = *best_;
        return false;
    }

    const Objective& f_;
    const LbfgsOptions& opt_;
    std::span<const double> x_;
    std::span<const double> dir_;
    double f0_;
    double slope0_;
    std::optional<Point> best_;
};

}  // namespace

LbfgsResult minimize_lbfgs(const Objective& f, std::vector<double> x0, const LbfgsOptions& options) {
    const std::size_t n = x0.size();
    LbfgsResult res;
    res.x = std::move(x0);
    std::vector<double> g(n);
    res.value = f(res.x, g);
    res.initial_value = res.value;
    res.gradient_norm = norm(g);

    std::deque<std::vector<double>> s_hist, y_hist;
    std::deque<double> rho_hist;
    std::vector<double> dir(n), alpha_buf;

    for (res.iterations = 0; res.iterations < options.max_iterations; ++res.iterations) {
        if (res.gradient_norm < options.gradient_tolerance) {
            res.status = LbfgsStatus::Converged;
            return res;
        }
        // Two-loop recursion: dir = -H g
        for (std::size_t i = 0; i < n; ++i) dir[i] = -g[i];
        const std::size_t m = s_hist.size();
        alpha_buf.assign(m, 0.0);
        for (std::size_t j = m; j-- > 0;) {
            alpha_buf[j] = rho_hist[j] * dot(s_hist[j], dir);
            for (std::size_t i = 0; i < n; ++i) dir[i] -= alpha_buf[j] * y_hist[j][i];
        }
        if (m > 0) {
            const double gamma = dot(s_hist.back(), y_hist.back()) / dot(y_hist.back(), y_hist.back());
            for (auto& v : dir) v *= gamma;
        }
        for (std::size_t j = 0; j < m; ++j) {
            const double beta = rho_hist[j] * dot(y_hist[j], dir);
            for (std::size_t i = 0; i < n; ++i) dir[i] += (alpha_buf[j] - beta) * s_hist[j][i];
        }
        double slope = dot(g, dir);
        if (!(slope < 0.0)) {
            // Lost descent: restart from steepest descent.
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            for (std::size_t i = 0; i < n; ++i) dir[i] = -g[i];
            slope = -res.gradient_norm * res.gradient_norm;
        }
        const double alpha0 = m == 0 ? std::min(1.0, 1.0 / res.gradient_norm) : 1.0;

        LineSearch ls(f, options, res.x, dir, res.value, slope);
        Point next;
        const bool wolfe = ls.run(alpha0, next);
        if (next.x.empty() || !(next.value < res.value)) {
            res.status = LbfgsStatus::LineSearchFailed;
            return res;
        }
        std::vector<double> s(n), y(n);
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = next.x[i] - res.x[i];
            y[i] = next.grad[i] - g[i];
        }
        const double sy = dot(s, y);
        if (wolfe && sy > 1e-12 * norm(s) * norm(y)) {
            if (s_hist.size() == options.history) {
                s_hist.pop_front();
                y_hist.pop_front();
                rho_hist.pop_front();
            }
            s_hist.push_back(std::move(s));
            y_hist.push_back(std::move(y));
            rho_hist.push_back(1.0 / sy);
        }
        res.x = std::move(next.x);
        g = std::move(next.grad);
        res.value = next.value;
        res.gradient_norm = norm(g);
    }
    res.status = res.gradient_norm < options.gradient_tolerance ? LbfgsStatus::Converged : LbfgsStatus::MaxIterations;
    return res;
}

}  // namespace kgcal
