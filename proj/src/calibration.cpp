#include "kgcal/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>

#include <json.hpp>

#include "kgcal/error.hpp"
#include "kgcal/kernels.hpp"
#include "kgcal/lbfgs.hpp"
#include "kgcal/rng.hpp"
#include "kgcal/train.hpp"

namespace kgcal {

void CalibrationSet::validate() const {
    if (labels.empty()) throw DataError("calibration set is empty");
    if (scores.rows() != labels.size()) throw DataError("calibration scores and labels differ in length");
    if (scores.cols() == 0) throw DataError("calibration set has no classes");
    for (auto y : labels)
        if (y < 0 || static_cast<std::size_t>(y) >= scores.cols())
            throw DataError("calibration label " + std::to_string(y) + " out of range");
    for (double v : scores.values())
        if (!std::isfinite(v)) throw DataError("calibration scores must be finite");
}

std::string_view to_string(CalibrationMethod method) {
    switch (method) {
        case CalibrationMethod::Softmax: return "softmax";
        case CalibrationMethod::Platt: return "platt";
        case CalibrationMethod::Isotonic: return "isotonic";
        case CalibrationMethod::Vector: return "vector";
        case CalibrationMethod::Matrix: return "matrix";
    }
    return "?";
}

CalibrationMethod parse_calibration_method(std::string_view name) {
    if (name == "softmax" || name == "none" || name == "uncalibrated") return CalibrationMethod::Softmax;
    if (name == "platt") return CalibrationMethod::Platt;
    if (name == "isotonic") return CalibrationMethod::Isotonic;
    if (name == "vector") return CalibrationMethod::Vector;
    if (name == "matrix") return CalibrationMethod::Matrix;
    throw ConfigError("unknown calibration method '" + std::string(name) + "'");
}

double IsotonicStep::operator()(double x) const {
    if (values.empty()) return 0.0;
    const auto it = std::upper_bound(breakpoints.begin(), breakpoints.end(), x);
    if (it == breakpoints.begin()) return values.front();
    return values[static_cast<std::size_t>(it - breakpoints.begin()) - 1];
}

Calibrator::Calibrator(Variant params) : params_(std::move(params)) { validate(); }

CalibrationMethod Calibrator::method() const noexcept {
    return static_cast<CalibrationMethod>(params_.index());
}

std::size_t Calibrator::num_classes() const noexcept {
    struct {
        std::size_t operator()(const IdentitySoftmax& p) const { return p.k; }
        std::size_t operator()(const PlattOvA& p) const { return p.a.size(); }
        std::size_t operator()(const IsotonicOvA& p) const { return p.classes.size(); }
        std::size_t operator()(const VectorScaling& p) const { return p.a.size(); }
        std::size_t operator()(const MatrixScaling& p) const { return p.b.size(); }
    } visitor;
    return std::visit(visitor, params_);
}

namespace {

void require_finite(std::span<const double> v, const char* what) {
    for (double x : v)
        if (!std::isfinite(x)) throw DataError(std::string("non-finite calibrator parameter in ") + what);
}

// Divide by the sum; an all-zero vector becomes uniform.
void normalize_or_uniform(std::vector<double>& p) {
    const double sum = std::accumulate(p.begin(), p.end(), 0.0);
    if (!(sum > 0.0)) {
        std::fill(p.begin(), p.end(), 1.0 / static_cast<double>(p.size()));
        return;
    }
    for (double& v : p) v /= sum;
}

}  // namespace

void Calibrator::validate() const {
    const std::size_t k = num_classes();
    if (const auto* p = std::get_if<PlattOvA>(&params_)) {
        if (p->b.size() != k) throw DataError("Platt parameter vectors differ in length");
        require_finite(p->a, "platt");
        require_finite(p->b, "platt");
    } else if (const auto* p = std::get_if<IsotonicOvA>(&params_)) {
        for (const auto& step : p->classes) {
            if (step.values.empty() || step.values.size() != step.breakpoints.size())
                throw DataError("malformed isotonic step function");
            require_finite(step.breakpoints, "isotonic");
            require_finite(step.values, "isotonic");
            for (std::size_t j = 0; j < step.values.size(); ++j) {
                if (step.values[j] < 0.0 || step.values[j] > 1.0) throw DataError("isotonic value outside [0, 1]");
                if (j > 0 && (step.values[j] < step.values[j - 1] || step.breakpoints[j] <= step.breakpoints[j - 1]))
                    throw DataError("isotonic step function is not nondecreasing");
            }
        }
    } else if (const auto* p = std::get_if<VectorScaling>(&params_)) {
        if (p->b.size() != k) throw DataError("vector scaling parameter vectors differ in length");
        require_finite(p->a, "vector");
        require_finite(p->b, "vector");
    } else if (const auto* p = std::get_if<MatrixScaling>(&params_)) {
        if (p->A.rows() != k || p->A.cols() != k) throw DataError("matrix scaling weight must be k x k");
        require_finite(p->A.values(), "matrix");
        require_finite(p->b, "matrix");
    }
}

std::int32_t argmax(std::span<const double> v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = i;
    return static_cast<std::int32_t>(best);
}

std::vector<double> softmax(std::span<const double> z) {
    std::vector<double> p(z.begin(), z.end());
    if (p.empty()) return p;
    const double mx = *std::max_element(p.begin(), p.end());
    double sum = 0.0;
    for (double& v : p) {
        v = std::exp(v - mx);
        sum += v;
    }
    for (double& v : p) v /= sum;
    return p;
}

namespace {

Prediction make_prediction(const ScoreVector& z, std::vector<double> probs) {
    Prediction p;
    p.head = z.head;
    p.tail = z.tail;
    p.probs = std::move(probs);
    p.predicted = argmax(p.probs);
    p.confidence = p.probs[static_cast<std::size_t>(p.predicted)];
    return p;
}

}  // namespace

Prediction softmax_confidence(const ScoreVector& z) { return make_prediction(z, softmax(z.values)); }

std::vector<double> Calibrator::probabilities(std::span<const double> z) const {
    const std::size_t k = num_classes();
    if (z.size() != k && !(method() == CalibrationMethod::Softmax && k == 0))
        throw DataError("score vector has " + std::to_string(z.size()) + " entries, calibrator expects " +
                        std::to_string(k));
    std::vector<double> p(z.size());
    switch (method()) {
        case CalibrationMethod::Softmax: return softmax(z);
        case CalibrationMethod::Platt: {
            const auto& c = std::get<PlattOvA>(params_);
            for (std::size_t i = 0; i < k; ++i) p[i] = sigmoid(c.a[i] * z[i] + c.b[i]);
            normalize_or_uniform(p);
            return p;
        }
        case CalibrationMethod::Isotonic: {
            const auto& c = std::get<IsotonicOvA>(params_);
            for (std::size_t i = 0; i < k; ++i) p[i] = c.classes[i](sigmoid(z[i]));
            normalize_or_uniform(p);
            return p;
        }
        case CalibrationMethod::Vector: {
            const auto& c = std::get<VectorScaling>(params_);
            for (std::size_t i = 0; i < k; ++i) p[i] = c.a[i] * z[i] + c.b[i];
            return softmax(p);
        }
        case CalibrationMethod::Matrix: {
            const auto& c = std::get<MatrixScaling>(params_);
            for (std::size_t i = 0; i < k; ++i) {
                double v = c.b[i];
                const auto row = c.A.row(i);
                for (std::size_t j = 0; j < k; ++j) v += row[j] * z[j];
                p[i] = v;
            }
            return softmax(p);
        }
    }
    return p;
}

Prediction calibrate(const Calibrator& calibrator, const ScoreVector& z) {
    return make_prediction(z, calibrator.probabilities(z.values));
}

namespace {

struct PlattFit {
    double a = 0.0;
    double b = 0.0;
};

double platt_objective(std::span<const double> x, std::span<const double> y, double a, double b) {
    double f = 0.0;
    for (std::size_t n = 0; n < x.size(); ++n) {
        const double s = a * x[n] + b;
        f += y[n] > 0.5 ? softplus(-s) : softplus(s);
    }
    return f;
}

PlattFit fit_platt_class(std::span<const double> x, std::span<const double> y, const PlattFitOptions& opt) {
    const double n = static_cast<double>(x.size());
    const double positives = std::accumulate(y.begin(), y.end(), 0.0);
    PlattFit fit;
    if (positives == 0.0) {
        // sigma(b) = 1 / (n + 2)
        fit.b = -std::log(n + 1.0);
        return fit;
    }
    fit.b = std::log((positives + 1.0) / (n - positives + 1.0));
    double f = platt_objective(x, y, fit.a, fit.b);
    for (std::size_t it = 0; it < opt.max_iterations; ++it) {
        double ga = 0.0, gb = 0.0, haa = 0.0, hab = 0.0, hbb = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double p = sigmoid(fit.a * x[i] + fit.b);
            const double r = p - y[i];
            const double w = p * (1.0 - p);
            ga += r * x[i];
            gb += r;
            haa += w * x[i] * x[i];
            hab += w * x[i];
            hbb += w;
        }
        if (std::hypot(ga, gb) < opt.gradient_tolerance) break;
        haa += opt.hessian_jitter;
        hbb += opt.hessian_jitter;
        const double det = haa * hbb - hab * hab;
        double da, db;
        if (det > 0.0 && std::isfinite(det)) {
            da = -(hbb * ga - hab * gb) / det;
            db = -(haa * gb - hab * ga) / det;
        } else {
            da = -ga;
            db = -gb;
        }
        const double slope = ga * da + gb * db;
        if (!(slope < 0.0)) {
            da = -ga;
            db = -gb;
        }
        double t = 1.0;
        bool moved = false;
        for (int ls = 0; ls < 60; ++ls, t *= 0.5) {
            const double fa = fit.a + t * da, fb = fit.b + t * db;
            const double fn = platt_objective(x, y, fa, fb);
            if (fn <= f + 1e-4 * t * slope) {
                moved = fn < f;
                fit.a = fa;
                fit.b = fb;
                f = fn;
                break;
            }
        }
        if (!moved) break;
    }
    return fit;
}

void check_fit_input(const CalibrationSet& data) {
    try {
        data.validate();
    } catch (const DataError& e) {
        throw DataError(std::string("cannot fit calibrator: ") + e.what());
    }
}

}  // namespace

Calibrator fit_platt_ova(const CalibrationSet& data, const PlattFitOptions& options, int threads) {
    check_fit_input(data);
    const std::size_t n = data.size(), k = data.num_classes();
    PlattOvA out;
    out.a.resize(k);
    out.b.resize(k);
    const auto kk = static_cast<std::ptrdiff_t>(k);
#pragma omp parallel for schedule(dynamic, 1) num_threads(resolve_threads(threads))
    for (std::ptrdiff_t c = 0; c < kk; ++c) {
        const auto ci = static_cast<std::size_t>(c);
        std::vector<double> x(n), y(n);
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = data.scores(i, ci);
            y[i] = data.labels[i] == static_cast<std::int32_t>(ci) ? 1.0 : 0.0;
        }
        const auto fit = fit_platt_class(x, y, options);
        out.a[ci] = fit.a;
        out.b[ci] = fit.b;
    }
    return Calibrator(std::move(out));
}

IsotonicStep fit_isotonic(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.empty()) throw DataError("isotonic fit needs equal-length non-empty inputs");
    std::vector<std::size_t> order(x.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return x[i] < x[j]; });

    struct Block {
        double x0;
        double weight;
        double sum;
        double mean() const { return sum / weight; }
    };
    std::vector<Block> blocks;
    for (std::size_t pos = 0; pos < order.size();) {
        Block b{x[order[pos]], 0.0, 0.0};
        while (pos < order.size() && x[order[pos]] == b.x0) {
            b.weight += 1.0;
            b.sum += y[order[pos]];
            ++pos;
        }
        blocks.push_back(b);
        while (blocks.size() >= 2 && blocks[blocks.size() - 2].mean() >= blocks.back().mean()) {
            const Block last = blocks.back();
            blocks.pop_back();
            blocks.back().weight += last.weight;
            blocks.back().sum += last.sum;
        }
    }
    IsotonicStep step;
    for (const auto& b : blocks) {
        step.breakpoints.push_back(b.x0);
        step.values.push_back(std::clamp(b.mean(), 0.0, 1.0));
    }
    return step;
}

Calibrator fit_isotonic_ova(const CalibrationSet& data, int threads) {
    check_fit_input(data);
    const std::size_t n = data.size(), k = data.num_classes();
    IsotonicOvA out;
    out.classes.resize(k);
    const auto kk = static_cast<std::ptrdiff_t>(k);
#pragma omp parallel for schedule(dynamic, 1) num_threads(resolve_threads(threads))
    for (std::ptrdiff_t c = 0; c < kk; ++c) {
        const auto ci = static_cast<std::size_t>(c);
        std::vector<double> x(n), y(n);
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = sigmoid(data.scores(i, ci));
            y[i] = data.labels[i] == static_cast<std::int32_t>(ci) ? 1.0 : 0.0;
        }
        out.classes[ci] = fit_isotonic(x, y);
    }
    return Calibrator(std::move(out));
}

Calibrator fit_affine_scaling(const CalibrationSet& data, bool diagonal_only, const AffineFitOptions& options,
                              AffineFitReport* report) {
    check_fit_input(data);
    if (data.size() < 2) throw DataError("affine scaling needs at least two calibration queries");
    const std::size_t k = data.num_classes();
    const int threads = resolve_threads(options.threads);

    std::vector<double> identity(kernels::affine_param_count(k, diagonal_only), 0.0);
    for (std::size_t i = 0; i < k; ++i) identity[diagonal_only ? i : i * k + i] = 1.0;
    std::vector<double> start = identity;
    if (options.init_noise > 0.0) {
        Engine eng(options.init_seed);
        for (double& v : start) v += uniform(eng, -options.init_noise, options.init_noise);
    }

    const Objective objective = [&](std::span<const double> x, std::span<double> g) {
        return kernels::affine_cross_entropy(data.scores, data.labels, x, diagonal_only, options.l2, g, threads);
    };
    std::vector<double> scratch(identity.size());
    const double identity_loss = objective(identity, scratch);

    LbfgsOptions lopt;
    lopt.max_iterations = options.max_iterations;
    lopt.gradient_tolerance = options.gradient_tolerance;
    const LbfgsResult res = minimize_lbfgs(objective, start, lopt);

    if (!std::isfinite(res.value) || res.value > res.initial_value) {
        std::ostringstream msg;
        msg << (diagonal_only ? "vector" : "matrix") << " scaling diverged: loss " << res.initial_value << " -> "
            << res.value << " after " << res.iterations << " iterations; iterate [";
        for (std::size_t i = 0; i < res.x.size(); ++i) msg << (i ? ", " : "") << res.x[i];
        msg << "]";
        throw NumericalError(msg.str());
    }
    if (report) {
        report->initial_loss = identity_loss;
        report->final_loss = res.value;
        report->gradient_norm = res.gradient_norm;
        report->iterations = res.iterations;
        report->converged = res.status == LbfgsStatus::Converged;
    }

    if (diagonal_only) {
        VectorScaling v;
        v.a.assign(res.x.begin(), res.x.begin() + static_cast<std::ptrdiff_t>(k));
        v.b.assign(res.x.begin() + static_cast<std::ptrdiff_t>(k), res.x.end());
        return Calibrator(std::move(v));
    }
    MatrixScaling m;
    m.A = Matrix(k, k);
    std::copy(res.x.begin(), res.x.begin() + static_cast<std::ptrdiff_t>(k * k), m.A.values().begin());
    m.b.assign(res.x.begin() + static_cast<std::ptrdiff_t>(k * k), res.x.end());
    return Calibrator(std::move(m));
}

double mean_cross_entropy(const Calibrator& calibrator, const CalibrationSet& data) {
    double total = 0.0;
    for (std::size_t n = 0; n < data.size(); ++n) {
        const auto p = calibrator.probabilities(data.scores.row(n));
        // Isotonic maps can assign exactly zero probability.
        total -= std::log(std::max(p[static_cast<std::size_t>(data.labels[n])], 1e-300));
    }
    return total / static_cast<double>(data.size());
}

Calibrator fit_calibrator(CalibrationMethod method, const CalibrationSet& data, const AffineFitOptions& affine) {
    switch (method) {
        case CalibrationMethod::Softmax:
            check_fit_input(data);
            return Calibrator(IdentitySoftmax{data.num_classes()});
        case CalibrationMethod::Platt: return fit_platt_ova(data, {}, affine.threads);
        case CalibrationMethod::Isotonic: return fit_isotonic_ova(data, affine.threads);
        case CalibrationMethod::Vector: return fit_affine_scaling(data, true, affine);
        case CalibrationMethod::Matrix: return fit_affine_scaling(data, false, affine);
    }
    throw ConfigError("unknown calibration method");
}

void save_calibrator(const Calibrator& calibrator, const std::filesystem::path& path) {
    nlohmann::json j;
    j["format"] = "kgcal.calibrator";
    j["version"] = 1;
    j["method"] = std::string(to_string(calibrator.method()));
    j["k"] = calibrator.num_classes();
    const auto& params = calibrator.params();
    if (const auto* p = std::get_if<PlattOvA>(&params)) {
        j["a"] = p->a;
        j["b"] = p->b;
    } else if (const auto* p = std::get_if<IsotonicOvA>(&params)) {
        auto arr = nlohmann::json::array();
        for (const auto& s : p->classes) arr.push_back({{"breakpoints", s.breakpoints}, {"values", s.values}});
        j["classes"] = arr;
    } else if (const auto* p = std::get_if<VectorScaling>(&params)) {
        j["a"] = p->a;
        j["b"] = p->b;
    } else if (const auto* p = std::get_if<MatrixScaling>(&params)) {
        std::vector<double> flat(p->A.values().begin(), p->A.values().end());
        j["A"] = flat;
        j["b"] = p->b;
    }
    std::ofstream out(path);
    if (!out) throw DataError("cannot write calibrator " + path.string());
    out << j.dump(1) << '\n';
}

Calibrator load_calibrator(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open calibrator " + path.string());
    try {
        nlohmann::json j;
        in >> j;
        if (j.value("format", "") != "kgcal.calibrator") throw DataError("not a calibrator file: " + path.string());
        const auto k = j.at("k").get<std::size_t>();
        switch (parse_calibration_method(j.at("method").get<std::string>())) {
            case CalibrationMethod::Softmax: return Calibrator(IdentitySoftmax{k});
            case CalibrationMethod::Platt:
                return Calibrator(PlattOvA{j.at("a").get<std::vector<double>>(), j.at("b").get<std::vector<double>>()});
            case CalibrationMethod::Isotonic: {
                IsotonicOvA iso;
                for (const auto& c : j.at("classes"))
                    iso.classes.push_back(
                        {c.at("breakpoints").get<std::vector<double>>(), c.at("values").get<std::vector<double>>()});
                return Calibrator(std::move(iso));
            }
            case CalibrationMethod::Vector:
                return Calibrator(
                    VectorScaling{j.at("a").get<std::vector<double>>(), j.at("b").get<std::vector<double>>()});
            case CalibrationMethod::Matrix: {
                const auto flat = j.at("A").get<std::vector<double>>();
                if (flat.size() != k * k) throw DataError("matrix scaling weight must have k*k entries");
                MatrixScaling m;
                m.A = Matrix(k, k);
                std::copy(flat.begin(), flat.end(), m.A.values().begin());
                m.b = j.at("b").get<std::vector<double>>();
                return Calibrator(std::move(m));
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError("malformed calibrator " + path.string() + ": " + e.what());
    }
    throw DataError("malformed calibrator " + path.string());
}

}  // namespace kgcal
