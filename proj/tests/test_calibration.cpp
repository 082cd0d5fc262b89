#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "kgcal/calibration.hpp"
#include "kgcal/error.hpp"
#include "kgcal/lbfgs.hpp"
#include "kgcal/train.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace kgcal;

namespace {

// Scores with a class-dependent bump so the calibrators have something to learn.
CalibrationSet synthetic_set(std::size_t n, std::size_t k, std::uint64_t seed, double signal = 2.0) {
    Engine eng(seed);
    CalibrationSet s{Matrix(n, k), std::vector<std::int32_t>(n)};
    for (std::size_t i = 0; i < n; ++i) {
        const auto y = static_cast<std::int32_t>(uniform_index(eng, k));
        s.labels[i] = y;
        for (std::size_t j = 0; j < k; ++j) s.scores(i, j) = uniform(eng, -3.0, 3.0);
        s.scores(i, static_cast<std::size_t>(y)) += signal * uniform01(eng);
    }
    return s;
}

double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

double bce(const std::vector<double>& p, const std::vector<double>& y) {
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double q = std::clamp(p[i], 1e-15, 1.0 - 1e-15);
        s -= y[i] * std::log(q) + (1 - y[i]) * std::log(1 - q);
    }
    return s / static_cast<double>(p.size());
}

}  // namespace

TEST_CASE("softmax examples") {
    const auto u = softmax(std::vector<double>{0, 0, 0});
    for (double p : u) CHECK(p == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK(softmax_confidence({{0, 0, 0}, 0, 0}).predicted == 0);

    const auto big = softmax(std::vector<double>{1000, 0});
    CHECK(big[0] == 1.0);
    CHECK(big[1] >= 0.0);
    CHECK(big[1] < 1e-300);

    const auto p = softmax(std::vector<double>{1, 2, 3});
    CHECK(p[0] == doctest::Approx(0.09003).epsilon(1e-4));
    CHECK(p[1] == doctest::Approx(0.24473).epsilon(1e-4));
    CHECK(p[2] == doctest::Approx(0.66524).epsilon(1e-4));
    const auto ref = oracle::softmax({1, 2, 3});
    for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(p[i] - ref[i]) <= 1e-15);

    CHECK(argmax(std::vector<double>{1, 3, 3, 2}) == 1);
}

TEST_CASE("softmax shift invariance") {
    Engine eng(3);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> z(5), shifted(5);
        const double c = uniform(eng, -100, 100);
        for (std::size_t i = 0; i < 5; ++i) {
            z[i] = uniform(eng, -10, 10);
            shifted[i] = z[i] + c;
        }
        const auto a = softmax_confidence({z, 0, 0});
        const auto b = softmax_confidence({shifted, 0, 0});
        CHECK(a.predicted == b.predicted);
        for (std::size_t i = 0; i < 5; ++i) CHECK(std::abs(a.probs[i] - b.probs[i]) <= 1e-12);
    }
}

TEST_CASE("identity parameters reproduce known transforms") {
    const std::vector<double> z{0.3, -1.2, 2.0};
    const auto soft = softmax(z);

    const Calibrator vec(VectorScaling{{1, 1, 1}, {0, 0, 0}});
    const Calibrator mat(MatrixScaling{Matrix::identity(3), {0, 0, 0}});
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(std::abs(vec.probabilities(z)[i] - soft[i]) <= 1e-12);
        CHECK(std::abs(mat.probabilities(z)[i] - soft[i]) <= 1e-12);
    }

    const Calibrator platt(PlattOvA{{1, 1, 1}, {0, 0, 0}});
    const auto pp = platt.probabilities(z);
    double total = 0.0;
    for (double x : z) total += sigmoid(x);
    for (std::size_t i = 0; i < 3; ++i) CHECK(pp[i] == doctest::Approx(sigmoid(z[i]) / total).epsilon(1e-14));

    // permutation matrix: (A z)_i = z_{perm[i]}
    Matrix perm(3, 3);
    perm(0, 2) = perm(1, 0) = perm(2, 1) = 1.0;
    const auto mp = Calibrator(MatrixScaling{perm, {0, 0, 0}}).probabilities(z);
    const auto expected = softmax(std::vector<double>{z[2], z[0], z[1]});
    for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(mp[i] - expected[i]) <= 1e-15);

    // all-zero one-vs-all outputs fall back to uniform
    IsotonicStep zero{{0.0}, {0.0}};
    const auto iso = Calibrator(IsotonicOvA{{zero, zero, zero}}).probabilities(z);
    for (double p : iso) CHECK(p == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

    CHECK_THROWS_AS(vec.probabilities(std::vector<double>{1, 2}), DataError);
}

TEST_CASE("isotonic step fit") {
    const auto pooled = fit_isotonic(std::vector<double>{0.2, 0.8}, std::vector<double>{1, 0});
    CHECK(pooled(0.0) == 0.5);
    CHECK(pooled(0.5) == 0.5);
    CHECK(pooled(1.0) == 0.5);

    const auto mono = fit_isotonic(std::vector<double>{0.1, 0.4, 0.9}, std::vector<double>{0, 0.5, 1});
    CHECK(mono(0.1) == 0.0);
    CHECK(mono(0.4) == 0.5);
    CHECK(mono(0.9) == 1.0);
    CHECK(mono(0.05) == 0.0);  // clamped below the range
    CHECK(mono(0.5) == 0.5);   // right-continuous steps
    CHECK(mono(7.0) == 1.0);

    const auto zeros = fit_isotonic(std::vector<double>{0.1, 0.3, 0.7}, std::vector<double>{0, 0, 0});
    for (double x : {0.0, 0.2, 0.5, 1.0}) CHECK(zeros(x) == 0.0);

    // equal x values share one block
    const auto ties = fit_isotonic(std::vector<double>{0.5, 0.5, 0.2}, std::vector<double>{1, 0, 0});
    CHECK(ties(0.5) == 0.5);
    CHECK(ties(0.2) == 0.0);

    Engine eng(11);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 1 + uniform_index(eng, 40);
        std::vector<double> x(n), y(n);
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = std::round(uniform01(eng) * 20) / 20;  // force ties
            y[i] = uniform01(eng) < x[i] ? 1.0 : 0.0;
        }
        const auto g = fit_isotonic(x, y);
        const auto ref = oracle::isotonic_fit(x, y);
        for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(g(x[i]) - ref[i]) <= 1e-12);
        for (std::size_t j = 1; j < g.values.size(); ++j) CHECK(g.values[j - 1] <= g.values[j]);
    }
}

TEST_CASE("Platt fit") {
    // class 0 perfectly separated on its own score column
    CalibrationSet s{Matrix(40, 3), std::vector<std::int32_t>(40)};
    Engine eng(5);
    for (std::size_t i = 0; i < 40; ++i) {
        const bool pos = i % 4 == 0;
        s.labels[i] = pos ? 0 : 1;
        s.scores(i, 0) = pos ? uniform(eng, 1.0, 2.0) : uniform(eng, -2.0, 0.5);
        s.scores(i, 1) = uniform(eng, -1, 1);
        s.scores(i, 2) = uniform(eng, -1, 1);
    }
    const auto cal = fit_platt_ova(s);
    const auto& p = std::get<PlattOvA>(cal.params());
    CHECK(p.a[0] > 0.0);

    std::vector<double> fitted, y;
    double base = 0.0;
    for (std::size_t i = 0; i < 40; ++i) {
        fitted.push_back(sigmoid(p.a[0] * s.scores(i, 0) + p.b[0]));
        y.push_back(s.labels[i] == 0 ? 1.0 : 0.0);
        base += y.back();
    }
    base /= 40.0;
    CHECK(bce(fitted, y) < bce(std::vector<double>(40, base), y));

    // class 2 never appears
    CHECK(p.a[2] == 0.0);
    CHECK(sigmoid(p.b[2]) == doctest::Approx(1.0 / 42.0).epsilon(1e-12));
}

TEST_CASE("affine scaling fits") {
    for (bool diagonal : {true, false}) {
        const auto data = synthetic_set(400, 4, diagonal ? 1 : 2);
        AffineFitReport rep;
        const auto cal = fit_affine_scaling(data, diagonal, {}, &rep);
        CHECK(rep.final_loss <= rep.initial_loss);
        CHECK(rep.initial_loss == doctest::Approx(mean_cross_entropy(Calibrator(IdentitySoftmax{4}), data)));
        CHECK(rep.final_loss == doctest::Approx(mean_cross_entropy(cal, data)).epsilon(1e-12));
        CHECK(rep.converged);

        AffineFitOptions noisy;
        noisy.init_noise = 0.5;
        for (std::uint64_t s = 1; s <= 3; ++s) {
            noisy.init_seed = s;
            AffineFitReport r2;
            fit_affine_scaling(data, diagonal, noisy, &r2);
            CHECK(std::abs(r2.final_loss - rep.final_loss) <= 1e-6);
        }
    }
    // strong L2 keeps the parameters near (I, 0)
    const auto data = synthetic_set(200, 3, 4);
    AffineFitOptions reg;
    reg.l2 = 1e6;
    const auto cal = fit_affine_scaling(data, false, reg);
    const auto& m = std::get<MatrixScaling>(cal.params());
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) CHECK(std::abs(m.A(i, j) - (i == j ? 1.0 : 0.0)) < 1e-3);
}

TEST_CASE("every calibrator outputs a distribution") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto data = synthetic_set(150, 5, seed + 10);
        Engine eng(seed);
        for (auto method : {CalibrationMethod::Softmax, CalibrationMethod::Platt, CalibrationMethod::Isotonic,
                            CalibrationMethod::Vector, CalibrationMethod::Matrix}) {
            const auto cal = fit_calibrator(method, data);
            CHECK(cal.method() == method);
            CHECK(cal.num_classes() == 5);
            for (int trial = 0; trial < 50; ++trial) {
                std::vector<double> z(5);
                for (double& x : z) x = uniform(eng, -20, 20);
                const auto p = cal.probabilities(z);
                for (double x : p) {
                    CHECK(x >= 0.0);
                    CHECK(x <= 1.0);
                }
                CHECK(std::abs(sum(p) - 1.0) <= 1e-9);
            }
        }
    }
}

TEST_CASE("calibrator checkpoint round trip") {
    kgcal::testing::TempDir dir;
    const auto data = synthetic_set(120, 3, 7);
    for (auto method : {CalibrationMethod::Softmax, CalibrationMethod::Platt, CalibrationMethod::Isotonic,
                        CalibrationMethod::Vector, CalibrationMethod::Matrix}) {
        const auto cal = fit_calibrator(method, data);
        save_calibrator(cal, dir / "c.json");
        const auto back = load_calibrator(dir / "c.json");
        CHECK(back.method() == method);
        for (std::size_t i = 0; i < data.size(); ++i)
            CHECK(back.probabilities(data.scores.row(i)) == cal.probabilities(data.scores.row(i)));
    }
    kgcal::testing::write_file(dir / "bad.json", "{\"format\": \"kgcal.calibrator\", \"method\": \"vector\"}");
    CHECK_THROWS_AS(load_calibrator(dir / "bad.json"), DataError);
    CHECK(parse_calibration_method("none") == CalibrationMethod::Softmax);
    CHECK_THROWS_AS(parse_calibration_method("temperature"), ConfigError);
}

TEST_CASE("calibration set validation") {
    CalibrationSet s{Matrix(2, 2), {0, 2}};
    CHECK_THROWS_AS(s.validate(), DataError);
    CalibrationSet empty{Matrix(0, 3), {}};
    CHECK_THROWS_AS(fit_calibrator(CalibrationMethod::Vector, empty), DataError);
}

TEST_CASE("L-BFGS on a quadratic and the Rosenbrock valley") {
    const Objective quad = [](std::span<const double> x, std::span<double> g) {
        double f = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double w = static_cast<double>(i + 1);
            f += 0.5 * w * (x[i] - 1.0) * (x[i] - 1.0);
            g[i] = w * (x[i] - 1.0);
        }
        return f;
    };
    const auto q = minimize_lbfgs(quad, std::vector<double>(6, -3.0));
    CHECK(q.status == LbfgsStatus::Converged);
    for (double x : q.x) CHECK(x == doctest::Approx(1.0).epsilon(1e-6));

    const Objective rosen = [](std::span<const double> x, std::span<double> g) {
        const double a = 1.0 - x[0], b = x[1] - x[0] * x[0];
        g[0] = -2.0 * a - 400.0 * x[0] * b;
        g[1] = 200.0 * b;
        return a * a + 100.0 * b * b;
    };
    const auto r = minimize_lbfgs(rosen, {-1.2, 1.0});
    CHECK(r.status == LbfgsStatus::Converged);
    CHECK(r.x[0] == doctest::Approx(1.0).epsilon(1e-5));
    CHECK(r.x[1] == doctest::Approx(1.0).epsilon(1e-5));
    CHECK(r.value <= r.initial_value);
}
