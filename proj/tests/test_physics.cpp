#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "plume/physics.hpp"

using namespace plume;
using namespace plume::phys;

namespace {

Scenario sample_scenario() {
    Scenario s;
    s.name = "t";
    s.domain = {0, 10, 0, 10};
    s.t_start = 0;
    s.t_end = 4;
    s.k = 0.5;
    s.wind.kind = WindFieldSpec::Kind::Analytic;
    s.source.sources = {{4, 4, 1.0}};
    s.source.sigma = 0.25;
    s.scales = {0.3, 10.0, 0.55};
    return s;
}

}  // namespace

TEST_CASE("peclet: paper values and the unit case") {
    CHECK(peclet({1.0, 5.9, 1.0}, 0.5) == doctest::Approx(11.8).epsilon(1e-12));
    CHECK(peclet({1.0, 5.9, 1.0}, 1e-5) == doctest::Approx(590000.0).epsilon(1e-9));
    CHECK(peclet({1.0, 2.0, 3.0}, 6.0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK_THROWS_AS(peclet({1, 1, 1}, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(peclet({1, 1, 1}, -2.0), std::invalid_argument);
}

TEST_CASE("nondimensionalizer: unit scales are the identity, direct maps") {
    Nondimensionalizer unit({1, 1, 1});
    CHECK(unit.x_star(3.7) == 3.7);
    CHECK(unit.t_star(2.2) == 2.2);
    CHECK(unit.c_star(0.9) == 0.9);

    Nondimensionalizer n({10.0, 2.0, 5.0});
    CHECK(n.c_star(5.0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(n.t_star(4.0) == doctest::Approx(4.0 * 5.0 / 2.0).epsilon(1e-15));
    CHECK(n.u_star(2.5) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK_THROWS_AS(Nondimensionalizer({0, 1, 1}), std::invalid_argument);
}

TEST_CASE("scenario nondimensionalization round-trips to 1e-12") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> d(0.2, 3.0);
    for (int it = 0; it < 20; ++it) {
        Scenario s = sample_scenario();
        s.scales = {d(rng), 10 * d(rng), d(rng)};
        s.k = 0.1 * d(rng);
        s.wind.a = d(rng);
        s.wind.b = d(rng);
        s.wind.omega = d(rng);
        Scenario star = nondimensionalize_scenario(s);
        Scenario back = redimensionalize_scenario(star, s.scales);
        CHECK(back.domain.x_max == doctest::Approx(s.domain.x_max).epsilon(1e-12));
        CHECK(back.t_end == doctest::Approx(s.t_end).epsilon(1e-12));
        CHECK(back.k == doctest::Approx(s.k).epsilon(1e-12));
        CHECK(back.wind.a == doctest::Approx(s.wind.a).epsilon(1e-12));
        CHECK(back.wind.omega == doctest::Approx(s.wind.omega).epsilon(1e-12));
        CHECK(back.source.sigma == doctest::Approx(s.source.sigma).epsilon(1e-12));
        CHECK(back.source.sources[0].x == doctest::Approx(4.0).epsilon(1e-12));
        CHECK(back.source.sources[0].amplitude == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("nondimensional scenario satisfies the scaled equation") {
    // heat-kernel check in star variables: k* must equal 1/Pe
    Scenario s = sample_scenario();
    Scenario star = nondimensionalize_scenario(s);
    CHECK(star.k == doctest::Approx(1.0 / peclet(s.scales, s.k)).epsilon(1e-14));
    CHECK(star.scales.L == 1.0);
}

TEST_CASE("wind_at: constant field") {
    WindFieldSpec w;
    w.kind = WindFieldSpec::Kind::Constant;
    w.u = 0.7;
    w.v = 0.7;
    auto [u, v] = wind_at(w, 3.3, 9.1, 2.5);
    CHECK(u == 0.7);
    CHECK(v == 0.7);
}

TEST_CASE("wind_at: gridded interpolation") {
    WindFieldSpec w;
    w.kind = WindFieldSpec::Kind::Gridded;
    GriddedWind& g = w.grid;
    g.extent = {0, 1, 0, 1};
    g.nx = g.ny = 3;
    g.times = {0.0, 2.0};
    Matrix u0(3, 3), v0(3, 3), u1(3, 3), v1(3, 3);
    for (int j = 0; j < 3; ++j)
        for (int i = 0; i < 3; ++i) {
            u0.at(j, i) = i + 10.0 * j;
            v0.at(j, i) = -1.0;
            u1.at(j, i) = i + 10.0 * j + 100.0;
            v1.at(j, i) = 3.0;
        }
    g.u_fields = {u0, u1};
    g.v_fields = {v0, v1};

    // exact at a node and a sample time
    auto [ua, va] = wind_at(w, 0.5, 1.0, 0.0);
    CHECK(ua == doctest::Approx(1 + 10.0 * 2).epsilon(1e-14));
    CHECK(va == -1.0);
    // halfway in time: (a+b)/2
    auto [ub, vb] = wind_at(w, 0.0, 0.0, 1.0);
    CHECK(ub == doctest::Approx((0.0 + 100.0) / 2).epsilon(1e-14));
    CHECK(vb == doctest::Approx(1.0).epsilon(1e-14));
    // coverage errors
    CHECK_THROWS_AS(wind_at(w, 1.5, 0.5, 1.0), std::out_of_range);
    CHECK_THROWS_AS(wind_at(w, 0.5, 0.5, 5.0), std::out_of_range);
}

TEST_CASE("source_at: peak, tail, superposition") {
    SourceModel m;
    m.sigma = 0.25;
    m.sources = {{4, 4, 2.5}};
    CHECK(source_at(m, 4, 4) == doctest::Approx(2.5).epsilon(1e-15));
    CHECK(source_at(m, 4 + 10 * m.sigma, 4) < 2.5 * 1e-21);

    m.sources = {{4, 4, 2.5}, {4, 4, 2.5}};
    CHECK(source_at(m, 4, 4) == doctest::Approx(5.0).epsilon(1e-15));
}

TEST_CASE("source_center_grad matches finite differences to 1e-6") {
    SourceModel m;
    m.sigma = 0.4;
    m.sources = {{1.0, 2.0, 1.5}, {2.5, 0.5, 0.7}};
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> d(0.0, 3.0);
    for (int it = 0; it < 50; ++it) {
        const double x = d(rng), y = d(rng);
        auto grads = source_center_grad(m, x, y);
        const double h = 1e-6;
        for (size_t i = 0; i < m.sources.size(); ++i) {
            SourceModel mp = m, mm = m;
            mp.sources[i].x += h;
            mm.sources[i].x -= h;
            double fd = (source_at(mp, x, y) - source_at(mm, x, y)) / (2 * h);
            CHECK(std::abs(grads[i].first - fd) /
                      std::max(std::abs(fd) + std::abs(grads[i].first), 1e-3) <
                  1e-6);
            mp = m;
            mm = m;
            mp.sources[i].y += h;
            mm.sources[i].y -= h;
            fd = (source_at(mp, x, y) - source_at(mm, x, y)) / (2 * h);
            CHECK(std::abs(grads[i].second - fd) /
                      std::max(std::abs(fd) + std::abs(grads[i].second), 1e-3) <
                  1e-6);
        }
    }
}

TEST_CASE("residual: trivial and manufactured cases") {
    CHECK(residual(0, 0, 0, 0, 0, 1.0, 2.0, 0.0, 0.5, ResidualForm::Dimensional) == 0.0);
    // c = x: c_x = 1, u = 2, s = 2
    CHECK(residual(0, 1, 0, 0, 0, 2.0, 0.0, 2.0, 0.5, ResidualForm::Dimensional) == 0.0);
    // nondimensional form divides the laplacian by Pe
    const double r = residual(0, 0, 0, 1.0, 1.0, 0, 0, 0, 100.0, ResidualForm::Nondimensional);
    CHECK(r == doctest::Approx(-2.0 / 100.0).epsilon(1e-15));
}

TEST_CASE("residual: linear in derivatives and source for fixed wind/k") {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> d(-2, 2);
    for (int it = 0; it < 30; ++it) {
        double a[6], b[6];
        for (int i = 0; i < 6; ++i) {
            a[i] = d(rng);
            b[i] = d(rng);
        }
        const double u = d(rng), v = d(rng), k = 0.8;
        const double alpha = d(rng), beta = d(rng);
        double lhs = residual(alpha * a[0] + beta * b[0], alpha * a[1] + beta * b[1],
                              alpha * a[2] + beta * b[2], alpha * a[3] + beta * b[3],
                              alpha * a[4] + beta * b[4], u, v, alpha * a[5] + beta * b[5],
                              k, ResidualForm::Dimensional);
        double rhs = alpha * residual(a[0], a[1], a[2], a[3], a[4], u, v, a[5], k,
                                      ResidualForm::Dimensional) +
                     beta * residual(b[0], b[1], b[2], b[3], b[4], u, v, b[5], k,
                                     ResidualForm::Dimensional);
        CHECK(std::abs(lhs - rhs) < 1e-12);
    }
}

TEST_CASE("residual: analytic diffusing Gaussian is in the kernel") {
    // closed-form heat kernel with zero wind and zero source
    const double M = 2.0, k = 0.5, x0 = 5.0, y0 = 5.0;
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> d(3.0, 7.0);
    std::uniform_real_distribution<double> dt(0.5, 3.0);
    for (int it = 0; it < 200; ++it) {
        const double x = d(rng), y = d(rng), t = dt(rng);
        const double dx = x - x0, dy = y - y0, r2 = dx * dx + dy * dy;
        const double c = M / (4 * std::numbers::pi * k * t) * std::exp(-r2 / (4 * k * t));
        const double c_t = c * (-1.0 / t + r2 / (4 * k * t * t));
        const double c_x = -c * dx / (2 * k * t);
        const double c_y = -c * dy / (2 * k * t);
        const double c_xx = c * (dx * dx / (4 * k * k * t * t) - 1.0 / (2 * k * t));
        const double c_yy = c * (dy * dy / (4 * k * k * t * t) - 1.0 / (2 * k * t));
        const double r =
            residual(c_t, c_x, c_y, c_xx, c_yy, 0, 0, 0, k, ResidualForm::Dimensional);
        CHECK(std::abs(r) < 1e-8);
    }
}

TEST_CASE("append_source_field: values and center gradients through the graph") {
    SourceModel m;
    m.sigma = 0.3;
    m.sources = {{0.4, 0.4, 2.0}, {0.7, 0.2, 0.5}};
    m.train_x = m.train_y = true;

    std::vector<double> xs = {0.1, 0.4, 0.8}, ys = {0.2, 0.4, 0.9};
    ad::Graph g;
    SourceNodes sn = append_source_field(g, m, xs, ys);
    int loss = g.mean(sn.field);

    ad::Session s(g);
    for (size_t i = 0; i < m.sources.size(); ++i) {
        s.bind(sn.x_nodes[i], Matrix::scalar(m.sources[i].x));
        s.bind(sn.y_nodes[i], Matrix::scalar(m.sources[i].y));
    }
    REQUIRE_FALSE(s.forward().diverged);
    const Matrix& field = s.value(sn.field);
    for (int i = 0; i < 3; ++i)
        CHECK(field.at(0, i) == doctest::Approx(source_at(m, xs[i], ys[i])).epsilon(1e-13));

    s.backward(loss);
    // graph gradient of mean(source) vs analytic center gradients
    for (size_t i = 0; i < m.sources.size(); ++i) {
        double gx = 0, gy = 0;
        for (int p = 0; p < 3; ++p) {
            auto grads = source_center_grad(m, xs[p], ys[p]);
            gx += grads[i].first / 3.0;
            gy += grads[i].second / 3.0;
        }
        CHECK(s.adjoint(sn.x_nodes[i]).data[0] == doctest::Approx(gx).epsilon(1e-10));
        CHECK(s.adjoint(sn.y_nodes[i]).data[0] == doctest::Approx(gy).epsilon(1e-10));
    }
}

TEST_CASE("scenario validation") {
    Scenario s = sample_scenario();
    CHECK_NOTHROW(s.validate());
    s.k = 0;
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
    s = sample_scenario();
    s.source.sources[0].x = 99;
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
    s = sample_scenario();
    s.t_end = -1;
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
    s = sample_scenario();
    s.t_start = s.t_end = 3.0;  // single instant is allowed
    CHECK_NOTHROW(s.validate());
    CHECK(s.single_instant());
}

TEST_CASE("default_scales: longest side and mean wind magnitude") {
    Scenario s = sample_scenario();
    s.wind.kind = WindFieldSpec::Kind::Constant;
    s.wind.u = 0.7;
    s.wind.v = 0.7;
    CharacteristicScales cs = default_scales(s, 0.42);
    CHECK(cs.L == 10.0);
    CHECK(cs.U == doctest::Approx(std::hypot(0.7, 0.7)).epsilon(1e-12));
    CHECK(cs.C == 0.42);
}
