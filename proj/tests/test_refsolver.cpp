#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "plume/refsolver.hpp"

using namespace plume;
using namespace plume::ref;

namespace {

phys::Scenario diffusion_only(double k = 0.5) {
    phys::Scenario s;
    s.name = "diffusion";
    s.domain = {0, 10, 0, 10};
    s.t_start = 0;
    s.t_end = 1.0;
    s.k = k;
    s.wind.kind = phys::WindFieldSpec::Kind::Constant;
    s.wind.u = 0;
    s.wind.v = 0;
    s.source.sources = {};  // no emission
    s.scales = {1, 10, 1};
    return s;
}

Matrix kernel_field(double M, double k, double x0, double y0, double t, int nx, int ny,
                    const phys::Domain& d) {
    std::vector<std::pair<double, double>> pts;
    pts.reserve(static_cast<size_t>(nx) * ny);
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i)
            pts.emplace_back(d.x_min + i * d.width() / (nx - 1),
                             d.y_min + j * d.height() / (ny - 1));
    std::vector<double> vals = analytic_heat_kernel(M, k, x0, y0, t, pts);
    Matrix f(ny, nx, std::move(vals));
    return f;
}

// L2 relative error of the diffusion-only solve against the shifted-time
// analytic kernel: start from kernel(t0), march to t0+T.
double diffusion_error(int n, double dt) {
    phys::Scenario s = diffusion_only();
    const double t0 = 0.5, T = 1.0;
    GridSpec g;
    g.nx = g.ny = n;
    g.dt = dt;
    Matrix init = kernel_field(2.0, s.k, 5.0, 5.0, t0, n, n, s.domain);
    FieldSeries fs = solve_forward(s, g, {T}, &init);
    Matrix expect = kernel_field(2.0, s.k, 5.0, 5.0, t0 + T, n, n, s.domain);
    return field_rel_l2(fs.snaps.back().c, expect);
}

// advection of a Gaussian bump by a constant wind, near-zero diffusion
double advection_error(int n) {
    phys::Scenario s = diffusion_only(1e-12);
    s.wind.u = 0.7;
    s.wind.v = 0.35;
    const double T = 2.0;
    GridSpec g;
    g.nx = g.ny = n;
    g.cfl = 0.5;
    const double sig = 0.5;
    auto gauss = [&](double cx, double cy) {
        Matrix f(n, n);
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) {
                const double x = s.domain.x_min + i * s.domain.width() / (n - 1);
                const double y = s.domain.y_min + j * s.domain.height() / (n - 1);
                f.at(j, i) = std::exp(-((x - cx) * (x - cx) + (y - cy) * (y - cy)) /
                                      (2 * sig * sig));
            }
        return f;
    };
    Matrix init = gauss(3.0, 4.0);
    FieldSeries fs = solve_forward(s, g, {T}, &init);
    Matrix expect = gauss(3.0 + s.wind.u * T, 4.0 + s.wind.v * T);
    return field_rel_l2(fs.snaps.back().c, expect);
}

}  // namespace

TEST_CASE("zero wind, zero source, zero IC stays zero") {
    phys::Scenario s = diffusion_only();
    GridSpec g;
    g.nx = g.ny = 32;
    FieldSeries fs = solve_forward(s, g, {0.0, 0.5, 1.0});
    REQUIRE(fs.snaps.size() == 3);
    for (const auto& snap : fs.snaps)
        for (double v : snap.c.data) CHECK(v == 0.0);
}

TEST_CASE("diffusion-only matches analytic heat kernel within 2% at 128x128") {
    const double err = diffusion_error(128, 0.005);
    CHECK(err < 0.02);
}

TEST_CASE("convergence orders: ~2 for diffusion, ~1 for advection") {
    const double e1 = diffusion_error(64, 0.02);
    const double e2 = diffusion_error(128, 0.01);
    const double slope_diff = std::log2(e1 / e2);
    CHECK(slope_diff > 1.7);
    CHECK(slope_diff < 2.3);

    const double a1 = advection_error(64);
    const double a2 = advection_error(128);
    const double slope_adv = std::log2(a1 / a2);
    CHECK(slope_adv > 0.7);
    CHECK(slope_adv < 1.3);
}

TEST_CASE("interior mass is conserved without wind or source") {
    phys::Scenario s = diffusion_only();
    GridSpec g;
    g.nx = g.ny = 96;
    Matrix init = kernel_field(1.0, s.k, 5.0, 5.0, 0.4, g.nx, g.ny, s.domain);
    FieldSeries fs = solve_forward(s, g, {0.0, 1.0}, &init);
    auto mass = [&](const Matrix& f) {
        double m = 0;
        for (double v : f.data) m += v;
        return m * fs.hx() * fs.hy();
    };
    const double m0 = mass(fs.snaps[0].c);
    const double m1 = mass(fs.snaps[1].c);
    CHECK(std::abs(m1 - m0) / m0 < 0.001);  // < 0.1% over one unit of time
}

TEST_CASE("positivity: nonnegative IC and source stay above -1e-10") {
    phys::Scenario s = diffusion_only();
    s.wind.u = 0.7;
    s.wind.v = 0.7;
    s.source.sources = {{4, 4, 1.0}};
    s.source.sigma = 0.25;
    GridSpec g;
    g.nx = g.ny = 64;
    FieldSeries fs = solve_forward(s, g, {1.0, 3.0});
    for (const auto& snap : fs.snaps)
        for (double v : snap.c.data) CHECK(v >= -1e-10);
}

TEST_CASE("CFL violation is rejected") {
    phys::Scenario s = diffusion_only();
    s.wind.u = 2.0;
    GridSpec g;
    g.nx = g.ny = 32;
    g.dt = 1.0;  // u dt / h = 2.0 / (10/31) >> 1
    CHECK_THROWS_AS(solve_forward(s, g, {1.0}), std::invalid_argument);
}

TEST_CASE("sample_observations: stored values at nodes and snapshot times") {
    phys::Scenario s = diffusion_only();
    GridSpec g;
    g.nx = g.ny = 33;
    Matrix init = kernel_field(1.0, s.k, 5.0, 5.0, 0.5, g.nx, g.ny, s.domain);
    FieldSeries fs = solve_forward(s, g, {0.0, 0.8}, &init);

    const int i = 12, j = 20;
    const double x = fs.node_x(i), y = fs.node_y(j);
    ObservationSet obs = sample_observations(fs, {{x, y}}, {0.0}, 0.0, 1);
    REQUIRE(obs.size() == 1);
    CHECK(obs.samples[0].c == fs.snaps[0].c.at(j, i));

    // zero field gives zero observations
    FieldSeries zfs = solve_forward(s, g, {0.0, 0.5});
    ObservationSet zobs =
        sample_observations(zfs, {{1.0, 2.0}, {3.3, 7.7}}, {0.0, 0.25, 0.5}, 0.0, 1);
    CHECK(zobs.size() == 6);
    for (const auto& o : zobs.samples) CHECK(o.c == 0.0);

    // seeded noise reproduces byte-identically
    ObservationSet n1 = sample_observations(fs, {{2, 2}, {5, 5}}, {0.0, 0.8}, 0.01, 77);
    ObservationSet n2 = sample_observations(fs, {{2, 2}, {5, 5}}, {0.0, 0.8}, 0.01, 77);
    REQUIRE(n1.size() == n2.size());
    for (size_t m = 0; m < n1.size(); ++m) CHECK(n1.samples[m].c == n2.samples[m].c);

    CHECK_THROWS_AS(sample_observations(fs, {{-1, 0}}, {0.0}, 0.0, 1), std::out_of_range);
    CHECK_THROWS_AS(sample_observations(fs, {{2, 2}}, {9.0}, 0.0, 1), std::out_of_range);
}

TEST_CASE("analytic_heat_kernel: peak, symmetry, and total mass by quadrature") {
    const double M = 3.0, k = 0.5, t = 1.2;
    std::vector<std::pair<double, double>> pts = {{0, 0}, {1, 0}, {0, 1}, {-1, 0}, {0, -1}};
    std::vector<double> v = analytic_heat_kernel(M, k, 0, 0, t, pts);
    CHECK(v[0] == doctest::Approx(M / (4 * std::numbers::pi * k * t)).epsilon(1e-14));
    for (int i = 2; i < 5; ++i) CHECK(v[i] == doctest::Approx(v[1]).epsilon(1e-13));

    // midpoint quadrature over [-12,12]^2 captures the mass
    const int n = 400;
    const double h = 24.0 / n;
    std::vector<std::pair<double, double>> grid;
    grid.reserve(static_cast<size_t>(n) * n);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i)
            grid.emplace_back(-12 + (i + 0.5) * h, -12 + (j + 0.5) * h);
    std::vector<double> g = analytic_heat_kernel(M, k, 0, 0, t, grid);
    double integral = 0;
    for (double x : g) integral += x * h * h;
    CHECK(integral == doctest::Approx(M).epsilon(1e-6));

    CHECK_THROWS_AS(analytic_heat_kernel(M, k, 0, 0, 0.0, pts), std::invalid_argument);
}

TEST_CASE("field_mse / field_mae") {
    Matrix a(4, 5), b(4, 5);
    CHECK(field_mse(a, b) == 0.0);
    CHECK(field_mae(a, b) == 0.0);

    for (auto& v : b.data) v = 0.25;
    CHECK(field_mse(a, b) == doctest::Approx(0.0625).epsilon(1e-15));
    CHECK(field_mae(a, b) == doctest::Approx(0.25).epsilon(1e-15));

    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> d(-1, 1);
    for (auto& v : a.data) v = d(rng);
    for (auto& v : b.data) v = d(rng);
    double mse = 0, mae = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        mse += (a.data[i] - b.data[i]) * (a.data[i] - b.data[i]);
        mae += std::abs(a.data[i] - b.data[i]);
    }
    mse /= static_cast<double>(a.size());
    mae /= static_cast<double>(a.size());
    CHECK(field_mse(a, b) == doctest::Approx(mse).epsilon(1e-13));
    CHECK(field_mae(a, b) == doctest::Approx(mae).epsilon(1e-13));

    Matrix c(3, 3);
    CHECK_THROWS_AS(field_mse(a, c), std::invalid_argument);
}

TEST_CASE("scenario source drives a plume downwind") {
    phys::Scenario s = diffusion_only();
    s.wind.u = 0.7;
    s.wind.v = 0.7;
    s.source.sources = {{4, 4, 1.0}};
    s.source.sigma = 0.25;
    GridSpec g;
    g.nx = g.ny = 96;
    FieldSeries fs = solve_forward(s, g, {3.0});
    const Matrix& f = fs.snaps.back().c;
    // peak should sit near (4,4) and be advected slightly downwind
    int bi = 0, bj = 0;
    double best = -1;
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i)
            if (f.at(j, i) > best) {
                best = f.at(j, i);
                bi = i;
                bj = j;
            }
    const double px = fs.node_x(bi), py = fs.node_y(bj);
    CHECK(px > 3.9);
    CHECK(px < 5.5);
    CHECK(py > 3.9);
    CHECK(py < 5.5);
    CHECK(best > 0.01);
    // downwind concentration exceeds upwind at equal distance
    ObservationSet o = sample_observations(fs, {{5.2, 5.2}, {2.8, 2.8}}, {3.0}, 0.0, 1);
    CHECK(o.samples[0].c > o.samples[1].c);
}
