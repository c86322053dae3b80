#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "plume/data.hpp"
#include "plume/matrix.hpp"
#include "plume/physics.hpp"

namespace plume::ref {

// Operator-split finite-difference scheme: explicit first-order upwind
// advection, Crank-Nicolson central diffusion via Peaceman-Rachford ADI
// sweeps, explicit source deposition, homogeneous Dirichlet boundary.
struct GridSpec {
    int nx = 128, ny = 128;  // nodes per axis, boundary included
    double dt = 0;           // 0 = derive from cfl
    double cfl = 0.5;        // advective target when deriving dt
    void validate() const;
};

struct FieldSnapshot {
    double t = 0;
    Matrix c;  // ny rows (y index) x nx cols (x index)
};

struct FieldSeries {
    phys::Domain domain;
    int nx = 0, ny = 0;
    std::vector<FieldSnapshot> snaps;

    double hx() const { return domain.width() / (nx - 1); }
    double hy() const { return domain.height() / (ny - 1); }
    double node_x(int i) const { return domain.x_min + i * hx(); }
    double node_y(int j) const { return domain.y_min + j * hy(); }
    double max_abs() const;
};

// Integrates from t=0 (field = `initial`, zero when null) far enough to cover
// every requested snapshot time. Throws on CFL violation; a non-finite field
// aborts with the step index in the message.
FieldSeries solve_forward(const phys::Scenario& scenario, const GridSpec& grid,
                          const std::vector<double>& snapshot_times,
                          const Matrix* initial = nullptr);

// Bilinear in space, linear in time between stored snapshots; optional
// additive Gaussian noise with the given seed.
ObservationSet sample_observations(const FieldSeries& fs,
                                   const std::vector<std::pair<double, double>>& sensors,
                                   const std::vector<double>& times, double noise_sd,
                                   uint64_t seed);

// c(r, t) = M/(4 pi k t) exp(-r^2 / (4 k t)); free-space point release.
std::vector<double> analytic_heat_kernel(double mass, double k, double x0, double y0,
                                         double t,
                                         std::span<const std::pair<double, double>> points);

double field_mse(const Matrix& a, const Matrix& b);
double field_mae(const Matrix& a, const Matrix& b);
// relative L2 distance ||a-b|| / ||b||
double field_rel_l2(const Matrix& a, const Matrix& b);

}  // namespace plume::ref
