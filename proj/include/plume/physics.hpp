#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "plume/graph.hpp"
#include "plume/matrix.hpp"

namespace plume::phys {

struct Domain {
    double x_min = 0, x_max = 1, y_min = 0, y_max = 1;
    double width() const { return x_max - x_min; }
    double height() const { return y_max - y_min; }
    bool contains(double x, double y) const {
        return x >= x_min && x <= x_max && y >= y_min && y <= y_max;
    }
};

struct CharacteristicScales {
    double C = 1.0;  // concentration
    double L = 1.0;  // length
    double U = 1.0;  // velocity
    void validate() const;
};

// Time-dependent gridded wind: per-sample uniform rasters over `extent`,
// bilinear in space and linear in time between samples.
struct GriddedWind {
    Domain extent;
    int nx = 0, ny = 0;            // raster nodes per axis
    std::vector<double> times;     // strictly increasing
    std::vector<Matrix> u_fields;  // one ny x nx raster per time sample
    std::vector<Matrix> v_fields;
};

struct WindFieldSpec {
    enum class Kind { Constant, Analytic, Gridded };
    Kind kind = Kind::Constant;
    // Constant
    double u = 0, v = 0;
    // Analytic family "rotating": u = a + b*cos(omega t), v = a + b*sin(omega t)
    std::string family = "rotating";
    double a = 0.2, b = 0.5, omega = 0.7853981633974483;
    // Gridded
    GriddedWind grid;
};

struct PointSource {
    double x = 0, y = 0;
    double amplitude = 1.0;
};

// Sum of isotropic Gaussian bumps; differentiable in the centers so they can
// serve as trainable parameters.
struct SourceModel {
    std::vector<PointSource> sources;
    double sigma = 0.25;  // same units as the domain
    bool train_x = true, train_y = true, train_amplitude = false;
    void validate(const Domain& d) const;
};

enum class BoundaryKind { DirichletZero };

struct Scenario {
    std::string name;
    Domain domain;
    double t_start = 0, t_end = 0;  // observation window; equal = single instant
    double k = 0.5;                 // diffusion coefficient
    WindFieldSpec wind;
    SourceModel source;
    CharacteristicScales scales;
    BoundaryKind bc = BoundaryKind::DirichletZero;
    // initial condition: c = 0 everywhere (release starts at t = 0)

    bool single_instant() const { return t_start == t_end; }
    void validate() const;
};

// Pe = L*U/k
double peclet(const CharacteristicScales& s, double k);

// L = longest domain side, U = time-averaged mean wind magnitude over the
// simulation window, C = caller-supplied concentration scale (max of the
// reference field or observations).
CharacteristicScales default_scales(const Scenario& s, double concentration_scale);

std::pair<double, double> wind_at(const WindFieldSpec& w, double x, double y, double t);

double source_at(const SourceModel& m, double x, double y);
// d(source)/d(center) for every source, as (d/dx_i, d/dy_i) pairs.
std::vector<std::pair<double, double>> source_center_grad(const SourceModel& m, double x,
                                                          double y);

enum class ResidualForm { Dimensional, Nondimensional };

// Dimensional: c_t + u c_x + v c_y - k (c_xx + c_yy) - s
// Nondimensional: same with the diffusion term scaled by 1/Pe (k_or_pe = Pe).
double residual(double c_t, double c_x, double c_y, double c_xx, double c_yy, double u,
                double v, double s, double k_or_pe, ResidualForm form);

// Bidirectional variable maps of the nondimensionalization and its inverse.
struct Nondimensionalizer {
    CharacteristicScales s;
    explicit Nondimensionalizer(CharacteristicScales scales);

    double x_star(double x) const { return x / s.L; }
    double t_star(double t) const { return t * s.U / s.L; }
    double c_star(double c) const { return c / s.C; }
    double u_star(double u) const { return u / s.U; }
    double sigma_star(double sigma) const { return sigma / s.L; }
    // source term: s* = s L / (C U)
    double source_star(double src) const { return src * s.L / (s.C * s.U); }

    double x_phys(double xs) const { return xs * s.L; }
    double t_phys(double ts) const { return ts * s.L / s.U; }
    double c_phys(double cs) const { return cs * s.C; }
    double u_phys(double us) const { return us * s.U; }
    double sigma_phys(double ss) const { return ss * s.L; }
    double source_phys(double ss) const { return ss * s.C * s.U / s.L; }
};

// Scenario-level transform per the variable maps above; exact inverse of
// redimensionalize_scenario. Constant and analytic winds are rescaled in
// closed form; gridded rasters are rescaled samplewise.
Scenario nondimensionalize_scenario(const Scenario& s);
Scenario redimensionalize_scenario(const Scenario& star, const CharacteristicScales& scales);

// Graph subexpression for the nondimensional source field at fixed sample
// coordinates. Center/amplitude nodes may be parameters (trainable) or
// constants; xs/ys are 1xN constants.
struct SourceNodes {
    std::vector<int> x_nodes, y_nodes, amp_nodes;  // one per source
    int field = -1;                                // 1xN total emission
};
SourceNodes append_source_field(ad::Graph& g, const SourceModel& nondim_model,
                                const std::vector<double>& xs, const std::vector<double>& ys);

}  // namespace plume::phys
