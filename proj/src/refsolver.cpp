#include "plume/refsolver.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace plume::ref {

void GridSpec::validate() const {
    if (nx < 8 || ny < 8) throw std::invalid_argument("grid: nx, ny must be >= 8");
    if (dt < 0) throw std::invalid_argument("grid: dt must be positive (or 0 to derive)");
    if (!(cfl > 0) || cfl > 1) throw std::invalid_argument("grid: cfl must be in (0, 1]");
}

double FieldSeries::max_abs() const {
    double m = 0;
    for (const FieldSnapshot& s : snaps)
        for (double v : s.c.data) m = std::max(m, std::abs(v));
    return m;
}

namespace {

// max |u|, |v| over the window, sampled on a coarse space-time lattice
std::pair<double, double> wind_bound(const phys::Scenario& sc, double t_max) {
    double mu = 0, mv = 0;
    const int nt = 32, nsp = 5;
    for (int it = 0; it <= nt; ++it) {
        const double t = t_max * it / nt;
        for (int ix = 0; ix < nsp; ++ix)
            for (int iy = 0; iy < nsp; ++iy) {
                const double x =
                    sc.domain.x_min + sc.domain.width() * (ix + 0.5) / nsp;
                const double y =
                    sc.domain.y_min + sc.domain.height() * (iy + 0.5) / nsp;
                auto [u, v] = phys::wind_at(sc.wind, x, y, t);
                mu = std::max(mu, std::abs(u));
                mv = std::max(mv, std::abs(v));
            }
    }
    return {mu, mv};
}

// Thomas solve of the constant-coefficient system (1+2a) x_i - a (x_{i-1} +
// x_{i+1}) = r_i over n interior unknowns, zero Dirichlet ends.
void tridiag_const(double a, std::vector<double>& rhs, std::vector<double>& cp) {
    const size_t n = rhs.size();
    const double diag = 1.0 + 2.0 * a;
    cp.resize(n);
    double beta = diag;
    rhs[0] /= beta;
    for (size_t i = 1; i < n; ++i) {
        cp[i] = -a / beta;
        beta = diag - (-a) * cp[i];
        rhs[i] = (rhs[i] - (-a) * rhs[i - 1]) / beta;
    }
    for (size_t i = n - 1; i-- > 0;) rhs[i] -= cp[i + 1] * rhs[i + 1];
}

}  // namespace

FieldSeries solve_forward(const phys::Scenario& sc, const GridSpec& grid,
                          const std::vector<double>& snapshot_times, const Matrix* initial) {
    sc.validate();
    grid.validate();
    if (snapshot_times.empty())
        throw std::invalid_argument("solve_forward: no snapshot times requested");
    std::vector<double> wanted = snapshot_times;
    std::sort(wanted.begin(), wanted.end());
    if (wanted.front() < 0)
        throw std::invalid_argument("solve_forward: negative snapshot time");
    const double t_max = wanted.back();

    const int nx = grid.nx, ny = grid.ny;
    const double hx = sc.domain.width() / (nx - 1);
    const double hy = sc.domain.height() / (ny - 1);
    auto [u_max, v_max] = wind_bound(sc, t_max);
    const double speed = std::max({u_max / hx, v_max / hy, 1e-12});

    double dt = grid.dt;
    if (dt == 0) dt = grid.cfl / speed;
    if (speed * dt > 1.0 + 1e-12)
        throw std::invalid_argument("solve_forward: advective CFL exceeds 1 (dt too large)");

    FieldSeries out;
    out.domain = sc.domain;
    out.nx = nx;
    out.ny = ny;

    Matrix c = initial ? *initial : Matrix(ny, nx);
    if (initial && (initial->rows != ny || initial->cols != nx))
        throw std::invalid_argument("solve_forward: initial field shape mismatch");

    // static source deposition field
    Matrix src(ny, nx);
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i)
            src.at(j, i) = phys::source_at(
                sc.source, sc.domain.x_min + i * hx, sc.domain.y_min + j * hy);

    const bool static_wind = sc.wind.kind == phys::WindFieldSpec::Kind::Constant;
    Matrix uf(ny, nx), vf(ny, nx);
    auto fill_wind = [&](double t) {
        for (int j = 0; j < ny; ++j)
            for (int i = 0; i < nx; ++i) {
                auto [u, v] = phys::wind_at(sc.wind, sc.domain.x_min + i * hx,
                                            sc.domain.y_min + j * hy, t);
                uf.at(j, i) = u;
                vf.at(j, i) = v;
            }
    };
    if (static_wind) fill_wind(0);

    const double ax = sc.k * dt / (2.0 * hx * hx);
    const double ay = sc.k * dt / (2.0 * hy * hy);

    Matrix work(ny, nx), half(ny, nx);
    std::vector<double> rhs(std::max(nx, ny)), cp(std::max(nx, ny));

    auto emit_upto = [&](double t_prev, double t_now, const Matrix& prev,
                         const Matrix& now, size_t& cursor) {
        while (cursor < wanted.size() && wanted[cursor] <= t_now + 1e-12) {
            const double ts = wanted[cursor];
            const double w =
                t_now > t_prev ? std::clamp((ts - t_prev) / (t_now - t_prev), 0.0, 1.0) : 1.0;
            FieldSnapshot snap;
            snap.t = ts;
            snap.c = Matrix(ny, nx);
            for (size_t m = 0; m < snap.c.size(); ++m)
                snap.c.data[m] = (1 - w) * prev.data[m] + w * now.data[m];
            out.snaps.push_back(std::move(snap));
            ++cursor;
        }
    };

    size_t cursor = 0;
    double t = 0;
    emit_upto(0, 0, c, c, cursor);

    Matrix prev = c;
    long step = 0;
    while (cursor < wanted.size()) {
        prev = c;
        if (!static_wind) fill_wind(t);

        // explicit upwind advection + source deposit into `work`
        for (int j = 1; j < ny - 1; ++j) {
            for (int i = 1; i < nx - 1; ++i) {
                const double u = uf.at(j, i), v = vf.at(j, i);
                const double dcdx = u >= 0 ? (c.at(j, i) - c.at(j, i - 1)) / hx
                                           : (c.at(j, i + 1) - c.at(j, i)) / hx;
                const double dcdy = v >= 0 ? (c.at(j, i) - c.at(j - 1, i)) / hy
                                           : (c.at(j + 1, i) - c.at(j, i)) / hy;
                work.at(j, i) =
                    c.at(j, i) - dt * (u * dcdx + v * dcdy) + dt * src.at(j, i);
            }
        }
        for (int i = 0; i < nx; ++i) {
            work.at(0, i) = 0;
            work.at(ny - 1, i) = 0;
        }
        for (int j = 0; j < ny; ++j) {
            work.at(j, 0) = 0;
            work.at(j, nx - 1) = 0;
        }

        // ADI half-step 1: implicit x, explicit y
        for (int j = 1; j < ny - 1; ++j) {
            rhs.assign(static_cast<size_t>(nx - 2), 0.0);
            for (int i = 1; i < nx - 1; ++i)
                rhs[i - 1] = work.at(j, i) +
                             ay * (work.at(j - 1, i) - 2 * work.at(j, i) + work.at(j + 1, i));
            tridiag_const(ax, rhs, cp);
            for (int i = 1; i < nx - 1; ++i) half.at(j, i) = rhs[i - 1];
        }
        for (int i = 0; i < nx; ++i) {
            half.at(0, i) = 0;
            half.at(ny - 1, i) = 0;
        }
        for (int j = 0; j < ny; ++j) {
            half.at(j, 0) = 0;
            half.at(j, nx - 1) = 0;
        }

        // ADI half-step 2: implicit y, explicit x
        for (int i = 1; i < nx - 1; ++i) {
            rhs.assign(static_cast<size_t>(ny - 2), 0.0);
            for (int j = 1; j < ny - 1; ++j)
                rhs[j - 1] = half.at(j, i) +
                             ax * (half.at(j, i - 1) - 2 * half.at(j, i) + half.at(j, i + 1));
            tridiag_const(ay, rhs, cp);
            for (int j = 1; j < ny - 1; ++j) c.at(j, i) = rhs[j - 1];
        }
        for (int i = 0; i < nx; ++i) {
            c.at(0, i) = 0;
            c.at(ny - 1, i) = 0;
        }
        for (int j = 0; j < ny; ++j) {
            c.at(j, 0) = 0;
            c.at(j, nx - 1) = 0;
        }

        ++step;
        const double t_new = t + dt;
        for (double v : c.data)
            if (!std::isfinite(v))
                throw std::runtime_error("solve_forward: non-finite field at step " +
                                         std::to_string(step));
        emit_upto(t, t_new, prev, c, cursor);
        t = t_new;
    }
    return out;
}

ObservationSet sample_observations(const FieldSeries& fs,
                                   const std::vector<std::pair<double, double>>& sensors,
                                   const std::vector<double>& times, double noise_sd,
                                   uint64_t seed) {
    if (fs.snaps.empty()) throw std::invalid_argument("sample_observations: empty series");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, noise_sd > 0 ? noise_sd : 1.0);

    auto value_at = [&](const Matrix& f, double x, double y) {
        if (!fs.domain.contains(x, y))
            throw std::out_of_range("sample_observations: sensor outside domain");
        const double fx = (x - fs.domain.x_min) / fs.hx();
        const double fy = (y - fs.domain.y_min) / fs.hy();
        const int i0 = std::min(static_cast<int>(fx), fs.nx - 2);
        const int j0 = std::min(static_cast<int>(fy), fs.ny - 2);
        const double axw = fx - i0, ayw = fy - j0;
        return (1 - ayw) * ((1 - axw) * f.at(j0, i0) + axw * f.at(j0, i0 + 1)) +
               ayw * ((1 - axw) * f.at(j0 + 1, i0) + axw * f.at(j0 + 1, i0 + 1));
    };

    ObservationSet out;
    out.provenance = Provenance::Synthetic;
    for (double t : times) {
        if (t < fs.snaps.front().t - 1e-9 || t > fs.snaps.back().t + 1e-9)
            throw std::out_of_range("sample_observations: time outside series");
        size_t hi = 0;
        while (hi + 1 < fs.snaps.size() && fs.snaps[hi].t < t) ++hi;
        const size_t lo = hi == 0 ? 0 : hi - 1;
        const double span = fs.snaps[hi].t - fs.snaps[lo].t;
        const double w = span > 0 ? std::clamp((t - fs.snaps[lo].t) / span, 0.0, 1.0) : 0.0;
        for (const auto& [sx, sy] : sensors) {
            const double v = (1 - w) * value_at(fs.snaps[lo].c, sx, sy) +
                             w * value_at(fs.snaps[hi].c, sx, sy);
            Observation o{sx, sy, t, v};
            if (noise_sd > 0) o.c += noise(rng);
            out.samples.push_back(o);
        }
    }
    return out;
}

std::vector<double> analytic_heat_kernel(double mass, double k, double x0, double y0,
                                         double t,
                                         std::span<const std::pair<double, double>> points) {
    if (!(t > 0)) throw std::invalid_argument("heat kernel: t must be positive");
    if (!(k > 0)) throw std::invalid_argument("heat kernel: k must be positive");
    const double denom = 4.0 * std::numbers::pi * k * t;
    std::vector<double> out;
    out.reserve(points.size());
    for (const auto& [x, y] : points) {
        const double r2 = (x - x0) * (x - x0) + (y - y0) * (y - y0);
        out.push_back(mass / denom * std::exp(-r2 / (4.0 * k * t)));
    }
    return out;
}

namespace {

void check_same_shape(const Matrix& a, const Matrix& b, const char* ctx) {
    if (!a.same_shape(b)) throw std::invalid_argument(std::string(ctx) + ": shape mismatch");
}

}  // namespace

double field_mse(const Matrix& a, const Matrix& b) {
    check_same_shape(a, b, "field_mse");
    double s = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        s += d * d;
    }
    return s / static_cast<double>(a.size());
}

double field_mae(const Matrix& a, const Matrix& b) {
    check_same_shape(a, b, "field_mae");
    double s = 0;
    for (size_t i = 0; i < a.size(); ++i) s += std::abs(a.data[i] - b.data[i]);
    return s / static_cast<double>(a.size());
}

double field_rel_l2(const Matrix& a, const Matrix& b) {
    check_same_shape(a, b, "field_rel_l2");
    double num = 0, den = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        num += d * d;
        den += b.data[i] * b.data[i];
    }
    return std::sqrt(num / std::max(den, 1e-300));
}

}  // namespace plume::ref
