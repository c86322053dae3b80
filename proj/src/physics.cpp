#include "plume/physics.hpp"

#include <cmath>
#include <stdexcept>

namespace plume::phys {

void CharacteristicScales::validate() const {
    if (!(C > 0) || !(L > 0) || !(U > 0))
        throw std::invalid_argument("characteristic scales must be strictly positive");
}

void SourceModel::validate(const Domain& d) const {
    if (!(sigma > 0)) throw std::invalid_argument("source sigma must be positive");
    for (const PointSource& p : sources) {
        if (p.amplitude < 0) throw std::invalid_argument("source amplitude must be >= 0");
        if (!d.contains(p.x, p.y))
            throw std::invalid_argument("source center outside the domain");
    }
}

void Scenario::validate() const {
    if (!(domain.width() > 0) || !(domain.height() > 0))
        throw std::invalid_argument("scenario: degenerate domain");
    if (!(k > 0)) throw std::invalid_argument("scenario: diffusion coefficient must be > 0");
    if (t_end < t_start) throw std::invalid_argument("scenario: t_end before t_start");
    source.validate(domain);
    scales.validate();
}

double peclet(const CharacteristicScales& s, double k) {
    if (!(k > 0)) throw std::invalid_argument("peclet: k must be positive");
    return s.L * s.U / k;
}

CharacteristicScales default_scales(const Scenario& s, double concentration_scale) {
    CharacteristicScales out;
    out.L = std::max(s.domain.width(), s.domain.height());
    // mean wind magnitude, averaged over the window at the domain centre
    const double t0 = 0.0, t1 = std::max(s.t_end, 1e-12);
    const int samples = 64;
    double acc = 0;
    const double cx = 0.5 * (s.domain.x_min + s.domain.x_max);
    const double cy = 0.5 * (s.domain.y_min + s.domain.y_max);
    for (int i = 0; i < samples; ++i) {
        const double t = t0 + (t1 - t0) * (i + 0.5) / samples;
        auto [u, v] = wind_at(s.wind, cx, cy, t);
        acc += std::hypot(u, v);
    }
    out.U = acc / samples;
    if (!(out.U > 0)) out.U = 1.0;
    out.C = concentration_scale > 0 ? concentration_scale : 1.0;
    return out;
}

namespace {

std::pair<double, double> gridded_wind_at(const GriddedWind& g, double x, double y,
                                          double t) {
    if (g.times.empty() || g.nx < 2 || g.ny < 2)
        throw std::invalid_argument("gridded wind: empty field");
    if (t < g.times.front() - 1e-12 || t > g.times.back() + 1e-12)
        throw std::out_of_range("gridded wind: time outside coverage");
    if (!g.extent.contains(x, y))
        throw std::out_of_range("gridded wind: point outside coverage");

    size_t hi = 0;
    while (hi + 1 < g.times.size() && g.times[hi] < t) ++hi;
    const size_t lo = hi == 0 ? 0 : hi - 1;
    const double Dt = g.times[hi] - g.times[lo];
    const double wt = Dt > 0 ? std::clamp((t - g.times[lo]) / Dt, 0.0, 1.0) : 0.0;

    const double fx = (x - g.extent.x_min) / g.extent.width() * (g.nx - 1);
    const double fy = (y - g.extent.y_min) / g.extent.height() * (g.ny - 1);
    const int i0 = std::min(static_cast<int>(fx), g.nx - 2);
    const int j0 = std::min(static_cast<int>(fy), g.ny - 2);
    const double ax = fx - i0, ay = fy - j0;

    auto bilinear = [&](const Matrix& f) {
        return (1 - ay) * ((1 - ax) * f.at(j0, i0) + ax * f.at(j0, i0 + 1)) +
               ay * ((1 - ax) * f.at(j0 + 1, i0) + ax * f.at(j0 + 1, i0 + 1));
    };
    auto at_sample = [&](size_t s) {
        return std::pair<double, double>{bilinear(g.u_fields[s]), bilinear(g.v_fields[s])};
    };
    auto [u0, v0] = at_sample(lo);
    auto [u1, v1] = at_sample(hi);
    return {(1 - wt) * u0 + wt * u1, (1 - wt) * v0 + wt * v1};
}

}  // namespace

std::pair<double, double> wind_at(const WindFieldSpec& w, double x, double y, double t) {
    switch (w.kind) {
        case WindFieldSpec::Kind::Constant:
            return {w.u, w.v};
        case WindFieldSpec::Kind::Analytic:
            if (w.family != "rotating")
                throw std::invalid_argument("unknown analytic wind family: " + w.family);
            return {w.a + w.b * std::cos(w.omega * t), w.a + w.b * std::sin(w.omega * t)};
        case WindFieldSpec::Kind::Gridded:
            return gridded_wind_at(w.grid, x, y, t);
    }
    return {0, 0};
}

double source_at(const SourceModel& m, double x, double y) {
    const double inv = 1.0 / (2.0 * m.sigma * m.sigma);
    double s = 0;
    for (const PointSource& p : m.sources) {
        const double dx = x - p.x, dy = y - p.y;
        s += p.amplitude * std::exp(-(dx * dx + dy * dy) * inv);
    }
    return s;
}

std::vector<std::pair<double, double>> source_center_grad(const SourceModel& m, double x,
                                                          double y) {
    const double inv = 1.0 / (2.0 * m.sigma * m.sigma);
    std::vector<std::pair<double, double>> g;
    g.reserve(m.sources.size());
    for (const PointSource& p : m.sources) {
        const double dx = x - p.x, dy = y - p.y;
        const double e = p.amplitude * std::exp(-(dx * dx + dy * dy) * inv);
        // d/d(center) = +2*(coord - center)*inv * e
        g.emplace_back(2.0 * dx * inv * e, 2.0 * dy * inv * e);
    }
    return g;
}

double residual(double c_t, double c_x, double c_y, double c_xx, double c_yy, double u,
                double v, double s, double k_or_pe, ResidualForm form) {
    const double lap = c_xx + c_yy;
    const double diff = form == ResidualForm::Dimensional ? k_or_pe * lap : lap / k_or_pe;
    return c_t + u * c_x + v * c_y - diff - s;
}

Nondimensionalizer::Nondimensionalizer(CharacteristicScales scales) : s(scales) {
    s.validate();
}

Scenario nondimensionalize_scenario(const Scenario& sc) {
    Nondimensionalizer n(sc.scales);
    Scenario out = sc;
    out.name = sc.name + "*";
    out.domain = {n.x_star(sc.domain.x_min), n.x_star(sc.domain.x_max),
                  n.x_star(sc.domain.y_min), n.x_star(sc.domain.y_max)};
    out.t_start = n.t_star(sc.t_start);
    out.t_end = n.t_star(sc.t_end);
    // k is reported through the Peclet number in nondimensional form; store
    // the equivalent k* = 1/Pe so residual(form=Dimensional) stays usable.
    out.k = 1.0 / peclet(sc.scales, sc.k);

    switch (sc.wind.kind) {
        case WindFieldSpec::Kind::Constant:
            out.wind.u = n.u_star(sc.wind.u);
            out.wind.v = n.u_star(sc.wind.v);
            break;
        case WindFieldSpec::Kind::Analytic:
            out.wind.a = n.u_star(sc.wind.a);
            out.wind.b = n.u_star(sc.wind.b);
            out.wind.omega = sc.wind.omega * sc.scales.L / sc.scales.U;
            break;
        case WindFieldSpec::Kind::Gridded: {
            GriddedWind& g = out.wind.grid;
            g.extent = {n.x_star(g.extent.x_min), n.x_star(g.extent.x_max),
                        n.x_star(g.extent.y_min), n.x_star(g.extent.y_max)};
            for (double& t : g.times) t = n.t_star(t);
            for (Matrix& f : g.u_fields)
                for (double& v : f.data) v = n.u_star(v);
            for (Matrix& f : g.v_fields)
                for (double& v : f.data) v = n.u_star(v);
            break;
        }
    }
    out.source.sigma = n.sigma_star(sc.source.sigma);
    for (PointSource& p : out.source.sources) {
        p.x = n.x_star(p.x);
        p.y = n.x_star(p.y);
        p.amplitude = n.source_star(p.amplitude);
    }
    out.scales = {1.0, 1.0, 1.0};
    return out;
}

Scenario redimensionalize_scenario(const Scenario& star, const CharacteristicScales& scales) {
    Nondimensionalizer n(scales);
    Scenario out = star;
    if (!out.name.empty() && out.name.back() == '*') out.name.pop_back();
    out.domain = {n.x_phys(star.domain.x_min), n.x_phys(star.domain.x_max),
                  n.x_phys(star.domain.y_min), n.x_phys(star.domain.y_max)};
    out.t_start = n.t_phys(star.t_start);
    out.t_end = n.t_phys(star.t_end);
    out.k = star.k * scales.L * scales.U;  // k* = 1/Pe = k/(LU)

    switch (star.wind.kind) {
        case WindFieldSpec::Kind::Constant:
            out.wind.u = n.u_phys(star.wind.u);
            out.wind.v = n.u_phys(star.wind.v);
            break;
        case WindFieldSpec::Kind::Analytic:
            out.wind.a = n.u_phys(star.wind.a);
            out.wind.b = n.u_phys(star.wind.b);
            out.wind.omega = star.wind.omega * scales.U / scales.L;
            break;
        case WindFieldSpec::Kind::Gridded: {
            GriddedWind& g = out.wind.grid;
            g.extent = {n.x_phys(g.extent.x_min), n.x_phys(g.extent.x_max),
                        n.x_phys(g.extent.y_min), n.x_phys(g.extent.y_max)};
            for (double& t : g.times) t = n.t_phys(t);
            for (Matrix& f : g.u_fields)
                for (double& v : f.data) v = n.u_phys(v);
            for (Matrix& f : g.v_fields)
                for (double& v : f.data) v = n.u_phys(v);
            break;
        }
    }
    out.source.sigma = n.sigma_phys(star.source.sigma);
    for (PointSource& p : out.source.sources) {
        p.x = n.x_phys(p.x);
        p.y = n.x_phys(p.y);
        p.amplitude = n.source_phys(p.amplitude);
    }
    out.scales = scales;
    return out;
}

SourceNodes append_source_field(ad::Graph& g, const SourceModel& m,
                                const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size())
        throw std::invalid_argument("append_source_field: coordinate arrays differ in size");
    const int n = static_cast<int>(xs.size());
    Matrix xm(1, n), ym(1, n);
    for (int i = 0; i < n; ++i) {
        xm.at(0, i) = xs[i];
        ym.at(0, i) = ys[i];
    }
    const int xc = g.constant(std::move(xm), "src.xs");
    const int yc = g.constant(std::move(ym), "src.ys");
    const double inv = -1.0 / (2.0 * m.sigma * m.sigma);

    SourceNodes out;
    int total = -1;
    for (size_t i = 0; i < m.sources.size(); ++i) {
        const PointSource& p = m.sources[i];
        const std::string tag = "src" + std::to_string(i);
        int x0 = m.train_x ? g.parameter(tag + ".x", 1, 1)
                           : g.constant(Matrix::scalar(p.x), tag + ".x");
        int y0 = m.train_y ? g.parameter(tag + ".y", 1, 1)
                           : g.constant(Matrix::scalar(p.y), tag + ".y");
        int r2 = g.add(g.unary(ad::Unary::Square, g.sub(xc, x0)),
                       g.unary(ad::Unary::Square, g.sub(yc, y0)));
        int bump = g.unary(ad::Unary::Exp, g.scale(r2, inv));
        int term;
        int amp = -1;
        if (m.train_amplitude) {
            amp = g.parameter(tag + ".amp", 1, 1);
            term = g.mul(bump, amp);
        } else {
            term = g.scale(bump, p.amplitude);
        }
        out.x_nodes.push_back(x0);
        out.y_nodes.push_back(y0);
        out.amp_nodes.push_back(amp);
        total = total < 0 ? term : g.add(total, term);
    }
    if (total < 0) total = g.zeros(1, n);
    out.field = total;
    return out;
}

}  // namespace plume::phys
