#include "plume/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <stdexcept>

namespace plume::train {

void LossWeights::validate() const {
    if (pde < 0 || data < 0 || bc < 0 || fo < 0)
        throw std::invalid_argument("loss weights must be nonnegative");
    if (pde == 0 && data == 0 && bc == 0 && fo == 0)
        throw std::invalid_argument("at least one loss weight must be positive");
}

CollocationSet sample_collocation(const phys::Scenario& sc, int n_interior, int n_boundary,
                                  uint64_t seed) {
    if (n_interior < 0 || n_boundary < 0)
        throw std::invalid_argument("sample_collocation: negative counts");
    sc.validate();
    CollocationSet out;
    out.seed = seed;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ux(sc.domain.x_min, sc.domain.x_max);
    std::uniform_real_distribution<double> uy(sc.domain.y_min, sc.domain.y_max);
    const bool steady = sc.single_instant();
    std::uniform_real_distribution<double> ut(0.0, sc.t_end);

    out.interior.reserve(n_interior);
    for (int i = 0; i < n_interior; ++i)
        out.interior.push_back({ux(rng), uy(rng), steady ? sc.t_end : ut(rng)});

    const int n_spatial = steady ? n_boundary : n_boundary / 2;
    std::uniform_real_distribution<double> uside(0.0, 1.0);
    for (int i = 0; i < n_spatial; ++i) {
        const int side = static_cast<int>(rng() % 4);
        const double a = uside(rng);
        Point3 p;
        p.t = steady ? sc.t_end : ut(rng);
        switch (side) {
            case 0: p.x = sc.domain.x_min; p.y = sc.domain.y_min + a * sc.domain.height(); break;
            case 1: p.x = sc.domain.x_max; p.y = sc.domain.y_min + a * sc.domain.height(); break;
            case 2: p.y = sc.domain.y_min; p.x = sc.domain.x_min + a * sc.domain.width(); break;
            default: p.y = sc.domain.y_max; p.x = sc.domain.x_min + a * sc.domain.width(); break;
        }
        out.boundary.push_back(p);
    }
    if (!steady) {
        const int n_initial = n_boundary - n_spatial;
        for (int i = 0; i < n_initial; ++i) out.initial.push_back({ux(rng), uy(rng), 0.0});
    }
    return out;
}

LossBreakdown total_loss(double pde, double data, double bc, double fo,
                         const LossWeights& w) {
    w.validate();
    if (pde < 0 || data < 0 || bc < 0 || fo < 0)
        throw std::invalid_argument("total_loss: negative loss term");
    LossBreakdown b;
    b.pde = pde;
    b.data = data;
    b.bc = bc;
    b.fo = fo;
    b.total = ((w.pde * pde + w.data * data) + w.bc * bc) + w.fo * fo;
    return b;
}

LossWeights propose_weights(const LossBreakdown& parts, const LossWeights& current) {
    LossWeights out = current;
    if (!(parts.pde > 0) || !(current.pde > 0)) return out;
    const double ref = current.pde * parts.pde;
    auto propose = [&](double part, double cur) {
        if (!(part > 0) || !(cur > 0)) return cur;
        return std::pow(10.0, std::round(std::log10(ref / part)));
    };
    out.data = propose(parts.data, current.data);
    out.bc = propose(parts.bc, current.bc);
    out.fo = propose(parts.fo, current.fo);
    return out;
}

void adam_step(std::vector<double>& w, const std::vector<double>& grad, AdamState& state,
               const AdamParams& p) {
    if (w.size() != grad.size()) throw std::invalid_argument("adam_step: size mismatch");
    if (state.m.empty()) {
        state.m.assign(w.size(), 0.0);
        state.v.assign(w.size(), 0.0);
    }
    ++state.t;
    const double bc1 = 1.0 - std::pow(p.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(p.beta2, static_cast<double>(state.t));
    for (size_t i = 0; i < w.size(); ++i) {
        state.m[i] = p.beta1 * state.m[i] + (1 - p.beta1) * grad[i];
        state.v[i] = p.beta2 * state.v[i] + (1 - p.beta2) * grad[i] * grad[i];
        const double mhat = state.m[i] / bc1;
        const double vhat = state.v[i] / bc2;
        w[i] -= p.lr * mhat / (std::sqrt(vhat) + p.eps);
    }
}

// ---------------------------------------------------------------------------
// L-BFGS
// ---------------------------------------------------------------------------

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm2(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

}  // namespace

Lbfgs::Lbfgs(LbfgsParams params, size_t n) : p_(params), n_(n) {
    if (p_.history < 1) throw std::invalid_argument("lbfgs: history must be >= 1");
}

StepStatus Lbfgs::step(const LossFn& fn, std::vector<double>& w, double& f,
                       std::vector<double>& g) {
    if (w.size() != n_ || g.size() != n_) throw std::invalid_argument("lbfgs: size mismatch");
    if (p_.grad_tol > 0 && norm2(g) < p_.grad_tol) return StepStatus::Converged;

    // two-loop recursion for d = -H g
    std::vector<double> d = g;
    const size_t m = s_.size();
    std::vector<double> alpha(m);
    for (size_t i = m; i-- > 0;) {
        alpha[i] = rho_[i] * dot(s_[i], d);
        for (size_t j = 0; j < n_; ++j) d[j] -= alpha[i] * y_[i][j];
    }
    if (m > 0) {
        const double gamma = dot(s_[m - 1], y_[m - 1]) / dot(y_[m - 1], y_[m - 1]);
        for (double& v : d) v *= gamma;
    }
    for (size_t i = 0; i < m; ++i) {
        const double beta = rho_[i] * dot(y_[i], d);
        for (size_t j = 0; j < n_; ++j) d[j] += s_[i][j] * (alpha[i] - beta);
    }
    for (double& v : d) v = -v;

    double slope0 = dot(g, d);
    if (slope0 >= 0) {
        // stale curvature; fall back to steepest descent
        s_.clear();
        y_.clear();
        rho_.clear();
        for (size_t j = 0; j < n_; ++j) d[j] = -g[j];
        slope0 = dot(g, d);
        if (slope0 >= 0) return StepStatus::Converged;  // zero gradient
    }

    const double f0 = f;
    const std::vector<double> w0 = w, g0 = g;

    std::vector<double> wt(n_), gt(n_);
    double ft = 0;
    int evals = 0;
    double last_eval_a = -1;
    auto eval_at = [&](double a) -> bool {
        for (size_t j = 0; j < n_; ++j) wt[j] = w0[j] + a * d[j];
        ++evals;
        last_eval_a = a;
        return fn(wt, ft, gt);
    };

    LineSearchRecord rec;
    rec.iteration = iter_;
    rec.f_before = f0;
    rec.slope0 = slope0;

    double accepted = -1;
    bool strong_ok = false;
    // best Armijo-satisfying point seen, as a fallback on budget exhaustion
    double best_a = -1, best_f = f0;

    auto armijo = [&](double a, double fa) { return fa <= f0 + p_.c1 * a * slope0; };

    double alpha_init = iter_ == 0 ? std::min(1.0, 1.0 / std::max(norm2(g0), 1e-12)) : 1.0;
    alpha_init = std::min(alpha_init, p_.max_step);

    double lo = 0, hi = -1;          // bracket; hi < 0 while still expanding
    double f_lo = f0, dphi_lo = slope0;
    double a = alpha_init, a_prev = 0, f_prev = f0;
    bool diverged = false;

    while (evals < p_.max_line_evals) {
        if (!eval_at(a)) {
            diverged = true;
            break;
        }
        const double dphi = dot(gt, d);
        if (armijo(a, ft) && (best_a < 0 || ft < best_f)) {
            best_a = a;
            best_f = ft;
        }
        if (hi < 0) {
            // expansion phase
            if (!armijo(a, ft) || (a_prev > 0 && ft >= f_prev)) {
                lo = a_prev;
                hi = a;
                // f_lo/dphi_lo already describe a_prev
            } else if (std::abs(dphi) <= -p_.c2 * slope0) {
                accepted = a;
                strong_ok = true;
                break;
            } else if (dphi >= 0) {
                lo = a;
                hi = a_prev;
                f_lo = ft;
                dphi_lo = dphi;
            } else {
                a_prev = a;
                f_prev = ft;
                f_lo = ft;
                dphi_lo = dphi;
                if (a >= p_.max_step) break;  // cannot expand further
                a = std::min(2 * a, p_.max_step);
                continue;
            }
        } else {
            // zoom phase
            if (!armijo(a, ft) || ft >= f_lo) {
                hi = a;
            } else {
                if (std::abs(dphi) <= -p_.c2 * slope0) {
                    accepted = a;
                    strong_ok = true;
                    break;
                }
                if (dphi * (hi - lo) >= 0) hi = lo;
                lo = a;
                f_lo = ft;
                dphi_lo = dphi;
            }
        }
        if (hi >= 0) {
            a = 0.5 * (lo + hi);
            if (std::abs(hi - lo) < 1e-14 * std::max(1.0, std::abs(lo))) break;
        }
    }
    (void)dphi_lo;

    if (diverged) {
        // restore the last finite iterate
        w = w0;
        f = f0;
        g = g0;
        rec.step = a;
        rec.f_after = f0;
        rec.wolfe_ok = false;
        log_.push_back(rec);
        return StepStatus::Diverged;
    }

    if (accepted < 0) {
        if (best_a < 0) {
            w = w0;
            f = f0;
            g = g0;
            rec.step = 0;
            rec.f_after = f0;
            rec.wolfe_ok = false;
            log_.push_back(rec);
            return StepStatus::LineSearchFailed;
        }
        accepted = best_a;  // sufficient decrease holds, curvature unverified
    }

    // make sure wt/ft/gt (and the caller's evaluation state) describe the
    // accepted point
    if (last_eval_a != accepted && !eval_at(accepted)) {
        w = w0;
        f = f0;
        g = g0;
        return StepStatus::Diverged;
    }

    std::vector<double> s(n_), yv(n_);
    for (size_t j = 0; j < n_; ++j) {
        s[j] = wt[j] - w0[j];
        yv[j] = gt[j] - g0[j];
    }
    const double sy = dot(s, yv);
    if (sy > 1e-12 * norm2(s) * norm2(yv)) {
        s_.push_back(std::move(s));
        y_.push_back(std::move(yv));
        rho_.push_back(1.0 / sy);
        if (static_cast<int>(s_.size()) > p_.history) {
            s_.erase(s_.begin());
            y_.erase(y_.begin());
            rho_.erase(rho_.begin());
        }
    }

    w = wt;
    f = ft;
    g = gt;
    ++iter_;
    rec.step = accepted;
    rec.f_after = ft;
    rec.wolfe_ok = strong_ok;
    log_.push_back(rec);
    return StepStatus::Ok;
}

// ---------------------------------------------------------------------------
// Loss graph assembly
// ---------------------------------------------------------------------------

namespace {

struct ParamBinding {
    int node = -1;
    size_t offset = 0;
    size_t count = 0;
};

struct LossAssembly {
    ad::Graph g;
    std::vector<int> net_params;
    phys::SourceNodes src;
    int colloc_input = -1, obs_input = -1, bc_input = -1;
    int pde = -1, data = -1, bc = -1, fo = -1, total = -1;
    std::vector<ParamBinding> bindings;
    size_t n_params = 0;
    size_t n_net_params = 0;

    Matrix colloc_points, obs_points, bc_points, obs_values;
};

Matrix points_matrix(const std::vector<Point3>& pts) {
    Matrix m(3, static_cast<int>(pts.size()));
    for (size_t i = 0; i < pts.size(); ++i) {
        m.at(0, static_cast<int>(i)) = pts[i].x;
        m.at(1, static_cast<int>(i)) = pts[i].y;
        m.at(2, static_cast<int>(i)) = pts[i].t;
    }
    return m;
}

// star scenario + nondimensional collocation/observations -> loss graph
LossAssembly assemble_loss(const net::ArchitectureSpec& arch, const phys::Scenario& star,
                           const CollocationSet& colloc, const ObservationSet* obs,
                           const LossWeights& weights, bool steady) {
    weights.validate();
    const bool fo_head = arch.heads == net::OutputHeads::FoPinn;
    if (weights.fo > 0 && !fo_head)
        throw std::invalid_argument("loss assembly: fo weight requires the fo_pinn head");
    if ((weights.pde > 0 || weights.fo > 0) && colloc.interior.empty())
        throw std::invalid_argument("loss assembly: pde weight with zero collocation points");
    if (weights.data > 0 && (!obs || obs->empty()))
        throw std::invalid_argument("loss assembly: data weight with no observations");
    const size_t n_bc_pts = colloc.boundary.size() + colloc.initial.size();
    if (weights.bc > 0 && n_bc_pts == 0)
        throw std::invalid_argument("loss assembly: bc weight with zero boundary points");

    LossAssembly la;
    ad::Graph& g = la.g;
    la.net_params = net::make_param_nodes(g, arch);

    const bool need_pde = weights.pde > 0;
    const bool need_fo = weights.fo > 0;

    if (need_pde || need_fo) {
        const int n = static_cast<int>(colloc.interior.size());
        la.colloc_points = points_matrix(colloc.interior);
        la.colloc_input = g.input("colloc", 3, n);
        net::TrunkRefs trunk = net::append_trunk(g, arch, la.net_params, la.colloc_input);

        const std::vector<double> ex = {1, 0, 0}, ey = {0, 1, 0}, et = {0, 0, 1};
        int cx, cy, ct = -1, lap_a = -1, lap_b = -1;
        if (fo_head) {
            auto tx = ad::tangent(g, la.colloc_input, ex, {trunk.c, trunk.gx});
            auto ty = ad::tangent(g, la.colloc_input, ey, {trunk.c, trunk.gy});
            cx = tx.of(trunk.c);
            cy = ty.of(trunk.c);
            lap_a = tx.of(trunk.gx);
            lap_b = ty.of(trunk.gy);
            auto tt = ad::tangent(g, la.colloc_input, et, {trunk.c});
            ct = tt.of(trunk.c);
        } else {
            auto tx = ad::tangent(g, la.colloc_input, ex, {trunk.c});
            cx = tx.of(trunk.c);
            lap_a = ad::tangent(g, la.colloc_input, ex, {cx}).of(cx);
            auto ty = ad::tangent(g, la.colloc_input, ey, {trunk.c});
            cy = ty.of(trunk.c);
            lap_b = ad::tangent(g, la.colloc_input, ey, {cy}).of(cy);
            if (!steady) ct = ad::tangent(g, la.colloc_input, et, {trunk.c}).of(trunk.c);
        }

        if (need_pde) {
            // wind and source sampled at the collocation points
            Matrix uw(1, n), vw(1, n);
            std::vector<double> xs(n), ys(n);
            for (int i = 0; i < n; ++i) {
                const Point3& p = colloc.interior[i];
                auto [u, v] = phys::wind_at(star.wind, p.x, p.y, p.t);
                uw.at(0, i) = u;
                vw.at(0, i) = v;
                xs[i] = p.x;
                ys[i] = p.y;
            }
            la.src = phys::append_source_field(g, star.source, xs, ys);

            const int ucx = g.mul(g.constant(std::move(uw), "wind.u"),
                                  fo_head ? trunk.gx : cx);
            const int vcy = g.mul(g.constant(std::move(vw), "wind.v"),
                                  fo_head ? trunk.gy : cy);
            const int advection = g.add(ucx, vcy);
            const int laplacian = g.add(lap_a, lap_b);
            // star.k holds 1/Pe for a nondimensionalized scenario
            int r = g.sub(g.sub(advection, g.scale(laplacian, star.k)), la.src.field);
            if (!steady) r = g.add(fo_head ? trunk.gt : ct, r);
            la.pde = g.mean(g.unary(ad::Unary::Square, r));
        }

        if (need_fo) {
            const int dx = g.mean(g.unary(ad::Unary::Square, g.sub(trunk.gx, cx)));
            const int dy = g.mean(g.unary(ad::Unary::Square, g.sub(trunk.gy, cy)));
            const int dt = g.mean(g.unary(ad::Unary::Square, g.sub(trunk.gt, ct)));
            la.fo = g.scale(g.add(g.add(dx, dy), dt), 1.0 / 3.0);
        }
    }

    if (weights.data > 0) {
        const int n = static_cast<int>(obs->size());
        std::vector<Point3> pts(obs->size());
        Matrix cv(1, n);
        for (int i = 0; i < n; ++i) {
            const Observation& o = obs->samples[i];
            pts[i] = {o.x, o.y, o.t};
            cv.at(0, i) = o.c;
        }
        la.obs_points = points_matrix(pts);
        la.obs_values = cv;
        la.obs_input = g.input("obs", 3, n);
        net::TrunkRefs trunk = net::append_trunk(g, arch, la.net_params, la.obs_input);
        la.data = g.mean(
            g.unary(ad::Unary::Square, g.sub(trunk.c, g.constant(std::move(cv), "obs.c"))));
    }

    if (weights.bc > 0) {
        std::vector<Point3> pts = colloc.boundary;
        pts.insert(pts.end(), colloc.initial.begin(), colloc.initial.end());
        la.bc_points = points_matrix(pts);
        la.bc_input = g.input("bcpts", 3, static_cast<int>(pts.size()));
        net::TrunkRefs trunk = net::append_trunk(g, arch, la.net_params, la.bc_input);
        // homogeneous Dirichlet boundary and zero initial field
        la.bc = g.mean(g.unary(ad::Unary::Square, trunk.c));
    }

    // total in fixed association order: ((pde + data) + bc) + fo
    int total = -1;
    auto add_term = [&](int part, double weight) {
        if (part < 0 || weight == 0) return;
        const int term = g.scale(part, weight);
        total = total < 0 ? term : g.add(total, term);
    };
    add_term(la.pde, weights.pde);
    add_term(la.data, weights.data);
    add_term(la.bc, weights.bc);
    add_term(la.fo, weights.fo);
    if (total < 0) throw std::invalid_argument("loss assembly: no active loss term");
    la.total = total;
    g.mark_output(total);

    // flat parameter layout: network tensors, then trainable source parameters
    size_t off = 0;
    for (int node : la.net_params) {
        const ad::Shape& s = g.node(node).shape;
        la.bindings.push_back({node, off, s.count()});
        off += s.count();
    }
    la.n_net_params = off;
    auto bind_src = [&](int node) {
        if (node >= 0 && g.node(node).op == ad::Op::Parameter) {
            la.bindings.push_back({node, off, 1});
            off += 1;
        }
    };
    for (size_t i = 0; i < la.src.x_nodes.size(); ++i) {
        bind_src(la.src.x_nodes[i]);
        bind_src(la.src.y_nodes[i]);
        bind_src(la.src.amp_nodes[i]);
    }
    la.n_params = off;
    return la;
}

}  // namespace

// ---------------------------------------------------------------------------
// Trainer
// ---------------------------------------------------------------------------

struct Trainer::Impl {
    net::NetworkState* state;
    phys::Scenario scenario;  // physical
    phys::Scenario star;      // nondimensional
    TrainConfig cfg;
    bool steady = false;
    ObservationSet obs_star;
    bool has_obs = false;
    CollocationSet colloc_star;
    LossAssembly la;
    std::unique_ptr<ad::Session> session;
    std::vector<double> w;
    LossBreakdown last_parts;

    Impl(net::NetworkState& st, const phys::Scenario& sc, const ObservationSet* obs,
         const TrainConfig& c)
        : state(&st), scenario(sc), cfg(c) {
        scenario.validate();
        cfg.weights.validate();
        steady = scenario.single_instant();
        star = phys::nondimensionalize_scenario(scenario);
        star.source.train_x = cfg.train_source && scenario.source.train_x;
        star.source.train_y = cfg.train_source && scenario.source.train_y;
        star.source.train_amplitude = cfg.train_source && scenario.source.train_amplitude;

        const phys::Nondimensionalizer nd(scenario.scales);
        if (obs) {
            has_obs = true;
            obs_star.provenance = obs->provenance;
            obs_star.samples.reserve(obs->size());
            for (const Observation& o : obs->samples)
                obs_star.samples.push_back(
                    {nd.x_star(o.x), nd.x_star(o.y), nd.t_star(o.t), nd.c_star(o.c)});
        }

        CollocationSet phys_pts = sample_collocation(scenario, cfg.n_collocation,
                                                     cfg.n_boundary, cfg.collocation_seed);
        colloc_star.seed = phys_pts.seed;
        auto map_pts = [&](const std::vector<Point3>& in, std::vector<Point3>& out) {
            out.reserve(in.size());
            for (const Point3& p : in)
                out.push_back({nd.x_star(p.x), nd.x_star(p.y), nd.t_star(p.t)});
        };
        map_pts(phys_pts.interior, colloc_star.interior);
        map_pts(phys_pts.boundary, colloc_star.boundary);
        map_pts(phys_pts.initial, colloc_star.initial);

        build(cfg.weights);
    }

    void build(const LossWeights& weights) {
        la = assemble_loss(state->arch, star, colloc_star,
                           has_obs ? &obs_star : nullptr, weights, steady);
        session = std::make_unique<ad::Session>(la.g);
        if (la.colloc_input >= 0) session->bind(la.colloc_input, la.colloc_points);
        if (la.obs_input >= 0) session->bind(la.obs_input, la.obs_points);
        if (la.bc_input >= 0) session->bind(la.bc_input, la.bc_points);

        // initial flat parameter vector
        w.assign(la.n_params, 0.0);
        state->to_flat(w);
        w.resize(la.n_params, 0.0);
        init_source_params();
    }

    void init_source_params() {
        std::mt19937_64 rng(cfg.source_init_seed);
        const phys::Domain& d = star.domain;
        std::uniform_real_distribution<double> ux(d.x_min + 0.1 * d.width(),
                                                  d.x_max - 0.1 * d.width());
        std::uniform_real_distribution<double> uy(d.y_min + 0.1 * d.height(),
                                                  d.y_max - 0.1 * d.height());
        size_t bi = la.net_params.size();
        for (size_t i = 0; i < la.src.x_nodes.size(); ++i) {
            double x0 = star.source.sources[i].x;
            double y0 = star.source.sources[i].y;
            switch (cfg.source_init) {
                case SourceInit::Fixed:
                    break;
                case SourceInit::Midpoint: {
                    // stagger additional sources around the midpoint so they
                    // do not share identical gradients
                    const double ang = 2.0 * 3.14159265358979323846 * i /
                                       std::max<size_t>(la.src.x_nodes.size(), 1);
                    const double rad = i == 0 ? 0.0 : 0.08 * d.width();
                    x0 = 0.5 * (d.x_min + d.x_max) + rad * std::cos(ang);
                    y0 = 0.5 * (d.y_min + d.y_max) + rad * std::sin(ang);
                    break;
                }
                case SourceInit::RandomInterior:
                    x0 = ux(rng);
                    y0 = uy(rng);
                    break;
            }
            if (la.src.x_nodes[i] >= 0 &&
                la.g.node(la.src.x_nodes[i]).op == ad::Op::Parameter)
                w[la.bindings[bi++].offset] = x0;
            if (la.src.y_nodes[i] >= 0 &&
                la.g.node(la.src.y_nodes[i]).op == ad::Op::Parameter)
                w[la.bindings[bi++].offset] = y0;
            if (la.src.amp_nodes[i] >= 0 &&
                la.g.node(la.src.amp_nodes[i]).op == ad::Op::Parameter)
                w[la.bindings[bi++].offset] = star.source.sources[i].amplitude;
        }
    }

    bool eval(double& f, std::vector<double>& grad, std::string* detail) {
        for (const ParamBinding& b : la.bindings)
            session->bind_flat(b.node, w.data() + b.offset);
        ad::DivergenceInfo di = session->forward();
        if (di.diverged) {
            if (detail)
                *detail = "non-finite value at node " + std::to_string(di.node);
            return false;
        }
        ad::DivergenceInfo db = session->backward(la.total);
        if (db.diverged) {
            if (detail)
                *detail = "non-finite adjoint at node " + std::to_string(db.node);
            return false;
        }
        auto part = [&](int node) { return node < 0 ? 0.0 : session->value(node).data[0]; };
        last_parts = LossBreakdown{};
        last_parts.pde = part(la.pde);
        last_parts.data = part(la.data);
        last_parts.bc = part(la.bc);
        last_parts.fo = part(la.fo);
        last_parts.total = session->value(la.total).data[0];
        f = last_parts.total;
        grad.resize(la.n_params);
        for (const ParamBinding& b : la.bindings) {
            const Matrix& a = session->adjoint(b.node);
            std::copy(a.data.begin(), a.data.end(), grad.begin() + b.offset);
        }
        return true;
    }

    // eval with parameters from an arbitrary vector (L-BFGS trials)
    bool eval_at(const std::vector<double>& wt, double& f, std::vector<double>& grad) {
        w = wt;
        return eval(f, grad, nullptr);
    }

    std::vector<std::pair<double, double>> source_estimate_star() const {
        std::vector<std::pair<double, double>> out;
        size_t bi = la.net_params.size();
        for (size_t i = 0; i < la.src.x_nodes.size(); ++i) {
            double x = star.source.sources[i].x, y = star.source.sources[i].y;
            if (la.src.x_nodes[i] >= 0 &&
                la.g.node(la.src.x_nodes[i]).op == ad::Op::Parameter)
                x = w[la.bindings[bi++].offset];
            if (la.src.y_nodes[i] >= 0 &&
                la.g.node(la.src.y_nodes[i]).op == ad::Op::Parameter)
                y = w[la.bindings[bi++].offset];
            if (la.src.amp_nodes[i] >= 0 &&
                la.g.node(la.src.amp_nodes[i]).op == ad::Op::Parameter)
                ++bi;
            out.emplace_back(x, y);
        }
        return out;
    }

    std::vector<double> trajectory_row() const {
        const phys::Nondimensionalizer nd(scenario.scales);
        std::vector<double> row;
        for (auto [x, y] : source_estimate_star()) {
            row.push_back(nd.x_phys(x));
            row.push_back(nd.x_phys(y));
        }
        return row;
    }

    void publish() {
        state->from_flat(w.data());
    }
};

Trainer::Trainer(net::NetworkState& state, const phys::Scenario& scenario,
                 const ObservationSet* observations, const TrainConfig& cfg)
    : impl_(std::make_unique<Impl>(state, scenario, observations, cfg)) {}

Trainer::~Trainer() = default;

LossBreakdown Trainer::eval_initial() {
    double f;
    std::vector<double> g;
    std::string detail;
    if (!impl_->eval(f, g, &detail))
        throw std::runtime_error("eval_initial: " + detail);
    return impl_->last_parts;
}

std::vector<std::pair<double, double>> Trainer::source_estimate() const {
    const phys::Nondimensionalizer nd(impl_->scenario.scales);
    std::vector<std::pair<double, double>> out;
    for (auto [x, y] : impl_->source_estimate_star())
        out.emplace_back(nd.x_phys(x), nd.x_phys(y));
    return out;
}

size_t Trainer::parameter_count() const { return impl_->la.n_params; }

double Trainer::directional_fd_check(int n_directions, double step, uint64_t seed) const {
    Impl& im = *impl_;
    const std::vector<double> w0 = im.w;
    double f0 = 0;
    std::vector<double> g;
    std::string detail;
    if (!im.eval(f0, g, &detail))
        throw std::runtime_error("directional_fd_check: " + detail);

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    double worst = 0;
    for (int k = 0; k < n_directions; ++k) {
        std::vector<double> u(w0.size());
        double nrm = 0;
        for (auto& v : u) {
            v = normal(rng);
            nrm += v * v;
        }
        nrm = std::sqrt(nrm);
        for (auto& v : u) v /= nrm;

        double analytic = 0;
        for (size_t i = 0; i < u.size(); ++i) analytic += g[i] * u[i];

        auto eval_f = [&](double sgn) {
            for (size_t i = 0; i < u.size(); ++i) im.w[i] = w0[i] + sgn * step * u[i];
            double f = 0;
            std::vector<double> gtmp;
            if (!im.eval(f, gtmp, &detail))
                throw std::runtime_error("directional_fd_check: " + detail);
            return f;
        };
        const double fd = (eval_f(+1) - eval_f(-1)) / (2 * step);
        const double rel =
            std::abs(analytic - fd) / std::max(std::abs(analytic) + std::abs(fd), 1e-2);
        worst = std::max(worst, rel);
    }
    im.w = w0;
    double ftmp;
    im.eval(ftmp, g, nullptr);
    return worst;
}

ad::FdCheckReport Trainer::finite_diff_check(double step) const {
    Impl& im = *impl_;
    std::vector<std::pair<int, Matrix>> bindings;
    for (const auto& b : im.la.bindings) {
        const ad::Shape& s = im.la.g.node(b.node).shape;
        Matrix m(s.rows, s.cols);
        std::copy(im.w.begin() + b.offset, im.w.begin() + b.offset + b.count,
                  m.data.begin());
        bindings.emplace_back(b.node, std::move(m));
    }
    if (im.la.colloc_input >= 0) bindings.emplace_back(im.la.colloc_input, im.la.colloc_points);
    if (im.la.obs_input >= 0) bindings.emplace_back(im.la.obs_input, im.la.obs_points);
    if (im.la.bc_input >= 0) bindings.emplace_back(im.la.bc_input, im.la.bc_points);
    return ad::finite_diff_check(im.la.g, im.la.total, bindings, step);
}

TrainReport Trainer::run() {
    using clock = std::chrono::steady_clock;
    Impl& im = *impl_;
    TrainReport report;

    double f = 0;
    std::vector<double> g;
    std::string detail;

    auto record = [&](int epoch, char phase) {
        LossBreakdown b = im.last_parts;
        b.epoch = epoch;
        b.phase = phase;
        report.history.push_back(b);
        if (im.cfg.train_source) report.source_trajectory.push_back(im.trajectory_row());
    };

    if (!im.eval(f, g, &detail)) {
        report.diverged = true;
        report.divergences.push_back({'i', 0, detail});
        im.publish();
        return report;
    }
    report.weight_proposal = propose_weights(im.last_parts, im.cfg.weights);
    if (im.cfg.auto_weights) {
        const std::vector<double> keep = im.w;
        im.build(*report.weight_proposal);
        im.w = keep;
        im.w.resize(im.la.n_params, 0.0);
        if (!im.eval(f, g, &detail)) {
            report.diverged = true;
            report.divergences.push_back({'i', 0, detail});
            im.publish();
            return report;
        }
    }
    record(0, 'i');

    // Adam phase
    auto t0 = clock::now();
    AdamState adam;
    int epoch = 0;
    std::vector<double> w_prev = im.w;
    for (int e = 1; e <= im.cfg.adam_epochs; ++e) {
        w_prev = im.w;
        adam_step(im.w, g, adam, im.cfg.adam);
        if (!im.eval(f, g, &detail)) {
            // keep the last finite iterate
            im.w = w_prev;
            report.diverged = true;
            report.divergences.push_back({'a', e, detail});
            report.adam_seconds = std::chrono::duration<double>(clock::now() - t0).count();
            im.publish();
            return report;
        }
        epoch = e;
        record(epoch, 'a');
    }
    report.adam_seconds = std::chrono::duration<double>(clock::now() - t0).count();

    // L-BFGS phase
    t0 = clock::now();
    Lbfgs opt(im.cfg.lbfgs, im.la.n_params);
    Lbfgs::LossFn fn = [&](const std::vector<double>& wt, double& ft,
                           std::vector<double>& gt) { return im.eval_at(wt, ft, gt); };
    for (int e = 1; e <= im.cfg.lbfgs_epochs; ++e) {
        StepStatus st = opt.step(fn, im.w, f, g);
        if (st == StepStatus::Diverged) {
            report.diverged = true;
            report.divergences.push_back({'l', epoch + e, "non-finite loss in line search"});
            break;
        }
        if (st == StepStatus::LineSearchFailed) {
            report.divergences.push_back({'l', epoch + e, "line search found no progress"});
            break;
        }
        if (st == StepStatus::Converged) break;
        // the accepted point was evaluated last, so im.last_parts matches im.w
        record(epoch + e, 'l');
    }
    report.lbfgs_seconds = std::chrono::duration<double>(clock::now() - t0).count();
    report.line_search_log = opt.line_search_log();

    // restore a consistent evaluation at the final parameters
    if (report.diverged) im.eval(f, g, nullptr);
    im.publish();
    return report;
}

TrainReport train(net::NetworkState& state, const phys::Scenario& scenario,
                  const ObservationSet* observations, const TrainConfig& cfg) {
    Trainer t(state, scenario, observations, cfg);
    return t.run();
}

// ---------------------------------------------------------------------------
// Single-term evaluators (tests/diagnostics)
// ---------------------------------------------------------------------------

namespace {

double eval_single(const net::NetworkState& state, const phys::Scenario& star,
                   const CollocationSet& colloc, const ObservationSet* obs,
                   const LossWeights& weights, bool steady, int LossAssembly::*term) {
    LossAssembly la =
        assemble_loss(state.arch, star, colloc, obs, weights, steady);
    ad::Session s(la.g);
    if (la.colloc_input >= 0) s.bind(la.colloc_input, la.colloc_points);
    if (la.obs_input >= 0) s.bind(la.obs_input, la.obs_points);
    if (la.bc_input >= 0) s.bind(la.bc_input, la.bc_points);
    std::vector<double> flat;
    state.to_flat(flat);
    size_t bi = 0;
    for (; bi < la.net_params.size(); ++bi)
        s.bind_flat(la.bindings[bi].node, flat.data() + la.bindings[bi].offset);
    // trainable source parameters start at the scenario's centers
    size_t extra = la.net_params.size();
    for (size_t i = 0; i < la.src.x_nodes.size(); ++i) {
        auto bind_scalar = [&](int node, double v) {
            if (node >= 0 && la.g.node(node).op == ad::Op::Parameter) {
                s.bind(node, Matrix::scalar(v));
                ++extra;
            }
        };
        bind_scalar(la.src.x_nodes[i], star.source.sources[i].x);
        bind_scalar(la.src.y_nodes[i], star.source.sources[i].y);
        bind_scalar(la.src.amp_nodes[i], star.source.sources[i].amplitude);
    }
    if (s.forward().diverged)
        throw std::runtime_error("loss evaluation diverged");
    return s.value(la.*term).data[0];
}

}  // namespace

double pde_loss(const net::NetworkState& state, const CollocationSet& colloc_star,
                const phys::Scenario& star) {
    LossWeights w;
    w.pde = 1;
    return eval_single(state, star, colloc_star, nullptr, w, star.single_instant(),
                       &LossAssembly::pde);
}

double data_loss(const net::NetworkState& state, const ObservationSet& obs_star) {
    if (obs_star.empty()) throw std::invalid_argument("data_loss: empty observation set");
    LossWeights w;
    w.pde = 0;
    w.data = 1;
    phys::Scenario dummy;
    dummy.domain = {0, 1, 0, 1};
    dummy.t_end = 1;
    dummy.source.sources = {};
    CollocationSet none;
    return eval_single(state, dummy, none, &obs_star, w, false, &LossAssembly::data);
}

double bc_ic_loss(const net::NetworkState& state, const CollocationSet& colloc_star) {
    if (colloc_star.boundary.empty() && colloc_star.initial.empty())
        throw std::invalid_argument("bc_ic_loss: no boundary or initial points");
    LossWeights w;
    w.pde = 0;
    w.bc = 1;
    phys::Scenario dummy;
    dummy.domain = {0, 1, 0, 1};
    dummy.t_end = 1;
    dummy.source.sources = {};
    return eval_single(state, dummy, colloc_star, nullptr, w, false, &LossAssembly::bc);
}

double fo_compat_loss(const net::NetworkState& state, const CollocationSet& colloc_star,
                      bool steady) {
    if (state.arch.heads != net::OutputHeads::FoPinn)
        throw std::invalid_argument("fo_compat_loss: network has no fo_pinn head");
    if (colloc_star.interior.empty())
        throw std::invalid_argument("fo_compat_loss: no collocation points");
    LossWeights w;
    w.pde = 0;
    w.fo = 1;
    phys::Scenario dummy;
    dummy.domain = {0, 1, 0, 1};
    dummy.t_end = 1;
    dummy.source.sources = {};
    return eval_single(state, dummy, colloc_star, nullptr, w, steady, &LossAssembly::fo);
}

}  // namespace plume::train
