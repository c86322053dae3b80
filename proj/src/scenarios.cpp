#include "plume/scenarios.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <future>
#include <map>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "plume/io.hpp"

namespace plume::scen {

namespace {

phys::Scenario base_s_domain() {
    phys::Scenario s;
    s.domain = {0, 10, 0, 10};
    s.k = 0.5;
    s.source.sigma = 0.25;
    s.source.sources = {{4, 4, 1.0}};
    s.scales = {1, 1, 1};
    return s;
}

}  // namespace

std::vector<phys::Scenario> builtin_scenarios() {
    std::vector<phys::Scenario> out;

    phys::Scenario s1 = base_s_domain();
    s1.name = "S1";
    s1.t_start = s1.t_end = 3.0;
    s1.wind.kind = phys::WindFieldSpec::Kind::Constant;
    s1.wind.u = 0.7;
    s1.wind.v = 0.7;
    out.push_back(s1);

    phys::Scenario s2 = base_s_domain();
    s2.name = "S2";
    s2.t_start = 0;
    s2.t_end = 4.0;
    s2.wind.kind = phys::WindFieldSpec::Kind::Analytic;
    out.push_back(s2);

    phys::Scenario s3 = s2;
    s3.name = "S3";
    s3.k = 1e-5;
    out.push_back(s3);

    phys::Scenario s4 = s3;
    s4.name = "S4";
    s4.source.sources = {{4, 4, 1.0}, {3, 6, 1.0}};
    out.push_back(s4);

    // RD: 20 x 20 km domain on a 100 x 100 grid with 200 m step; the true
    // source sits at grid cell (44, 37) in (x, y) order, i.e. 8800 m, 7400 m.
    phys::Scenario rd;
    rd.name = "RD";
    rd.domain = {0, 20000, 0, 20000};
    rd.t_start = 0;
    rd.t_end = 3600;
    rd.k = 5.0;
    rd.wind.kind = phys::WindFieldSpec::Kind::Analytic;
    rd.wind.a = 1.5;
    rd.wind.b = 1.0;
    rd.wind.omega = 2 * std::numbers::pi / 3600.0;
    rd.source.sigma = 400.0;
    rd.source.sources = {{8800.0, 7400.0, 1.0}};
    rd.scales = {1, 1, 1};
    out.push_back(rd);

    return out;
}

phys::Scenario get_scenario(const std::string& name) {
    for (phys::Scenario& s : builtin_scenarios())
        if (s.name == name) return s;
    throw std::invalid_argument("unknown scenario '" + name +
                                "' (known: S1, S2, S3, S4, RD)");
}

std::vector<std::pair<double, double>> sensor_grid(const phys::Domain& d, int nx, int ny) {
    std::vector<std::pair<double, double>> out;
    out.reserve(static_cast<size_t>(nx) * ny);
    for (int j = 1; j <= ny; ++j)
        for (int i = 1; i <= nx; ++i)
            out.emplace_back(d.x_min + d.width() * i / (nx + 1),
                             d.y_min + d.height() * j / (ny + 1));
    return out;
}

std::vector<double> observation_times(const phys::Scenario& sc, int n_times) {
    if (sc.single_instant() || n_times <= 1) return {sc.t_end};
    std::vector<double> out;
    for (int i = 0; i < n_times; ++i)
        out.push_back(sc.t_start + (sc.t_end - sc.t_start) * i / (n_times - 1));
    return out;
}

InverseConfig InverseConfig::defaults() {
    InverseConfig cfg;
    cfg.arch.input_dim = 3;
    cfg.arch.hidden_width = 64;
    cfg.arch.depth = 4;
    // residual blocks rather than a plain stack: tanhshrink has near-zero
    // slope at the origin, and at desk-scale widths a plain stack trains far
    // too slowly without the skip path
    cfg.arch.block = net::BlockKind::Resnet;
    cfg.arch.sin_input_layer = false;
    cfg.arch.heads = net::OutputHeads::COnly;
    cfg.train.weights.pde = 1;
    cfg.train.weights.data = 10000;  // inverse preset
    cfg.train.weights.bc = 0;
    cfg.train.adam_epochs = 3000;
    cfg.train.lbfgs_epochs = 1000;
    cfg.train.n_collocation = 1200;
    cfg.train.n_boundary = 0;
    cfg.train.train_source = true;
    cfg.train.source_init = train::SourceInit::Midpoint;
    return cfg;
}

SourceEstimate run_inverse(const phys::Scenario& scenario, const InverseConfig& cfg,
                           uint64_t seed) {
    scenario.validate();
    const std::vector<double> times = observation_times(scenario, cfg.sensors.n_times);
    ref::FieldSeries fs = ref::solve_forward(scenario, cfg.grid, times);
    ObservationSet obs = ref::sample_observations(
        fs, sensor_grid(scenario.domain, cfg.sensors.nx, cfg.sensors.ny), times,
        cfg.sensors.noise_sd, seed ^ 0x9e3779b97f4a7c15ull);
    return run_inverse(scenario, obs, cfg, seed);
}

SourceEstimate run_inverse(const phys::Scenario& scenario, const ObservationSet& obs,
                           const InverseConfig& cfg, uint64_t seed) {
    phys::Scenario sc = scenario;
    if (!cfg.respect_scales)
        sc.scales = phys::default_scales(sc, obs.max_abs_concentration());
    if (cfg.sigma_estimate > 0 && cfg.sigma_estimate != sc.source.sigma) {
        // broaden the estimation bump but keep the total emission rate:
        // amplitude scales with (sigma_true/sigma_est)^2
        const double ratio = sc.source.sigma / cfg.sigma_estimate;
        for (phys::PointSource& p : sc.source.sources) p.amplitude *= ratio * ratio;
        sc.source.sigma = cfg.sigma_estimate;
    }
    sc.source.train_x = sc.source.train_y = true;

    net::NetworkState state = net::NetworkState::init(cfg.arch, seed);
    train::TrainConfig tc = cfg.train;
    tc.train_source = true;
    tc.collocation_seed = seed * 2654435761u + 1;
    tc.source_init_seed = seed * 0x9e3779b9u + 7;
    if (tc.source_init == train::SourceInit::Fixed)
        tc.source_init = train::SourceInit::Midpoint;

    train::Trainer trainer(state, sc, &obs, tc);
    SourceEstimate est;
    est.report = trainer.run();
    est.scales_used = sc.scales;
    est.threshold = cfg.pass_threshold;
    est.complete = est.report.complete(tc.adam_epochs, tc.lbfgs_epochs);

    const auto predicted = trainer.source_estimate();
    est.pass = true;
    for (size_t i = 0; i < predicted.size(); ++i) {
        est.predicted.push_back({predicted[i].first, predicted[i].second});
        const phys::PointSource& truth = scenario.source.sources[i];
        est.truth.push_back({truth.x, truth.y});
        const double ex = predicted[i].first - truth.x;
        const double ey = predicted[i].second - truth.y;
        est.sq_error.push_back({ex * ex, ey * ey});
        if (std::abs(ex) > cfg.pass_threshold || std::abs(ey) > cfg.pass_threshold)
            est.pass = false;
    }
    if (!est.complete) est.pass = false;
    return est;
}

const std::vector<std::array<double, 2>>& verification_coordinates() {
    static const std::vector<std::array<double, 2>> coords = {
        {3, 3}, {4, 4}, {5, 5}, {6, 6}, {7, 7},
        {4, 5}, {5, 2}, {6, 3}, {4, 6}, {2, 4}};
    return coords;
}

VerificationReport verify_suite(const InverseConfig& cfg, uint64_t seed, int jobs) {
    const auto& coords = verification_coordinates();
    VerificationReport report;
    report.threshold = cfg.pass_threshold;
    report.rows.resize(coords.size());

    auto run_row = [&](int i) {
        VerificationRow row;
        row.index = i;
        row.test = coords[i];
        try {
            phys::Scenario sc = get_scenario("S3");
            sc.source.sources = {{coords[i][0], coords[i][1], 1.0}};
            SourceEstimate est = run_inverse(sc, cfg, seed + 1000 * (i + 1));
            row.predicted = est.predicted[0];
            row.mse = est.sq_error[0];
            row.pass = est.pass;
            row.complete = est.complete;
        } catch (const std::exception&) {
            row.pass = false;
            row.complete = false;
        }
        return row;
    };

    if (jobs <= 1) {
        for (size_t i = 0; i < coords.size(); ++i)
            report.rows[i] = run_row(static_cast<int>(i));
    } else {
        for (size_t base = 0; base < coords.size(); base += jobs) {
            std::vector<std::future<VerificationRow>> batch;
            for (size_t i = base; i < std::min(coords.size(), base + jobs); ++i)
                batch.push_back(std::async(std::launch::async, run_row, static_cast<int>(i)));
            for (size_t i = 0; i < batch.size(); ++i)
                report.rows[base + i] = batch[i].get();
        }
    }

    int passes = 0;
    for (const VerificationRow& r : report.rows) passes += r.pass ? 1 : 0;
    report.pass_rate = static_cast<double>(passes) / coords.size();
    return report;
}

std::vector<StudyConfig> study_configurations() {
    return {{10000, 2500}, {15000, 2500}, {15000, 200}};
}

std::vector<StudyRow> epoch_collocation_study(const InverseConfig& base, double epoch_scale,
                                              uint64_t seed) {
    if (!(epoch_scale > 0)) throw std::invalid_argument("study: epoch_scale must be > 0");
    std::vector<StudyRow> out;
    const phys::Scenario s2 = get_scenario("S2");
    for (const StudyConfig& sc : study_configurations()) {
        InverseConfig cfg = base;
        const int epochs = std::max(2, static_cast<int>(std::lround(sc.epochs * epoch_scale)));
        cfg.train.adam_epochs = epochs / 2;  // 50/50 optimizer split
        cfg.train.lbfgs_epochs = epochs - epochs / 2;
        cfg.train.n_collocation = sc.collocation;
        SourceEstimate est = run_inverse(s2, cfg, seed);
        StudyRow row;
        row.epochs = epochs;
        row.collocation = sc.collocation;
        row.x_pred = est.predicted[0][0];
        row.y_pred = est.predicted[0][1];
        row.mse_x = est.sq_error[0][0];
        row.mse_y = est.sq_error[0][1];
        out.push_back(row);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Ingestion
// ---------------------------------------------------------------------------

IngestResult ingest_observations(const std::string& path, CoordinateConvention convention,
                                 const phys::Domain* domain) {
    io::Csv csv = io::read_csv(path);
    const int cx = csv.column("x"), cy = csv.column("y"), ct = csv.column("t"),
              cc = csv.column("c");
    if (cx < 0 || cy < 0 || ct < 0 || cc < 0)
        throw std::runtime_error(path + ": header must contain x,y,t,c");

    IngestResult out;
    out.observations.provenance = Provenance::Ingested;
    bool first = true;
    for (size_t r = 0; r < csv.rows.size(); ++r) {
        const auto& row = csv.rows[r];
        Observation o;
        try {
            const double a = io::parse_double(row[cx]);
            const double b = io::parse_double(row[cy]);
            o.x = convention == CoordinateConvention::XY ? a : b;
            o.y = convention == CoordinateConvention::XY ? b : a;
            o.t = io::parse_double(row[ct]);
            o.c = io::parse_double(row[cc]);
        } catch (const std::exception& e) {
            throw std::runtime_error(path + ": row " + std::to_string(r + 2) + ": " +
                                     e.what());
        }
        if (!std::isfinite(o.c))
            throw std::runtime_error(path + ": row " + std::to_string(r + 2) +
                                     ": non-finite concentration");
        if (domain && !domain->contains(o.x, o.y))
            throw std::runtime_error(path + ": row " + std::to_string(r + 2) +
                                     ": coordinates outside the declared domain");
        if (first) {
            out.bounds = {o.x, o.x, o.y, o.y};
            out.t_min = out.t_max = o.t;
            first = false;
        } else {
            out.bounds.x_min = std::min(out.bounds.x_min, o.x);
            out.bounds.x_max = std::max(out.bounds.x_max, o.x);
            out.bounds.y_min = std::min(out.bounds.y_min, o.y);
            out.bounds.y_max = std::max(out.bounds.y_max, o.y);
            out.t_min = std::min(out.t_min, o.t);
            out.t_max = std::max(out.t_max, o.t);
        }
        out.observations.samples.push_back(o);
    }
    if (out.observations.empty()) throw std::runtime_error(path + ": no data rows");
    return out;
}

std::pair<double, double> wind_from_met(double speed, double direction_deg) {
    const double th = (direction_deg + 180.0) * std::numbers::pi / 180.0;
    return {speed * std::sin(th), speed * std::cos(th)};
}

phys::WindFieldSpec ingest_wind(const std::string& path) {
    io::Csv csv = io::read_csv(path);
    const int ct = csv.column("t"), cx = csv.column("x"), cy = csv.column("y");
    const int cu = csv.column("u"), cv = csv.column("v");
    const int cs = csv.column("speed"), cd = csv.column("direction_deg");
    if (ct < 0 || cx < 0 || cy < 0)
        throw std::runtime_error(path + ": header must contain t,x,y");
    const bool met = cu < 0 || cv < 0;
    if (met && (cs < 0 || cd < 0))
        throw std::runtime_error(path + ": need u,v or speed,direction_deg columns");

    struct Sample {
        double x, y, u, v;
    };
    std::map<double, std::vector<Sample>> by_time;
    for (size_t r = 0; r < csv.rows.size(); ++r) {
        const auto& row = csv.rows[r];
        try {
            Sample s{};
            const double t = io::parse_double(row[ct]);
            s.x = io::parse_double(row[cx]);
            s.y = io::parse_double(row[cy]);
            if (met) {
                auto [u, v] = wind_from_met(io::parse_double(row[cs]),
                                            io::parse_double(row[cd]));
                s.u = u;
                s.v = v;
            } else {
                s.u = io::parse_double(row[cu]);
                s.v = io::parse_double(row[cv]);
            }
            if (!std::isfinite(s.u) || !std::isfinite(s.v))
                throw std::runtime_error("non-finite wind");
            by_time[t].push_back(s);
        } catch (const std::exception& e) {
            throw std::runtime_error(path + ": row " + std::to_string(r + 2) + ": " +
                                     e.what());
        }
    }
    if (by_time.empty()) throw std::runtime_error(path + ": no data rows");

    // distinct sorted coordinates define the raster
    std::vector<double> xs, ys;
    for (const Sample& s : by_time.begin()->second) {
        xs.push_back(s.x);
        ys.push_back(s.y);
    }
    std::sort(xs.begin(), xs.end());
    xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
    std::sort(ys.begin(), ys.end());
    ys.erase(std::unique(ys.begin(), ys.end()), ys.end());
    const int nx = static_cast<int>(xs.size());
    const int ny = static_cast<int>(ys.size());
    if (nx < 2 || ny < 2) throw std::runtime_error(path + ": wind raster needs >= 2x2 nodes");

    phys::WindFieldSpec w;
    w.kind = phys::WindFieldSpec::Kind::Gridded;
    phys::GriddedWind& g = w.grid;
    g.extent = {xs.front(), xs.back(), ys.front(), ys.back()};
    g.nx = nx;
    g.ny = ny;
    auto index_of = [](const std::vector<double>& v, double x) {
        auto it = std::lower_bound(v.begin(), v.end(), x - 1e-9);
        if (it == v.end() || std::abs(*it - x) > 1e-9) return -1;
        return static_cast<int>(it - v.begin());
    };
    for (const auto& [t, samples] : by_time) {
        if (samples.size() != static_cast<size_t>(nx) * ny)
            throw std::runtime_error(path + ": incomplete raster at t=" +
                                     io::format_double(t));
        Matrix uf(ny, nx), vf(ny, nx);
        for (const Sample& s : samples) {
            const int i = index_of(xs, s.x), j = index_of(ys, s.y);
            if (i < 0 || j < 0)
                throw std::runtime_error(path + ": irregular raster at t=" +
                                         io::format_double(t));
            uf.at(j, i) = s.u;
            vf.at(j, i) = s.v;
        }
        g.times.push_back(t);
        g.u_fields.push_back(std::move(uf));
        g.v_fields.push_back(std::move(vf));
    }
    return w;
}

RdDataset generate_rd_dataset(const std::string& dir, uint64_t seed) {
    std::filesystem::create_directories(dir);
    RdDataset out;
    out.scenario = get_scenario("RD");

    // gridded wind file: 11x11 raster, 7 time samples of the analytic family
    {
        std::ostringstream os;
        os << "t,x,y,u,v\n";
        const int n = 11, nt = 7;
        for (int it = 0; it < nt; ++it) {
            const double t = out.scenario.t_end * it / (nt - 1);
            for (int j = 0; j < n; ++j)
                for (int i = 0; i < n; ++i) {
                    const double x = out.scenario.domain.x_max * i / (n - 1);
                    const double y = out.scenario.domain.y_max * j / (n - 1);
                    auto [u, v] = phys::wind_at(out.scenario.wind, x, y, t);
                    os << io::format_double(t) << "," << io::format_double(x) << ","
                       << io::format_double(y) << "," << io::format_double(u) << ","
                       << io::format_double(v) << "\n";
                }
        }
        out.wind_path = dir + "/wind.csv";
        io::write_file_atomic(out.wind_path, os.str());
    }

    // observations from the reference solver on the scenario's natural grid
    {
        ref::GridSpec grid;
        grid.nx = grid.ny = 101;  // 200 m step over 20 km
        std::vector<double> times = observation_times(out.scenario, 5);
        ref::FieldSeries fs = ref::solve_forward(out.scenario, grid, times);
        ObservationSet obs = ref::sample_observations(
            fs, sensor_grid(out.scenario.domain, 15, 15), times, 0.0, seed);
        std::ostringstream os;
        os << "x,y,t,c\n";
        for (const Observation& o : obs.samples)
            os << io::format_double(o.x) << "," << io::format_double(o.y) << ","
               << io::format_double(o.t) << "," << io::format_double(o.c) << "\n";
        out.obs_path = dir + "/obs.csv";
        io::write_file_atomic(out.obs_path, os.str());
    }
    return out;
}

SelfConsistencyResult self_consistency_check(uint64_t seed) {
    // steady scenario with a broad bump; the generator and the inverse share
    // sigma so the model family matches exactly
    phys::Scenario sc = get_scenario("S1");
    sc.source.sigma = 1.0;
    sc.scales = phys::default_scales(sc, 0.5);

    net::ArchitectureSpec arch;
    arch.hidden_width = 24;
    arch.depth = 3;
    arch.block = net::BlockKind::Resnet;
    arch.heads = net::OutputHeads::COnly;

    // stage 1: fit the PDE with the source fixed at truth
    net::NetworkState generator = net::NetworkState::init(arch, seed);
    train::TrainConfig fwd;
    fwd.weights.pde = 1;
    fwd.weights.bc = 100;
    fwd.adam_epochs = 600;
    fwd.lbfgs_epochs = 250;
    fwd.n_collocation = 400;
    fwd.n_boundary = 160;
    fwd.collocation_seed = seed + 11;
    fwd.train_source = false;
    train::TrainReport fw = train::train(generator, sc, nullptr, fwd);
    if (fw.diverged) throw std::runtime_error("self-consistency: generator diverged");

    // stage 2: observations straight from the generator's predictions
    const auto sensors = sensor_grid(sc.domain, 15, 15);
    Matrix pts(3, static_cast<int>(sensors.size()));
    const phys::Nondimensionalizer nd(sc.scales);
    for (size_t i = 0; i < sensors.size(); ++i) {
        pts.at(0, static_cast<int>(i)) = nd.x_star(sensors[i].first);
        pts.at(1, static_cast<int>(i)) = nd.x_star(sensors[i].second);
        pts.at(2, static_cast<int>(i)) = nd.t_star(sc.t_end);
    }
    Matrix pred = net::evaluate(generator, pts);
    ObservationSet obs;
    for (size_t i = 0; i < sensors.size(); ++i)
        obs.samples.push_back({sensors[i].first, sensors[i].second, sc.t_end,
                               nd.c_phys(pred.at(0, static_cast<int>(i)))});

    // stage 3: warm-started inverse with the source freed from the midpoint
    net::NetworkState inverse_net = generator;
    train::TrainConfig inv;
    inv.weights.pde = 1;
    inv.weights.data = 10000;
    inv.adam_epochs = 500;
    inv.lbfgs_epochs = 400;
    inv.n_collocation = 400;
    inv.n_boundary = 0;
    inv.collocation_seed = seed + 11;  // same residual points as the generator saw
    inv.train_source = true;
    inv.source_init = train::SourceInit::Midpoint;
    train::Trainer trainer(inverse_net, sc, &obs, inv);

    SelfConsistencyResult out;
    out.estimate.report = trainer.run();
    out.estimate.scales_used = sc.scales;
    const auto predicted = trainer.source_estimate();
    const phys::PointSource& truth = sc.source.sources[0];
    out.estimate.predicted.push_back({predicted[0].first, predicted[0].second});
    out.estimate.truth.push_back({truth.x, truth.y});
    out.estimate.sq_error.push_back(
        {(predicted[0].first - truth.x) * (predicted[0].first - truth.x),
         (predicted[0].second - truth.y) * (predicted[0].second - truth.y)});
    out.max_coord_err_star =
        std::max(std::abs(nd.x_star(predicted[0].first) - nd.x_star(truth.x)),
                 std::abs(nd.x_star(predicted[0].second) - nd.x_star(truth.y)));
    out.estimate.complete = !out.estimate.report.diverged;
    out.estimate.pass = out.max_coord_err_star < 1e-3;
    return out;
}

}  // namespace plume::scen
