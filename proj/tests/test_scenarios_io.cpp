#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>

#include "plume/io.hpp"
#include "plume/scenarios.hpp"

using namespace plume;
using namespace plume::scen;

TEST_CASE("registry: five scenarios with the paper constants") {
    auto all = builtin_scenarios();
    CHECK(all.size() == 5);

    phys::Scenario s1 = get_scenario("S1");
    CHECK(s1.source.sources.size() == 1);
    CHECK(s1.source.sources[0].x == 4.0);
    CHECK(s1.source.sources[0].y == 4.0);
    CHECK(s1.domain.x_max == 10.0);
    CHECK(s1.domain.y_max == 10.0);
    CHECK(s1.k == 0.5);
    CHECK(s1.wind.kind == phys::WindFieldSpec::Kind::Constant);
    CHECK(s1.wind.u == 0.7);
    CHECK(s1.wind.v == 0.7);
    CHECK(s1.t_end == 3.0);
    CHECK(s1.single_instant());

    phys::Scenario s2 = get_scenario("S2");
    CHECK(s2.t_start == 0.0);
    CHECK(s2.t_end == 4.0);
    CHECK(s2.k == 0.5);
    CHECK(s2.wind.kind == phys::WindFieldSpec::Kind::Analytic);

    phys::Scenario s3 = get_scenario("S3");
    CHECK(s3.k == 1e-5);

    phys::Scenario s4 = get_scenario("S4");
    CHECK(s4.source.sources.size() == 2);
    CHECK(s4.source.sources[0].x == 4.0);
    CHECK(s4.source.sources[0].y == 4.0);
    CHECK(s4.source.sources[1].x == 3.0);
    CHECK(s4.source.sources[1].y == 6.0);

    phys::Scenario rd = get_scenario("RD");
    CHECK(rd.domain.x_max == 20000.0);
    CHECK(rd.source.sources[0].x == doctest::Approx(44 * 200.0));
    CHECK(rd.source.sources[0].y == doctest::Approx(37 * 200.0));

    CHECK_THROWS_AS(get_scenario("S9"), std::invalid_argument);
    for (const phys::Scenario& s : all) CHECK_NOTHROW(s.validate());
}

TEST_CASE("verification coordinate list matches the protocol") {
    const auto& c = verification_coordinates();
    REQUIRE(c.size() == 10);
    CHECK(c[0] == std::array<double, 2>{3, 3});
    CHECK(c[4] == std::array<double, 2>{7, 7});
    CHECK(c[9] == std::array<double, 2>{2, 4});
}

TEST_CASE("study configurations are the three canonical cases") {
    auto cfgs = study_configurations();
    REQUIRE(cfgs.size() == 3);
    CHECK(cfgs[0].epochs == 10000);
    CHECK(cfgs[0].collocation == 2500);
    CHECK(cfgs[1].epochs == 15000);
    CHECK(cfgs[1].collocation == 2500);
    CHECK(cfgs[2].epochs == 15000);
    CHECK(cfgs[2].collocation == 200);
}

TEST_CASE("sensor_grid stays strictly interior") {
    phys::Domain d{0, 10, 0, 10};
    auto pts = sensor_grid(d, 15, 15);
    CHECK(pts.size() == 225);
    for (auto [x, y] : pts) {
        CHECK(x > 0);
        CHECK(x < 10);
        CHECK(y > 0);
        CHECK(y < 10);
    }
}

TEST_CASE("observation_times spans the window") {
    phys::Scenario s2 = get_scenario("S2");
    auto times = observation_times(s2, 5);
    REQUIRE(times.size() == 5);
    CHECK(times.front() == 0.0);
    CHECK(times.back() == 4.0);
    CHECK(times[2] == doctest::Approx(2.0));

    phys::Scenario s1 = get_scenario("S1");
    times = observation_times(s1, 5);
    REQUIRE(times.size() == 1);
    CHECK(times[0] == 3.0);
}

TEST_CASE("wind_from_met: convention spot checks") {
    // from the south (180 deg) blows northward: (u, v) ~ (0, 1)
    auto [u, v] = wind_from_met(1.0, 180.0);
    CHECK(std::abs(u) < 1e-12);
    CHECK(v == doctest::Approx(1.0));
    // from the north (0 deg) blows southward
    auto [u2, v2] = wind_from_met(2.0, 0.0);
    CHECK(std::abs(u2) < 1e-12);
    CHECK(v2 == doctest::Approx(-2.0));
    // from the east (90 deg) blows westward
    auto [u3, v3] = wind_from_met(1.0, 90.0);
    CHECK(u3 == doctest::Approx(-1.0));
    CHECK(std::abs(v3) < 1e-12);
}

TEST_CASE("ingest_observations: well-formed file, conventions, row errors") {
    const std::string path = "test_ingest_obs.tmp.csv";
    {
        std::string text = "x,y,t,c\n";
        for (int i = 0; i < 10; ++i)
            text += io::csv_line({io::format_double(1.0 + i), io::format_double(2.0 + i),
                                  io::format_double(0.5 * i), io::format_double(0.01 * i)});
        io::write_file_atomic(path, text);
    }
    IngestResult r = ingest_observations(path, CoordinateConvention::XY);
    CHECK(r.observations.size() == 10);
    CHECK(r.observations.provenance == Provenance::Ingested);
    CHECK(r.observations.samples[0].x == 1.0);
    CHECK(r.observations.samples[0].y == 2.0);
    CHECK(r.bounds.x_min == 1.0);
    CHECK(r.bounds.x_max == 10.0);
    CHECK(r.t_max == doctest::Approx(4.5));

    IngestResult ryx = ingest_observations(path, CoordinateConvention::YX);
    CHECK(ryx.observations.samples[0].x == 2.0);
    CHECK(ryx.observations.samples[0].y == 1.0);

    // non-numeric concentration names the row
    {
        std::string text = "x,y,t,c\n1,2,0,0.5\n3,4,1,oops\n";
        io::write_file_atomic(path, text);
    }
    try {
        ingest_observations(path, CoordinateConvention::XY);
        FAIL("expected throw");
    } catch (const std::exception& e) {
        CHECK(std::string(e.what()).find("row 3") != std::string::npos);
    }

    // out-of-domain rejection
    {
        std::string text = "x,y,t,c\n50,2,0,0.5\n";
        io::write_file_atomic(path, text);
    }
    phys::Domain dom{0, 10, 0, 10};
    CHECK_THROWS(ingest_observations(path, CoordinateConvention::XY, &dom));
    std::remove(path.c_str());
}

TEST_CASE("ingest_wind: u/v raster and met conversion") {
    const std::string path = "test_ingest_wind.tmp.csv";
    {
        std::string text = "t,x,y,u,v\n";
        for (double t : {0.0, 10.0})
            for (double y : {0.0, 5.0})
                for (double x : {0.0, 5.0})
                    text += io::csv_line({io::format_double(t), io::format_double(x),
                                          io::format_double(y),
                                          io::format_double(x + t),
                                          io::format_double(y - t)});
        io::write_file_atomic(path, text);
    }
    phys::WindFieldSpec w = ingest_wind(path);
    CHECK(w.kind == phys::WindFieldSpec::Kind::Gridded);
    auto [u, v] = phys::wind_at(w, 5.0, 0.0, 0.0);
    CHECK(u == doctest::Approx(5.0));
    CHECK(v == doctest::Approx(0.0));
    // halfway in time
    auto [u2, v2] = phys::wind_at(w, 0.0, 5.0, 5.0);
    CHECK(u2 == doctest::Approx(5.0));
    CHECK(v2 == doctest::Approx(0.0));

    // met-convention file
    {
        std::string text = "t,x,y,speed,direction_deg\n";
        for (double t : {0.0, 10.0})
            for (double y : {0.0, 5.0})
                for (double x : {0.0, 5.0})
                    text += io::csv_line({io::format_double(t), io::format_double(x),
                                          io::format_double(y), "2", "180"});
        io::write_file_atomic(path, text);
    }
    w = ingest_wind(path);
    auto [u3, v3] = phys::wind_at(w, 2.0, 2.0, 3.0);
    CHECK(std::abs(u3) < 1e-12);
    CHECK(v3 == doctest::Approx(2.0));

    // incomplete raster is rejected
    {
        std::string text = "t,x,y,u,v\n0,0,0,1,1\n0,5,0,1,1\n0,0,5,1,1\n";
        io::write_file_atomic(path, text);
    }
    CHECK_THROWS(ingest_wind(path));
    std::remove(path.c_str());
}

TEST_CASE("rd dataset generator emits a parseable pair of files") {
    const std::string dir = "test_rd_dataset.tmp";
    RdDataset ds = generate_rd_dataset(dir, 3);
    IngestResult obs =
        ingest_observations(ds.obs_path, CoordinateConvention::XY, &ds.scenario.domain);
    CHECK(obs.observations.size() == 15 * 15 * 5);
    phys::WindFieldSpec w = ingest_wind(ds.wind_path);
    auto [u, v] = phys::wind_at(w, 10000.0, 10000.0, 1800.0);
    auto [ur, vr] = phys::wind_at(ds.scenario.wind, 10000.0, 10000.0, 1800.0);
    CHECK(u == doctest::Approx(ur).epsilon(1e-6));
    CHECK(v == doctest::Approx(vr).epsilon(1e-6));
    std::filesystem::remove_all(dir);
}

TEST_CASE("config: parsing, typed getters, schema validation") {
    const std::string text =
        "[network]\n"
        "width = 64\n"
        "depth = 4  # layers\n"
        "\n"
        "[training]\n"
        "adam_epochs = 1500\n"
        "lr = 1e-3\n"
        "auto_weights = false\n";
    io::Config cfg = io::Config::parse_string(text);
    CHECK(cfg.get_int("network", "width", 0) == 64);
    CHECK(cfg.get_double("training", "lr", 0) == doctest::Approx(1e-3));
    CHECK(cfg.get_bool("training", "auto_weights", true) == false);
    CHECK(cfg.get("missing", "key", "dflt") == "dflt");

    std::map<std::string, std::set<std::string>> schema = {
        {"network", {"width", "depth"}},
        {"training", {"adam_epochs", "lr", "auto_weights"}},
    };
    CHECK_NOTHROW(cfg.validate_keys(schema));

    // unknown key is named in the error
    io::Config bad = io::Config::parse_string("[network]\noptimzer = adam\n");
    try {
        bad.validate_keys(schema);
        FAIL("expected throw");
    } catch (const io::ConfigError& e) {
        CHECK(std::string(e.what()).find("optimzer") != std::string::npos);
    }

    CHECK_THROWS_AS(io::Config::parse_string("key_without_section = 1\n"),
                    io::ConfigError);
    CHECK_THROWS_AS(io::Config::parse_string("[a]\nk = 1\nk = 2\n"), io::ConfigError);
}

TEST_CASE("csv round-trip through our own reader") {
    const std::string path = "test_csv_roundtrip.tmp.csv";
    std::string text = "epoch,total\n";
    text += io::csv_line({"0", io::format_double(0.1 + 0.2)});
    text += io::csv_line({"1", io::format_double(1e-17)});
    io::write_file_atomic(path, text);
    io::Csv csv = io::read_csv(path);
    REQUIRE(csv.rows.size() == 2);
    CHECK(io::parse_double(csv.rows[0][1]) == 0.1 + 0.2);
    CHECK(io::parse_double(csv.rows[1][1]) == 1e-17);
    CHECK(csv.column("total") == 1);
    CHECK(csv.column("nope") == -1);
    std::remove(path.c_str());
}

TEST_CASE("format_double round-trips exactly") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> d(-1e6, 1e6);
    for (int i = 0; i < 1000; ++i) {
        const double v = d(rng) * std::pow(10.0, static_cast<int>(rng() % 30) - 15);
        CHECK(io::parse_double(io::format_double(v)) == v);
    }
}

TEST_CASE("atomic write leaves no temp file behind") {
    const std::string path = "test_atomic.tmp";
    io::write_file_atomic(path, "hello");
    CHECK(io::read_file(path) == "hello");
    CHECK_FALSE(std::filesystem::exists(path + ".tmp"));
    CHECK(io::fnv1a_digest("hello") == io::fnv1a_digest("hello"));
    CHECK(io::fnv1a_digest("hello") != io::fnv1a_digest("hellp"));
    std::remove(path.c_str());
}

TEST_CASE("pipeline unit coherence: physical vs pre-scaled scenario") {
    // identical nondimensional trajectories whether the scenario arrives in
    // physical units or already nondimensionalized
    phys::Scenario sc = get_scenario("S1");
    InverseConfig cfg = InverseConfig::defaults();
    cfg.arch.hidden_width = 8;
    cfg.arch.depth = 2;
    cfg.train.adam_epochs = 8;
    cfg.train.lbfgs_epochs = 0;
    cfg.train.n_collocation = 64;
    cfg.sensors.nx = cfg.sensors.ny = 5;
    cfg.grid.nx = cfg.grid.ny = 48;

    SourceEstimate a = run_inverse(sc, cfg, 11);

    // pre-scale: nondimensionalize with the same scales the first run used
    phys::Scenario star = sc;
    star.scales = a.scales_used;
    star = phys::nondimensionalize_scenario(star);
    const std::vector<double> times = observation_times(sc, cfg.sensors.n_times);
    ref::FieldSeries fs = ref::solve_forward(sc, cfg.grid, times);
    ObservationSet obs = ref::sample_observations(
        fs, sensor_grid(sc.domain, cfg.sensors.nx, cfg.sensors.ny), times, 0.0,
        11 ^ 0x9e3779b97f4a7c15ull);
    phys::Nondimensionalizer nd(a.scales_used);
    ObservationSet obs_star;
    for (const Observation& o : obs.samples)
        obs_star.samples.push_back(
            {nd.x_star(o.x), nd.x_star(o.y), nd.t_star(o.t), nd.c_star(o.c)});

    InverseConfig cfg2 = cfg;
    cfg2.sigma_estimate = nd.sigma_star(cfg.sigma_estimate);
    SourceEstimate b = run_inverse(star, obs_star, cfg2, 11);

    REQUIRE(a.report.source_trajectory.size() == b.report.source_trajectory.size());
    for (size_t i = 0; i < a.report.source_trajectory.size(); ++i) {
        // a's trajectory is physical; b's is nondimensional (unit scales)
        CHECK(nd.x_star(a.report.source_trajectory[i][0]) ==
              doctest::Approx(b.report.source_trajectory[i][0]).epsilon(1e-9));
        CHECK(nd.x_star(a.report.source_trajectory[i][1]) ==
              doctest::Approx(b.report.source_trajectory[i][1]).epsilon(1e-9));
    }
}
