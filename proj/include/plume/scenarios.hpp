#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "plume/data.hpp"
#include "plume/network.hpp"
#include "plume/physics.hpp"
#include "plume/refsolver.hpp"
#include "plume/training.hpp"

namespace plume::scen {

// Built-in registry: S1 (constant wind, single instant t=3), S2 (variable
// wind, t in [0,4], k=0.5), S3 (S2 with k=1e-5), S4 (S3 with two sources),
// RD (20x20 km grid-style domain).
std::vector<phys::Scenario> builtin_scenarios();
phys::Scenario get_scenario(const std::string& name);

struct SensorGridSpec {
    int nx = 15, ny = 15;  // uniform interior grid
    int n_times = 5;       // equispaced over the observation window
    double noise_sd = 0;
};

std::vector<std::pair<double, double>> sensor_grid(const phys::Domain& d, int nx, int ny);
std::vector<double> observation_times(const phys::Scenario& sc, int n_times);

struct InverseConfig {
    net::ArchitectureSpec arch;  // defaults to the plain inverse architecture
    train::TrainConfig train;
    SensorGridSpec sensors;
    ref::GridSpec grid;
    double pass_threshold = 0.3;  // per-coordinate absolute error, domain units
    // width of the trainable source bump; 0 = inherit the scenario's sigma.
    // A broader estimation bump than the true emission keeps the coordinate
    // landscape informative far from the optimum.
    double sigma_estimate = 1.0;
    bool respect_scales = false;  // keep scenario scales instead of deriving them

    static InverseConfig defaults();
};

struct SourceEstimate {
    std::vector<std::array<double, 2>> predicted;  // physical coordinates
    std::vector<std::array<double, 2>> truth;
    std::vector<std::array<double, 2>> sq_error;  // (x, y) squared errors
    double threshold = 0.3;
    bool pass = false;      // every coordinate within threshold
    bool complete = true;   // training ran to schedule without divergence
    train::TrainReport report;
    phys::CharacteristicScales scales_used;
};

// Synthesizes observations with the reference solver, then trains.
SourceEstimate run_inverse(const phys::Scenario& scenario, const InverseConfig& cfg,
                           uint64_t seed);
// Same, but with externally supplied (e.g. ingested) observations.
SourceEstimate run_inverse(const phys::Scenario& scenario, const ObservationSet& obs,
                           const InverseConfig& cfg, uint64_t seed);

// Ten-coordinate verification protocol under S3 conditions.
const std::vector<std::array<double, 2>>& verification_coordinates();

struct VerificationRow {
    int index = 0;
    std::array<double, 2> test{};
    std::array<double, 2> predicted{};
    std::array<double, 2> mse{};
    bool pass = false;
    bool complete = true;
};

struct VerificationReport {
    std::vector<VerificationRow> rows;
    double threshold = 0.3;
    double pass_rate = 0;
};

VerificationReport verify_suite(const InverseConfig& cfg, uint64_t seed, int jobs = 1);

// Epoch/collocation trade-off runs on S2.
struct StudyConfig {
    int epochs = 0;  // split 50/50 between Adam and L-BFGS
    int collocation = 0;
};
std::vector<StudyConfig> study_configurations();  // the three canonical cases

struct StudyRow {
    int epochs = 0, collocation = 0;
    double x_pred = 0, y_pred = 0;
    double mse_x = 0, mse_y = 0;
};
std::vector<StudyRow> epoch_collocation_study(const InverseConfig& base, double epoch_scale,
                                              uint64_t seed);

// ---------------------------------------------------------------------------
// Data ingestion
// ---------------------------------------------------------------------------

enum class CoordinateConvention { XY, YX };

struct IngestResult {
    ObservationSet observations;
    phys::Domain bounds;       // bounding box of the samples
    double t_min = 0, t_max = 0;
};

// CSV schema: header x,y,t,c. The convention flag declares whether the file's
// first two columns are (x,y) or (y,x). Errors name the offending row. When
// `domain` is non-null, out-of-domain samples are rejected.
IngestResult ingest_observations(const std::string& path, CoordinateConvention convention,
                                 const phys::Domain* domain = nullptr);

// CSV schema: t,x,y,u,v or t,x,y,speed,direction_deg (meteorological "from"
// direction). Samples must form a complete uniform raster per time sample.
phys::WindFieldSpec ingest_wind(const std::string& path);

// u = s*sin(theta_from + pi), v = s*cos(theta_from + pi)
std::pair<double, double> wind_from_met(double speed, double direction_deg);

// Emits an RD-like synthetic dataset (obs.csv and wind.csv) for the given
// directory and returns the matching scenario.
struct RdDataset {
    std::string obs_path, wind_path;
    phys::Scenario scenario;
};
RdDataset generate_rd_dataset(const std::string& dir, uint64_t seed);

// Zero-model-mismatch oracle: fit a generator net to a steady scenario with
// the source fixed at truth, take its own predictions as observations, then
// recover the source with a warm-started inverse run.
struct SelfConsistencyResult {
    double max_coord_err_star = 0;  // nondimensional units
    SourceEstimate estimate;
};
SelfConsistencyResult self_consistency_check(uint64_t seed);

}  // namespace plume::scen
