#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "ddrive/adam.hpp"
#include "ddrive/dataset.hpp"
#include "ddrive/model.hpp"
#include "ddrive/sim.hpp"

namespace dd {

struct LeadSpawn {
    float at_s = 0;     // session time, seconds
    float gap = 40;     // meters ahead at spawn
    float speed = 0;    // m/s
};

struct ScenarioSpec {
    std::string track_id = "standard";
    SceneConditions conditions;
    float duration_s = 300.0f;
    float speed_limit = 12.0f;   // m/s; FORWARD withheld at/above it
    float initial_speed = 5.0f;  // m/s; rolling start
    std::vector<LeadSpawn> leads;
    uint32_t seed = 0;
};

struct EvalReport {
    int interventions = 0;
    int autonomy_percent = 0;
    int collisions = 0;
    float mean_abs_offset_m = 0;
    int ticks = 0;
};

struct BenchModelReport {
    std::string name;
    double median_ms = 0;
    double p95_ms = 0;
    long long params = 0;
    long long macs = 0;
};

struct BenchReport {
    std::vector<BenchModelReport> models;
    double latency_ratio = 0;  // second / first median
};

struct TrainConfig {
    int epochs = 50;
    int batch_size = 300;
    AdamConfig adam;
    bool augment = true;
    AugmentConfig augment_cfg;
    uint32_t seed = 0;
    // Linear learning-rate warmup over the first N optimizer steps. Adam's
    // bias-corrected first steps are effectively sign steps of size lr, which
    // can push a fresh ReLU stack into an all-dead constant-output regime.
    int warmup_steps = 25;
    int checkpoint_every = 0;  // epochs; 0 = only at the end
    std::string checkpoint_path;
};

struct TrainHistory {
    std::vector<double> epoch_loss;  // mean batch MSE per epoch
};

// Each intervention is charged 6 seconds of session time.
int autonomy_percent(int interventions, float duration_s);

TrainHistory train(Model& model, const Dataset& dataset, const TrainConfig& cfg);

struct OfflineEval {
    double mse = 0;
    double mae = 0;
};
OfflineEval evaluate_offline(Model& model, const Dataset& dataset);

// Steering policy under test: raw frame tensor + state -> angle in [-1, 1].
using Driver = std::function<float(const Tensor&, const VehicleState&)>;

Driver model_driver(Model& model);
Driver oracle_driver(const Track& track);

EvalReport run_closed_loop(const Driver& driver, const ScenarioSpec& scenario, bool brake_enabled);
EvalReport run_closed_loop(Model& model, const ScenarioSpec& scenario, bool brake_enabled);

BenchReport bench(std::vector<Model*> models, int n_frames = 200, int warmup = 20);

struct GenDataConfig {
    std::string track_id = "standard";
    std::vector<std::string> conditions = {"day,sunny"};
    int samples = 5000;
    float speed_limit = 12.0f;
    uint32_t seed = 0;
};

// Oracle driving with periodic lateral/heading kicks so the labels include
// corrective steering, not just steady-state tracking.
Dataset generate_dataset(const GenDataConfig& cfg);

// "key = value" lines; '#' starts a comment; keys must be unique.
std::map<std::string, std::string> parse_config_text(const std::string& text);
std::map<std::string, std::string> parse_config_file(const std::string& path);

}  // namespace dd
