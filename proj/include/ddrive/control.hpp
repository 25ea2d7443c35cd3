#pragma once

#include <vector>

namespace dd {

// Discrete drive command set plus the continuous wheel angle the kinematics
// consume. The key flags are the discrete overlay: LEFT/RIGHT appear outside
// the dead zone, SLOW above the slow threshold, FORWARD whenever SLOW is not
// requested. LEFT and RIGHT never co-occur; SLOW and HARD_BRAKE never co-occur.
struct Commands {
    bool forward = false;
    bool left = false;
    bool right = false;
    bool slow = false;
    bool hard_brake = false;
    float steer = 0.0f;  // clamped angle, [-1, 1]
    int slow_ticks = 0;  // requested SLOW pulse duration
};

struct Detection {
    int class_id = 0;  // 1 = vehicle
    float x_min = 0, y_min = 0, x_max = 0, y_max = 0;  // pixels, origin top-left
    float confidence = 0.0f;
};

constexpr int kVehicleClass = 1;

struct SteerConfig {
    float dead_zone = 0.05f;
    float slow_threshold = 0.35f;
    float slow_pulse_gain = 6.0f;  // ticks per unit |angle|
};

struct BrakeConfig {
    float conf_threshold = 0.8f;
    float band_min = 53.0f;  // lane band, horizontal pixels of 160
    float band_max = 107.0f;
    float horizon_row = 54.0f;  // of 120
};

Commands steer_command(float angle, const SteerConfig& cfg = {});

// Vehicle-class detections centered in the lane band and below the horizon.
std::vector<Detection> relevant(const std::vector<Detection>& dets, const BrakeConfig& cfg = {});

// True when the most confident relevant detection crosses the threshold.
bool brake_decision(const std::vector<Detection>& dets, const BrakeConfig& cfg = {});

// HARD_BRAKE overrides SLOW and FORWARD.
Commands merge_commands(Commands steer, bool brake);

}  // namespace dd
