#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ddrive/control.hpp"
#include "ddrive/tensor.hpp"

namespace dd {

struct Segment {
    float length = 0;     // meters, > 0
    float curvature = 0;  // 1/m, positive curves right, |k| <= 0.1
};

struct Track {
    std::vector<Segment> segments;
    float lane_width = 3.5f;
    bool loop = false;

    float total_length() const;
};

// Built-in tracks: "straight", "standard" (highway-like), "city".
Track make_track(const std::string& id);

struct VehicleState {
    float s = 0;    // arc length along lane center, m
    float d = 0;    // lateral offset, positive = right of center, m
    float psi = 0;  // heading error, positive = pointing right of lane, rad
    float v = 0;    // speed, m/s
};

enum class TimeOfDay { Day, Night };
enum class Weather { Sunny, Rain, ClearSky };

struct SceneConditions {
    TimeOfDay time = TimeOfDay::Day;
    Weather weather = Weather::Sunny;
    uint32_t seed = 0;
};

SceneConditions parse_conditions(const std::string& text, uint32_t seed);

struct LeadVehicle {
    float gap = 0;    // meters ahead along the lane
    float speed = 0;  // m/s
    float width = 1.9f;
    float height = 1.6f;
};

// Kinematics constants
constexpr float kWheelbase = 2.5f;        // m
constexpr float kMaxSteerRad = 0.61f;     // ~35 degrees at full lock
constexpr float kMaxSpeed = 30.0f;        // m/s
constexpr float kTickSeconds = 0.1f;      // 10 Hz lockstep

struct CenterPose {
    float x = 0, y = 0, theta = 0;
};

// Lane-center pose at arc length s (wraps when the track loops, extrapolates
// straight past the ends otherwise).
CenterPose centerline(const Track& track, float s);
float curvature_at(const Track& track, float s);

VehicleState advance(const VehicleState& st, const Commands& cmd, float dt, const Track& track);

using Frame = std::vector<uint8_t>;  // 120x160 grayscale, row-major

Frame render(const Track& track, const VehicleState& st, const SceneConditions& cond,
             const LeadVehicle* lead);

// Pure-pursuit label generator; output in [-1, 1], negative = left.
float oracle_steering(const Track& track, const VehicleState& st, float lookahead = 12.0f);

// Ground-truth detector stand-in; confidence grows with on-screen area.
std::vector<Detection> truth_detections(const Track& track, const VehicleState& st,
                                        const LeadVehicle* lead);

bool off_lane(const VehicleState& st);
bool collision(const VehicleState& st, const LeadVehicle* lead);

void write_pgm(const Frame& frame, std::ostream& out);
void write_pgm(const Tensor& image, std::ostream& out);  // any (h,w,1), clamped
void write_pgm_file(const Frame& frame, const std::string& path);

}  // namespace dd
