#include "ddrive/control.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dd {

Commands steer_command(float angle, const SteerConfig& cfg) {
    if (!std::isfinite(angle)) throw std::invalid_argument("steer_command: non-finite angle");
    float a = std::clamp(angle, -1.0f, 1.0f);
    Commands c;
    c.steer = a;
    if (a < -cfg.dead_zone)
        c.left = true;
    else if (a > cfg.dead_zone)
        c.right = true;
    if (std::abs(a) > cfg.slow_threshold) {
        c.slow = true;
        c.slow_ticks = static_cast<int>(std::ceil(cfg.slow_pulse_gain * std::abs(a)));
    } else {
        c.forward = true;
    }
    return c;
}

std::vector<Detection> relevant(const std::vector<Detection>& dets, const BrakeConfig& cfg) {
    std::vector<Detection> out;
    for (const Detection& d : dets) {
        if (d.class_id != kVehicleClass) continue;
        float cx = 0.5f * (d.x_min + d.x_max);
        if (cx < cfg.band_min || cx > cfg.band_max) continue;
        if (d.y_max <= cfg.horizon_row) continue;
        out.push_back(d);
    }
    return out;
}

bool brake_decision(const std::vector<Detection>& dets, const BrakeConfig& cfg) {
    float best = 0.0f;
    for (const Detection& d : relevant(dets, cfg)) best = std::max(best, d.confidence);
    return best > cfg.conf_threshold;
}

Commands merge_commands(Commands steer, bool brake) {
    if (brake) {
        steer.hard_brake = true;
        steer.slow = false;
        steer.slow_ticks = 0;
        steer.forward = false;
    }
    return steer;
}

}  // namespace dd
