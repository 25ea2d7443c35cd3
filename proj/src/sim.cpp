#include "ddrive/sim.hpp"

#include "ddrive/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace dd {

namespace {

// Camera model: 1.2 m above the lane, pitched 5 degrees down, 90 degree
// horizontal FOV onto 160x120.
constexpr float kCamHeight = 1.2f;
constexpr float kCamPitch = 5.0f * 3.14159265f / 180.0f;
constexpr float kFocal = 80.0f;  // pixels; (160/2) / tan(45 deg)
constexpr float kCx = 79.5f, kCy = 59.5f;
constexpr float kRenderFar = 85.0f;
constexpr float kNightRange = 25.0f;
constexpr float kHeadlightCone = 0.30f;  // rad, half angle
constexpr float kNightAttenuation = 0.25f;

// camera basis in the vehicle frame (x forward, y left, z up)
const float kFx = std::cos(kCamPitch), kFz = -std::sin(kCamPitch);
const float kDx = -std::sin(kCamPitch), kDz = -std::cos(kCamPitch);

uint32_t hash2(uint32_t a, uint32_t b) {
    uint32_t h = a * 0x9E3779B9u ^ (b + 0x85EBCA6Bu);
    h ^= h >> 16;
    h *= 0x7FEB352Du;
    h ^= h >> 15;
    h *= 0x846CA68Bu;
    h ^= h >> 16;
    return h;
}

float hash_f(uint32_t h, uint32_t i) {
    return static_cast<float>(hash2(h, i) >> 8) * (1.0f / 16777216.0f);
}

}  // namespace

float Track::total_length() const {
    float t = 0;
    for (const Segment& s : segments) t += s.length;
    return t;
}

Track make_track(const std::string& id) {
    Track t;
    if (id == "straight") {
        t.segments = {{6000.0f, 0.0f}};
    } else if (id == "standard") {
        // highway-like: long straights, gentle sweepers both ways
        t.segments = {
            {300, 0.0f},   {220, 0.004f},  {280, 0.0f},   {200, -0.005f}, {320, 0.0f},
            {180, 0.006f}, {260, 0.0f},    {220, -0.004f}, {300, 0.0f},   {200, 0.005f},
            {280, 0.0f},   {180, -0.006f}, {320, 0.0f},   {160, 0.004f},  {280, 0.0f},
            {200, -0.005f}, {300, 0.0f},   {180, 0.005f},  {260, 0.0f},   {220, -0.004f},
            {340, 0.0f},
        };
    } else if (id == "city") {
        // tighter corners, shorter blocks
        t.segments = {
            {120, 0.0f},   {90, 0.012f},  {110, 0.0f},  {80, -0.015f}, {130, 0.0f},
            {70, 0.018f},  {120, 0.0f},   {90, -0.012f}, {100, 0.0f},  {80, 0.015f},
            {140, 0.0f},   {70, -0.018f}, {120, 0.0f},  {90, 0.012f},  {110, 0.0f},
            {80, -0.015f}, {130, 0.0f},   {90, 0.014f},  {120, 0.0f},  {70, -0.014f},
            {140, 0.0f},   {80, 0.012f},  {120, 0.0f},  {90, -0.012f}, {130, 0.0f},
            {70, 0.016f},  {120, 0.0f},   {80, -0.016f}, {140, 0.0f},  {90, 0.012f},
            {120, 0.0f},   {80, -0.012f}, {150, 0.0f},  {70, 0.014f},  {130, 0.0f},
            {90, -0.014f}, {160, 0.0f},   {80, 0.012f},  {140, 0.0f},  {90, -0.012f},
            {200, 0.0f},
        };
    } else {
        throw std::invalid_argument("unknown track id: " + id);
    }
    for (const Segment& s : t.segments) {
        if (s.length <= 0) throw std::invalid_argument("track: nonpositive segment length");
        if (std::abs(s.curvature) > 0.1f) throw std::invalid_argument("track: curvature too sharp");
    }
    return t;
}

SceneConditions parse_conditions(const std::string& text, uint32_t seed) {
    SceneConditions c;
    c.seed = seed;
    size_t comma = text.find(',');
    std::string tod = text.substr(0, comma);
    std::string wx = comma == std::string::npos ? "" : text.substr(comma + 1);
    if (tod == "day")
        c.time = TimeOfDay::Day;
    else if (tod == "night")
        c.time = TimeOfDay::Night;
    else
        throw std::invalid_argument("conditions: unknown time of day: " + tod);
    if (wx == "sunny")
        c.weather = Weather::Sunny;
    else if (wx == "rain")
        c.weather = Weather::Rain;
    else if (wx == "clear_sky" || wx == "clear")
        c.weather = Weather::ClearSky;
    else
        throw std::invalid_argument("conditions: unknown weather: " + wx);
    return c;
}

// World heading follows theta' = -curvature, so positive curvature turns right.
CenterPose centerline(const Track& track, float s) {
    float total = track.total_length();
    if (track.loop) {
        s = std::fmod(s, total);
        if (s < 0) s += total;
    }
    CenterPose p{0, 0, 0};
    if (s < 0) {  // extrapolate straight behind the start
        return {s, 0, 0};
    }
    float remaining = s;
    for (const Segment& seg : track.segments) {
        float run = std::min(remaining, seg.length);
        float k = seg.curvature;
        if (std::abs(k) < 1e-9f) {
            p.x += run * std::cos(p.theta);
            p.y += run * std::sin(p.theta);
        } else {
            float th1 = p.theta - k * run;
            p.x += (std::sin(p.theta) - std::sin(th1)) / k;
            p.y += -(std::cos(p.theta) - std::cos(th1)) / k;
            p.theta = th1;
        }
        remaining -= run;
        if (remaining <= 0) return p;
    }
    // extrapolate straight past the end
    p.x += remaining * std::cos(p.theta);
    p.y += remaining * std::sin(p.theta);
    return p;
}

float curvature_at(const Track& track, float s) {
    float total = track.total_length();
    if (track.loop) {
        s = std::fmod(s, total);
        if (s < 0) s += total;
    }
    if (s < 0 || s >= total) return 0;
    for (const Segment& seg : track.segments) {
        if (s < seg.length) return seg.curvature;
        s -= seg.length;
    }
    return 0;
}

VehicleState advance(const VehicleState& st, const Commands& cmd, float dt, const Track& track) {
    if (dt <= 0) throw std::invalid_argument("advance: dt must be positive");
    float acc;
    if (cmd.hard_brake)
        acc = -8.0f;
    else if (cmd.slow)
        acc = -4.0f;
    else if (cmd.forward)
        acc = 2.0f;
    else
        acc = -0.5f;
    VehicleState out = st;
    out.v = std::clamp(st.v + acc * dt, 0.0f, kMaxSpeed);
    float steer = std::clamp(cmd.steer, -1.0f, 1.0f);
    out.psi = st.psi + (out.v / kWheelbase) * std::tan(kMaxSteerRad * steer) * dt -
              curvature_at(track, st.s) * out.v * dt;
    out.d = st.d + out.v * std::sin(out.psi) * dt;
    out.s = st.s + out.v * std::cos(out.psi) * dt;
    return out;
}

namespace {

struct VehicleFrame {
    float px, py;   // world position
    float ch, sh_;  // cos/sin of world heading
    void from(const Track& track, const VehicleState& st) {
        CenterPose c = centerline(track, st.s);
        float nx = std::sin(c.theta), ny = -std::cos(c.theta);  // right normal
        px = c.x + st.d * nx;
        py = c.y + st.d * ny;
        float h = c.theta - st.psi;
        ch = std::cos(h);
        sh_ = std::sin(h);
    }
    // world -> vehicle frame (x forward, y left)
    void to_local(float wx, float wy, float* lx, float* ly) const {
        float rx = wx - px, ry = wy - py;
        *lx = rx * ch + ry * sh_;
        *ly = -rx * sh_ + ry * ch;
    }
};

struct LeadProjection {
    float x0, y0, x1, y1;  // unclamped pixel bbox
    float dist;            // meters ahead in the vehicle frame
    float bearing;         // rad, vehicle frame
};

// Billboard model: the lead spans its width across the lane at its own arc
// position, from the road surface up to its height.
bool project_lead(const Track& track, const VehicleState& st, const LeadVehicle& lead,
                  LeadProjection* out) {
    VehicleFrame vf;
    vf.from(track, st);
    CenterPose lc = centerline(track, st.s + lead.gap);
    float nx = std::sin(lc.theta), ny = -std::cos(lc.theta);
    float u0 = 1e9f, v0 = 1e9f, u1 = -1e9f, v1 = -1e9f;
    float cx_l, cy_l;
    vf.to_local(lc.x, lc.y, &cx_l, &cy_l);
    if (cx_l < 0.5f) return false;  // at/behind the camera
    for (int side = -1; side <= 1; side += 2) {
        float wx = lc.x + side * 0.5f * lead.width * nx;
        float wy = lc.y + side * 0.5f * lead.width * ny;
        float lx, ly;
        vf.to_local(wx, wy, &lx, &ly);
        if (lx < 0.2f) return false;
        for (int top = 0; top <= 1; ++top) {
            float z = top ? lead.height : 0.0f;
            // camera-frame coordinates
            float rx = lx, ry = ly, rz = z - kCamHeight;
            float zc = rx * kFx + rz * kFz;
            float xc = -ry;
            float yc = rx * kDx + rz * kDz;
            if (zc < 0.1f) return false;
            float u = kCx + kFocal * xc / zc;
            float v = kCy + kFocal * yc / zc;
            u0 = std::min(u0, u);
            u1 = std::max(u1, u);
            v0 = std::min(v0, v);
            v1 = std::max(v1, v);
        }
    }
    out->x0 = u0;
    out->y0 = v0;
    out->x1 = u1;
    out->y1 = v1;
    out->dist = cx_l;
    out->bearing = std::atan2(cy_l, cx_l);
    return true;
}

struct Puddle {
    float s, d, a, b;
};

// Seeded elliptical puddles, one candidate per 6 m slot along the lane.
bool puddle_for_slot(uint32_t seed, int slot, Puddle* p) {
    uint32_t h = hash2(seed, static_cast<uint32_t>(slot) * 2u + 12345u);
    if (hash_f(h, 0) > 0.75f) return false;
    p->s = static_cast<float>(slot) * 6.0f + hash_f(h, 1) * 6.0f;
    p->d = (hash_f(h, 2) - 0.5f) * 3.4f;
    p->a = 1.5f + hash_f(h, 3) * 2.0f;
    p->b = 0.35f + hash_f(h, 4) * 0.6f;
    return true;
}

bool in_puddle(uint32_t seed, float s_p, float d_p) {
    int lo = static_cast<int>(std::floor((s_p - 4.0f) / 6.0f));
    int hi = static_cast<int>(std::floor((s_p + 4.0f) / 6.0f));
    for (int slot = lo; slot <= hi; ++slot) {
        Puddle p;
        if (!puddle_for_slot(seed, slot, &p)) continue;
        float ds = (s_p - p.s) / p.a;
        float dd = (d_p - p.d) / p.b;
        if (ds * ds + dd * dd < 1.0f) return true;
    }
    return false;
}

}  // namespace

Frame render(const Track& track, const VehicleState& st, const SceneConditions& cond,
             const LeadVehicle* lead) {
    bool night = cond.time == TimeOfDay::Night;
    bool rain = cond.weather == Weather::Rain;
    float sky = rain ? 120.0f : 150.0f;
    float background = 110.0f;
    float road = 55.0f;
    float marking = 235.0f;
    float half_lane = 0.5f * track.lane_width;

    // lane-center polyline ahead of the vehicle, in the vehicle frame
    constexpr int kPts = 340;
    constexpr float kStep = 0.25f;
    float pxs[kPts], pys[kPts];
    float s0 = st.s - 4.0f;
    VehicleFrame vf;
    vf.from(track, st);
    for (int i = 0; i < kPts; ++i) {
        CenterPose c = centerline(track, s0 + kStep * static_cast<float>(i));
        vf.to_local(c.x, c.y, &pxs[i], &pys[i]);
    }

    Frame out(static_cast<size_t>(kFrameH) * kFrameW);
    int j = 0;
    for (int v = 0; v < kFrameH; ++v) {
        for (int u = 0; u < kFrameW; ++u) {
            float xn = (static_cast<float>(u) - kCx) / kFocal;
            float yn = (static_cast<float>(v) - kCy) / kFocal;
            // ray in the vehicle frame
            float dx = kFx + yn * kDx;
            float dy = -xn;
            float dz = kFz + yn * kDz;
            float val;
            float lit = 1.0f;  // night attenuation factor
            if (dz >= -1e-5f) {
                val = sky;
                if (night) lit = kNightAttenuation;
            } else {
                float t = kCamHeight / -dz;
                float gx = t * dx, gy = t * dy;
                float dist = std::sqrt(gx * gx + gy * gy);
                if (night)
                    lit = (dist <= kNightRange && std::abs(std::atan2(gy, gx)) <= kHeadlightCone)
                              ? 1.0f
                              : kNightAttenuation;
                if (dist > kRenderFar) {
                    val = background;
                } else {
                    // nearest polyline vertex, warm-started from the last pixel
                    auto d2 = [&](int idx) {
                        float ax = gx - pxs[idx], ay = gy - pys[idx];
                        return ax * ax + ay * ay;
                    };
                    while (j + 1 < kPts && d2(j + 1) < d2(j)) ++j;
                    while (j > 0 && d2(j - 1) < d2(j)) --j;
                    int seg = j == kPts - 1 ? j - 1 : j;
                    float ex = pxs[seg + 1] - pxs[seg], ey = pys[seg + 1] - pys[seg];
                    float len2 = ex * ex + ey * ey;
                    float tproj = len2 > 1e-12f
                                      ? std::clamp(((gx - pxs[seg]) * ex + (gy - pys[seg]) * ey) / len2,
                                                   0.0f, 1.0f)
                                      : 0.0f;
                    float qx = pxs[seg] + tproj * ex, qy = pys[seg] + tproj * ey;
                    float inv = len2 > 1e-12f ? 1.0f / std::sqrt(len2) : 0.0f;
                    // right normal of the path direction
                    float d_p = ((gx - qx) * ey - (gy - qy) * ex) * inv * -1.0f;
                    float s_p = s0 + (static_cast<float>(seg) + tproj) * kStep;
                    float ad = std::abs(d_p);
                    if (ad > half_lane + 0.15f) {
                        val = background;
                    } else if (ad >= half_lane - 0.12f && ad <= half_lane + 0.08f) {
                        val = marking;  // boundary line
                    } else if (ad <= 0.07f && std::fmod(s_p, 4.0f) < 2.0f && s_p >= 0.0f) {
                        val = marking;  // dashed center line
                    } else if (ad <= half_lane) {
                        val = road;
                    } else {
                        val = background;
                    }
                    if (rain && ad <= half_lane + 0.15f && in_puddle(cond.seed, s_p, d_p))
                        val = 0.25f * val + 0.75f * 100.0f;
                }
            }
            out[static_cast<size_t>(v) * kFrameW + u] =
                static_cast<uint8_t>(std::clamp(val * lit + 0.5f, 0.0f, 255.0f));
        }
    }

    if (lead) {
        LeadProjection lp;
        if (project_lead(track, st, *lead, &lp)) {
            int ux0 = std::max(0, static_cast<int>(std::floor(lp.x0)));
            int ux1 = std::min(kFrameW - 1, static_cast<int>(std::ceil(lp.x1)));
            int vy0 = std::max(0, static_cast<int>(std::floor(lp.y0)));
            int vy1 = std::min(kFrameH - 1, static_cast<int>(std::ceil(lp.y1)));
            float body = 45.0f;
            if (night && !(lp.dist <= kNightRange && std::abs(lp.bearing) <= kHeadlightCone))
                body *= kNightAttenuation;
            for (int v = vy0; v <= vy1; ++v)
                for (int u = ux0; u <= ux1; ++u)
                    out[static_cast<size_t>(v) * kFrameW + u] = static_cast<uint8_t>(body);
        }
    }
    return out;
}

float oracle_steering(const Track& track, const VehicleState& st, float lookahead) {
    if (lookahead <= 0) throw std::invalid_argument("oracle_steering: lookahead must be positive");
    VehicleFrame vf;
    vf.from(track, st);
    CenterPose tgt = centerline(track, st.s + lookahead);
    float lx, ly;
    vf.to_local(tgt.x, tgt.y, &lx, &ly);
    float l2 = lx * lx + ly * ly;
    if (l2 < 1e-6f) return 0.0f;
    // pure pursuit: curvature through the lookahead point; right-positive
    float kappa = -2.0f * ly / l2;
    float full_lock = std::tan(kMaxSteerRad) / kWheelbase;
    return std::clamp(kappa / full_lock, -1.0f, 1.0f);
}

std::vector<Detection> truth_detections(const Track& track, const VehicleState& st,
                                        const LeadVehicle* lead) {
    std::vector<Detection> out;
    if (!lead) return out;
    LeadProjection lp;
    if (!project_lead(track, st, *lead, &lp)) return out;
    float x0 = std::clamp(lp.x0, 0.0f, static_cast<float>(kFrameW));
    float x1 = std::clamp(lp.x1, 0.0f, static_cast<float>(kFrameW));
    float y0 = std::clamp(lp.y0, 0.0f, static_cast<float>(kFrameH));
    float y1 = std::clamp(lp.y1, 0.0f, static_cast<float>(kFrameH));
    if (x1 - x0 < 0.5f || y1 - y0 < 0.5f) return out;  // off screen
    float area = (x1 - x0) * (y1 - y0);
    Detection d;
    d.class_id = kVehicleClass;
    d.x_min = x0;
    d.y_min = y0;
    d.x_max = x1;
    d.y_max = y1;
    d.confidence = 0.3f + 0.69f * std::min(1.0f, area / 3000.0f);
    out.push_back(d);
    return out;
}

bool off_lane(const VehicleState& st) { return std::abs(st.d) > 1.0f; }

bool collision(const VehicleState& st, const LeadVehicle* lead) {
    (void)st;
    return lead && lead->gap <= 0.0f;
}

void write_pgm(const Frame& frame, std::ostream& out) {
    out << "P5\n" << kFrameW << " " << kFrameH << "\n255\n";
    out.write(reinterpret_cast<const char*>(frame.data()), static_cast<std::streamsize>(frame.size()));
}

void write_pgm(const Tensor& image, std::ostream& out) {
    if (image.shape.size() != 3 || image.shape[2] != 1)
        throw std::invalid_argument("write_pgm: expected (h,w,1) image");
    out << "P5\n" << image.shape[1] << " " << image.shape[0] << "\n255\n";
    for (float v : image.data) {
        uint8_t b = static_cast<uint8_t>(std::clamp(v + 0.5f, 0.0f, 255.0f));
        out.write(reinterpret_cast<const char*>(&b), 1);
    }
}

void write_pgm_file(const Frame& frame, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for write: " + path);
    write_pgm(frame, f);
}

}  // namespace dd
