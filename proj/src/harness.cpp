#include "ddrive/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "ddrive/control.hpp"

namespace dd {

int autonomy_percent(int interventions, float duration_s) {
    if (duration_s <= 0) throw std::invalid_argument("autonomy: duration must be positive");
    double a = (1.0 - 6.0 * interventions / duration_s) * 100.0;
    return static_cast<int>(std::lround(std::max(0.0, a)));
}

namespace {

std::vector<const Tensor*> flat_grads(const std::vector<LayerParams>& grads) {
    std::vector<const Tensor*> out;
    for (const LayerParams& g : grads) {
        if (g.w.size()) out.push_back(&g.w);
        if (g.w2.size()) out.push_back(&g.w2);
        if (g.b.size()) out.push_back(&g.b);
    }
    return out;
}

}  // namespace

TrainHistory train(Model& model, const Dataset& dataset, const TrainConfig& cfg) {
    if (dataset.samples.empty()) throw std::invalid_argument("train: empty dataset");
    if (cfg.batch_size < 1) throw std::invalid_argument("train: batch size must be >= 1");
    if (cfg.epochs < 0) throw std::invalid_argument("train: negative epoch count");

    std::vector<Tensor*> params = param_tensors(model);
    AdamState opt = make_adam(param_tensors(static_cast<const Model&>(model)), cfg.adam);
    GradAccum acc = make_grad_accum(model);
    Rng rng(cfg.seed);

    int steps_per_epoch = static_cast<int>(
        (dataset.samples.size() + cfg.batch_size - 1) / static_cast<size_t>(cfg.batch_size));

    TrainHistory hist;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double epoch_loss = 0;
        for (int step = 0; step < steps_per_epoch; ++step) {
            Batch batch =
                make_batch(dataset, rng, cfg.batch_size, cfg.augment ? &cfg.augment_cfg : nullptr);
            acc.reset();
            double loss = 0;
            float inv_n = 1.0f / static_cast<float>(cfg.batch_size);
            for (int i = 0; i < cfg.batch_size; ++i) {
                ForwardCache cache;
                Tensor out = forward_model(model, batch.frames[i], &cache);
                float err = out.data[0] - batch.targets[i];
                loss += static_cast<double>(err) * err;
                backward_model(model, cache, 2.0f * err * inv_n, acc);
            }
            loss /= cfg.batch_size;
            if (!std::isfinite(loss)) throw std::runtime_error("train: loss diverged");
            std::vector<LayerParams> grads = finalize_grads(model, acc);
            if (cfg.warmup_steps > 0 && opt.t < cfg.warmup_steps)
                opt.cfg.lr = cfg.adam.lr * static_cast<float>(opt.t + 1) /
                             static_cast<float>(cfg.warmup_steps);
            else
                opt.cfg.lr = cfg.adam.lr;
            adam_step(params, flat_grads(grads), opt);
            epoch_loss += loss;
        }
        hist.epoch_loss.push_back(epoch_loss / steps_per_epoch);
        if (!cfg.checkpoint_path.empty() && cfg.checkpoint_every > 0 &&
            (epoch + 1) % cfg.checkpoint_every == 0)
            save_model_file(model, &opt, cfg.checkpoint_path);
    }
    if (!cfg.checkpoint_path.empty()) save_model_file(model, &opt, cfg.checkpoint_path);
    return hist;
}

OfflineEval evaluate_offline(Model& model, const Dataset& dataset) {
    if (dataset.samples.empty()) throw std::invalid_argument("evaluate_offline: empty dataset");
    OfflineEval ev;
    for (const Sample& s : dataset.samples) {
        float p = predict(model, frame_to_tensor(s.frame));
        double err = static_cast<double>(p) - s.angle;
        ev.mse += err * err;
        ev.mae += std::abs(err);
    }
    ev.mse /= static_cast<double>(dataset.samples.size());
    ev.mae /= static_cast<double>(dataset.samples.size());
    return ev;
}

Driver model_driver(Model& model) {
    return [&model](const Tensor& frame, const VehicleState&) {
        return std::clamp(predict(model, frame), -1.0f, 1.0f);
    };
}

Driver oracle_driver(const Track& track) {
    return [track](const Tensor&, const VehicleState& st) { return oracle_steering(track, st); };
}

EvalReport run_closed_loop(const Driver& driver, const ScenarioSpec& scenario, bool brake_enabled) {
    if (scenario.duration_s <= 0) throw std::invalid_argument("scenario: duration must be positive");
    Track track = make_track(scenario.track_id);
    SceneConditions cond = scenario.conditions;
    cond.seed = scenario.seed ^ cond.seed;

    std::vector<LeadSpawn> spawns = scenario.leads;
    std::stable_sort(spawns.begin(), spawns.end(),
                     [](const LeadSpawn& a, const LeadSpawn& b) { return a.at_s < b.at_s; });
    size_t next_spawn = 0;

    VehicleState st;
    st.v = std::clamp(scenario.initial_speed, 0.0f, kMaxSpeed);
    EvalReport rep;
    bool has_lead = false;
    LeadVehicle lead;
    int slow_remaining = 0;
    double abs_d = 0;
    float clock = 0;
    const float dt = kTickSeconds;

    while (clock < scenario.duration_s) {
        if (!has_lead && next_spawn < spawns.size() && clock >= spawns[next_spawn].at_s) {
            lead.gap = spawns[next_spawn].gap;
            lead.speed = spawns[next_spawn].speed;
            has_lead = true;
            ++next_spawn;
        }

        Frame fr = render(track, st, cond, has_lead ? &lead : nullptr);
        float angle = driver(frame_to_tensor(fr), st);
        Commands cmd = steer_command(angle);
        if (cmd.slow) slow_remaining = std::max(slow_remaining, cmd.slow_ticks);
        if (slow_remaining > 0) {
            cmd.slow = true;
            cmd.forward = false;
            --slow_remaining;
        }
        if (st.v >= scenario.speed_limit) cmd.forward = false;
        bool brake = false;
        if (brake_enabled && has_lead)
            brake = brake_decision(truth_detections(track, st, &lead));
        cmd = merge_commands(cmd, brake);

        float s_before = st.s;
        st = advance(st, cmd, dt, track);
        if (has_lead) {
            lead.gap += lead.speed * dt - (st.s - s_before);
            if (collision(st, &lead)) {
                rep.collisions += 1;
                has_lead = false;
            }
        }

        rep.ticks += 1;
        abs_d += std::abs(st.d);
        clock += dt;

        if (off_lane(st)) {
            rep.interventions += 1;
            st.d = 0;
            st.psi = 0;
            clock += 6.0f;  // charged realignment time, no distance credit
        }
    }
    rep.autonomy_percent = autonomy_percent(rep.interventions, scenario.duration_s);
    rep.mean_abs_offset_m = rep.ticks ? static_cast<float>(abs_d / rep.ticks) : 0.0f;
    return rep;
}

EvalReport run_closed_loop(Model& model, const ScenarioSpec& scenario, bool brake_enabled) {
    return run_closed_loop(model_driver(model), scenario, brake_enabled);
}

BenchReport bench(std::vector<Model*> models, int n_frames, int warmup) {
    if (models.empty()) throw std::invalid_argument("bench: no models");
    if (n_frames <= 0) throw std::invalid_argument("bench: n_frames must be positive");

    Track track = make_track("standard");
    SceneConditions cond;  // day, sunny
    std::vector<Tensor> frames;
    frames.reserve(n_frames);
    VehicleState st;
    st.v = 10;
    for (int i = 0; i < n_frames; ++i) {
        st.s = static_cast<float>(i) * 2.5f;
        st.d = 0.3f * std::sin(static_cast<float>(i) * 0.17f);
        frames.push_back(frame_to_tensor(render(track, st, cond, nullptr)));
    }

    BenchReport rep;
    for (Model* m : models) {
        for (int i = 0; i < warmup; ++i) predict(*m, frames[i % frames.size()]);
        std::vector<double> ms(n_frames);
        for (int i = 0; i < n_frames; ++i) {
            auto t0 = std::chrono::steady_clock::now();
            volatile float out = predict(*m, frames[i]);
            (void)out;
            auto t1 = std::chrono::steady_clock::now();
            ms[i] = std::chrono::duration<double, std::milli>(t1 - t0).count();
        }
        std::sort(ms.begin(), ms.end());
        ModelSummary sum = summarize(m->spec);
        BenchModelReport r;
        r.name = m->spec.name;
        r.median_ms = ms[ms.size() / 2];
        r.p95_ms = ms[static_cast<size_t>(0.95 * (ms.size() - 1))];
        r.params = sum.total_params;
        r.macs = sum.total_macs;
        rep.models.push_back(r);
    }
    if (rep.models.size() >= 2 && rep.models[0].median_ms > 0)
        rep.latency_ratio = rep.models[1].median_ms / rep.models[0].median_ms;
    return rep;
}

Dataset generate_dataset(const GenDataConfig& cfg) {
    if (cfg.samples <= 0) throw std::invalid_argument("generate_dataset: samples must be positive");
    if (cfg.conditions.empty())
        throw std::invalid_argument("generate_dataset: need at least one condition");
    Track track = make_track(cfg.track_id);
    Dataset ds;
    ds.provenance = "raw";
    ds.samples.reserve(cfg.samples);

    int n_cond = static_cast<int>(cfg.conditions.size());
    for (int ci = 0; ci < n_cond; ++ci) {
        int quota = cfg.samples / n_cond + (ci < cfg.samples % n_cond ? 1 : 0);
        SceneConditions cond =
            parse_conditions(cfg.conditions[ci], cfg.seed + static_cast<uint32_t>(ci) * 101u);
        Rng rng(cfg.seed * 7919u + static_cast<uint32_t>(ci));
        VehicleState st;
        int tick = 0;
        while (quota > 0) {
            // periodic kicks off the lane center so labels include recovery
            if (tick % 20 == 10) {
                st.d = std::clamp(st.d + rng.uniform(-0.8f, 0.8f), -0.9f, 0.9f);
                st.psi += rng.uniform(-0.15f, 0.15f);
            }
            float angle = oracle_steering(track, st);
            if (st.v >= 3.0f) {  // skip the standing start
                Sample s;
                s.frame = render(track, st, cond, nullptr);
                s.angle = angle;
                ds.samples.push_back(std::move(s));
                --quota;
            }
            Commands cmd = steer_command(angle);
            if (st.v >= cfg.speed_limit) cmd.forward = false;
            st = advance(st, cmd, kTickSeconds, track);
            if (off_lane(st)) {
                st.d = 0;
                st.psi = 0;
            }
            ++tick;
        }
    }
    return ds;
}

std::map<std::string, std::string> parse_config_text(const std::string& text) {
    std::map<std::string, std::string> out;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    auto trim = [](std::string s) {
        size_t a = s.find_first_not_of(" \t\r");
        size_t b = s.find_last_not_of(" \t\r");
        return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    while (std::getline(in, line)) {
        ++lineno;
        size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::string trimmed = trim(line);
        if (trimmed.empty()) continue;
        size_t eq = trimmed.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("config line " + std::to_string(lineno) + ": expected key = value");
        std::string key = trim(trimmed.substr(0, eq));
        std::string value = trim(trimmed.substr(eq + 1));
        if (key.empty())
            throw std::runtime_error("config line " + std::to_string(lineno) + ": empty key");
        if (!out.emplace(key, value).second)
            throw std::runtime_error("config line " + std::to_string(lineno) + ": duplicate key " + key);
    }
    return out;
}

std::map<std::string, std::string> parse_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_config_text(ss.str());
}

}  // namespace dd
