#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "ddrive/gemm.hpp"
#include "ddrive/harness.hpp"

using nlohmann::json;

namespace {

dd::ModelSpec spec_by_name(const std::string& name) {
    if (name == "original") return dd::build_pilotnet_original();
    if (name == "modified") return dd::build_pilotnet_modified();
    throw CLI::ValidationError("--model", "expected 'original' or 'modified'");
}

void write_json(const json& j, const std::string& path) {
    if (path.empty()) return;
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open for write: " + path);
    f << j.dump(2) << "\n";
}

json report_json(const dd::EvalReport& r) {
    return json{{"interventions", r.interventions},
                {"autonomy_percent", r.autonomy_percent},
                {"collisions", r.collisions},
                {"mean_abs_offset_m", r.mean_abs_offset_m},
                {"ticks", r.ticks}};
}

void print_report(const dd::EvalReport& r) {
    std::printf("interventions: %d\n", r.interventions);
    std::printf("autonomy_percent: %d\n", r.autonomy_percent);
    std::printf("collisions: %d\n", r.collisions);
    std::printf("mean_abs_offset_m: %.4f\n", r.mean_abs_offset_m);
    std::printf("ticks: %d\n", r.ticks);
}

dd::LeadSpawn parse_lead(const std::string& text) {
    // at_s:gap:speed
    dd::LeadSpawn l;
    if (std::sscanf(text.c_str(), "%f:%f:%f", &l.at_s, &l.gap, &l.speed) != 3)
        throw CLI::ValidationError("--lead", "expected at_s:gap:speed");
    return l;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dual-model driving stack: data generation, training, closed-loop evaluation"};
    app.require_subcommand(1);
    app.set_config("--config")->configurable(false);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "record oracle driving as a labeled dataset");
    std::string g_track = "standard", g_out;
    std::vector<std::string> g_conditions;
    int g_samples = 5000;
    float g_speed_limit = 12.0f;
    uint32_t g_seed = 0;
    gen->add_option("--track", g_track, "track id: straight|standard|city");
    gen->add_option("--conditions", g_conditions, "scene conditions, e.g. day,sunny (repeatable)");
    gen->add_option("--samples", g_samples, "number of samples");
    gen->add_option("--speed-limit", g_speed_limit, "m/s");
    gen->add_option("--seed", g_seed, "rng seed");
    gen->add_option("--out", g_out, "dataset output path")->required();

    // balance
    auto* bal = app.add_subcommand("balance", "thin over-represented steering bins");
    std::string b_in, b_out;
    int b_bins = 21, b_cap = 200;
    bool b_mirror = false;
    uint32_t b_seed = 0;
    bal->add_option("--in", b_in, "input dataset")->required();
    bal->add_option("--bins", b_bins, "histogram bins over [-1,1]");
    bal->add_option("--cap", b_cap, "max samples per bin");
    bal->add_flag("--mirror", b_mirror, "append mirrored copies after balancing");
    bal->add_option("--seed", b_seed, "rng seed");
    bal->add_option("--out", b_out, "output dataset path")->required();

    // train
    auto* tr = app.add_subcommand("train", "train a steering model");
    std::string t_model = "modified", t_data, t_out, t_json;
    int t_epochs = 50, t_batch = 300;
    float t_lr = 1e-4f;
    bool t_no_augment = false;
    uint32_t t_seed = 0;
    tr->add_option("--model", t_model, "original|modified");
    tr->add_option("--data", t_data, "training dataset")->required();
    tr->add_option("--epochs", t_epochs, "epochs");
    tr->add_option("--batch", t_batch, "batch size");
    tr->add_option("--lr", t_lr, "Adam learning rate");
    tr->add_flag("--no-augment", t_no_augment, "disable augmentation");
    tr->add_option("--seed", t_seed, "rng seed");
    tr->add_option("--out", t_out, "checkpoint output path")->required();
    tr->add_option("--json", t_json, "history JSON output path");

    // eval-offline
    auto* ev = app.add_subcommand("eval-offline", "MSE/MAE of a checkpoint on a dataset");
    std::string e_model, e_data, e_json;
    ev->add_option("--model-file", e_model, "checkpoint path")->required();
    ev->add_option("--data", e_data, "dataset path")->required();
    ev->add_option("--out", e_json, "JSON report path");

    // drive
    auto* dr = app.add_subcommand("drive", "closed-loop session, reports autonomy");
    std::string d_track = "standard", d_conditions = "day,sunny", d_driver = "oracle";
    std::string d_model_file, d_json;
    std::vector<std::string> d_leads;
    float d_duration = 300.0f, d_speed_limit = 12.0f;
    bool d_no_brake = false;
    uint32_t d_seed = 0;
    dr->add_option("--track", d_track, "track id");
    dr->add_option("--conditions", d_conditions, "e.g. day,sunny night,rain");
    dr->add_option("--driver", d_driver, "oracle|model");
    dr->add_option("--model-file", d_model_file, "checkpoint (driver=model)");
    dr->add_option("--duration", d_duration, "seconds");
    dr->add_option("--speed-limit", d_speed_limit, "m/s");
    float d_initial_speed = 5.0f;
    dr->add_option("--initial-speed", d_initial_speed, "m/s at session start");
    dr->add_option("--lead", d_leads, "lead spawn at_s:gap:speed (repeatable)");
    dr->add_flag("--no-brake", d_no_brake, "disable the braking pipeline");
    dr->add_option("--seed", d_seed, "rng seed");
    dr->add_option("--out", d_json, "JSON report path");

    // bench
    auto* be = app.add_subcommand("bench", "per-frame inference latency of both models");
    int be_frames = 200, be_warmup = 20;
    uint32_t be_seed = 1;
    std::string be_json, be_isa;
    be->add_option("--frames", be_frames, "timed frames");
    be->add_option("--warmup", be_warmup, "warmup frames");
    be->add_option("--seed", be_seed, "weight init seed");
    be->add_option("--isa", be_isa, "force kernel path: scalar|avx2");
    be->add_option("--out", be_json, "JSON report path");

    // feature-maps
    auto* fm = app.add_subcommand("feature-maps", "dump per-channel activation images as PGM");
    std::string f_model_file, f_model = "original", f_out, f_track = "standard",
                f_conditions = "day,sunny";
    int f_layer = 1;
    float f_s = 50.0f;
    uint32_t f_seed = 1;
    fm->add_option("--model-file", f_model_file, "checkpoint (otherwise fresh init)");
    fm->add_option("--model", f_model, "original|modified (when no checkpoint)");
    fm->add_option("--layer", f_layer, "layer index");
    fm->add_option("--track", f_track, "track used to render the probe frame");
    fm->add_option("--conditions", f_conditions, "scene conditions");
    fm->add_option("--s", f_s, "arc position of the probe frame");
    fm->add_option("--seed", f_seed, "weight init seed");
    fm->add_option("--out", f_out, "output prefix, writes <prefix>_NN.pgm")->required();

    // summary
    auto* su = app.add_subcommand("summary", "layer table and parameter totals");
    std::string s_model = "modified", s_json;
    su->add_option("--model", s_model, "original|modified")->required();
    su->add_option("--out", s_json, "JSON output path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*gen) {
            dd::GenDataConfig cfg;
            cfg.track_id = g_track;
            if (!g_conditions.empty()) cfg.conditions = g_conditions;
            cfg.samples = g_samples;
            cfg.speed_limit = g_speed_limit;
            cfg.seed = g_seed;
            dd::Dataset ds = dd::generate_dataset(cfg);
            dd::write_dataset_file(ds, g_out);
            std::printf("samples: %zu\n", ds.samples.size());
            std::printf("out: %s\n", g_out.c_str());
        } else if (*bal) {
            dd::Dataset ds = dd::read_dataset_file(b_in);
            dd::Dataset out = dd::balance(ds, b_bins, b_cap, b_seed);
            if (b_mirror) out = dd::mirror_expand(out);
            dd::write_dataset_file(out, b_out);
            std::printf("in_samples: %zu\n", ds.samples.size());
            std::printf("out_samples: %zu\n", out.samples.size());
        } else if (*tr) {
            dd::Dataset ds = dd::read_dataset_file(t_data);
            dd::Model model = dd::init_model(spec_by_name(t_model), t_seed + 1);
            dd::TrainConfig cfg;
            cfg.epochs = t_epochs;
            cfg.batch_size = t_batch;
            cfg.adam.lr = t_lr;
            cfg.augment = !t_no_augment;
            cfg.seed = t_seed;
            cfg.checkpoint_path = t_out;
            dd::TrainHistory hist = dd::train(model, ds, cfg);
            for (size_t i = 0; i < hist.epoch_loss.size(); ++i)
                std::printf("epoch_%zu_loss: %.6f\n", i + 1, hist.epoch_loss[i]);
            if (!hist.epoch_loss.empty())
                std::printf("final_loss: %.6f\n", hist.epoch_loss.back());
            write_json(json{{"epoch_loss", hist.epoch_loss}}, t_json);
        } else if (*ev) {
            dd::Model model = dd::load_model_file(e_model);
            dd::Dataset ds = dd::read_dataset_file(e_data);
            dd::OfflineEval r = dd::evaluate_offline(model, ds);
            std::printf("mse: %.6f\n", r.mse);
            std::printf("mae: %.6f\n", r.mae);
            write_json(json{{"mse", r.mse}, {"mae", r.mae}}, e_json);
        } else if (*dr) {
            dd::ScenarioSpec sc;
            sc.track_id = d_track;
            sc.conditions = dd::parse_conditions(d_conditions, 0);
            sc.duration_s = d_duration;
            sc.speed_limit = d_speed_limit;
            sc.initial_speed = d_initial_speed;
            sc.seed = d_seed;
            for (const std::string& l : d_leads) sc.leads.push_back(parse_lead(l));
            dd::EvalReport rep;
            if (d_driver == "oracle") {
                rep = dd::run_closed_loop(dd::oracle_driver(dd::make_track(d_track)), sc,
                                          !d_no_brake);
            } else if (d_driver == "model") {
                if (d_model_file.empty())
                    throw CLI::ValidationError("--model-file", "required when --driver model");
                dd::Model model = dd::load_model_file(d_model_file);
                rep = dd::run_closed_loop(model, sc, !d_no_brake);
            } else {
                throw CLI::ValidationError("--driver", "expected 'oracle' or 'model'");
            }
            print_report(rep);
            write_json(report_json(rep), d_json);
        } else if (*be) {
            if (!be_isa.empty())
                dd::kern::force_isa(be_isa == "avx2" ? dd::kern::Isa::Avx2
                                                     : dd::kern::Isa::Scalar);
            dd::Model orig = dd::init_model(dd::build_pilotnet_original(), be_seed);
            dd::Model mod = dd::init_model(dd::build_pilotnet_modified(), be_seed);
            dd::BenchReport rep = dd::bench({&orig, &mod}, be_frames, be_warmup);
            json jm = json::array();
            for (const auto& m : rep.models) {
                std::printf("%s_median_ms: %.3f\n", m.name.c_str(), m.median_ms);
                std::printf("%s_p95_ms: %.3f\n", m.name.c_str(), m.p95_ms);
                std::printf("%s_params: %lld\n", m.name.c_str(), m.params);
                std::printf("%s_macs: %lld\n", m.name.c_str(), m.macs);
                jm.push_back(json{{"name", m.name},
                                  {"median_ms", m.median_ms},
                                  {"p95_ms", m.p95_ms},
                                  {"params", m.params},
                                  {"macs", m.macs}});
            }
            std::printf("latency_ratio: %.4f\n", rep.latency_ratio);
            std::printf("kernel_path: %s\n", dd::kern::isa_name(dd::kern::active_isa()));
            write_json(json{{"models", jm}, {"latency_ratio", rep.latency_ratio}}, be_json);
        } else if (*fm) {
            dd::Model model = f_model_file.empty()
                                  ? dd::init_model(spec_by_name(f_model), f_seed)
                                  : dd::load_model_file(f_model_file);
            dd::Track track = dd::make_track(f_track);
            dd::VehicleState st;
            st.s = f_s;
            dd::SceneConditions cond = dd::parse_conditions(f_conditions, f_seed);
            dd::Frame fr = dd::render(track, st, cond, nullptr);
            std::vector<dd::Tensor> maps =
                dd::feature_maps(model, dd::frame_to_tensor(fr), f_layer);
            for (size_t i = 0; i < maps.size(); ++i) {
                char path[512];
                std::snprintf(path, sizeof(path), "%s_%02zu.pgm", f_out.c_str(), i);
                std::ofstream f(path, std::ios::binary);
                if (!f) throw std::runtime_error(std::string("cannot open for write: ") + path);
                dd::write_pgm(maps[i], f);
            }
            std::printf("maps: %zu\n", maps.size());
            if (!maps.empty())
                std::printf("map_shape: %dx%d\n", maps[0].shape[0], maps[0].shape[1]);
        } else if (*su) {
            dd::ModelSummary s = dd::summarize(spec_by_name(s_model));
            json rows = json::array();
            for (size_t i = 0; i < s.rows.size(); ++i) {
                const dd::SummaryRow& r = s.rows[i];
                std::printf("layer_%zu: %s kernel=%s stride=%s out=%d params=%lld macs=%lld\n",
                            i, r.kind.c_str(), r.kernel.c_str(), r.stride.c_str(),
                            r.out_channels, r.params, r.macs);
                rows.push_back(json{{"kind", r.kind},
                                    {"kernel", r.kernel},
                                    {"stride", r.stride},
                                    {"out_channels", r.out_channels},
                                    {"params", r.params},
                                    {"macs", r.macs}});
            }
            std::printf("flatten_len: %d\n", s.flatten_len);
            std::printf("total_params: %lld\n", s.total_params);
            std::printf("total_macs: %lld\n", s.total_macs);
            write_json(json{{"name", s.name},
                            {"rows", rows},
                            {"flatten_len", s.flatten_len},
                            {"total_params", s.total_params},
                            {"total_macs", s.total_macs}},
                       s_json);
        }
    } catch (const CLI::ValidationError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
