// crowdcast: simulate -> rasterize -> train -> forecast -> evaluate.
//
// Exit codes: 0 success, 1 internal or check failure, 2 usage or input error.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include "crowdcast/crowdcast.hpp"

namespace {

using namespace crowdcast;
using json = nlohmann::json;

constexpr int kOk = 0;
constexpr int kFailure = 1;
constexpr int kUsage = 2;

sim::Scenario scenario_from_json(const json& j) {
  sim::Scenario s;
  s.width = j.value("width", s.width);
  s.height = j.value("height", s.height);
  s.n_groups = j.value("n_groups", s.n_groups);
  s.min_agents = j.value("min_agents", s.min_agents);
  s.max_agents = j.value("max_agents", s.max_agents);
  s.min_speed = j.value("min_speed", s.min_speed);
  s.max_speed = j.value("max_speed", s.max_speed);
  s.jitter = j.value("jitter", s.jitter);
  s.group_radius = j.value("group_radius", s.group_radius);
  s.n_frames = j.value("n_frames", s.n_frames);
  s.seed = j.value("seed", s.seed);
  const std::string spawn = j.value("spawn", std::string("interior"));
  if (spawn == "interior") {
    s.spawn = sim::SpawnPolicy::kInterior;
  } else if (spawn == "edge-in") {
    s.spawn = sim::SpawnPolicy::kEdgeIn;
  } else {
    throw InputError("scenario: unknown spawn policy '" + spawn + "'");
  }
  if (j.contains("groups")) {
    for (const auto& g : j.at("groups")) {
      sim::GroupSpec spec;
      spec.velocity = {g.at("velocity").at(0).get<double>(), g.at("velocity").at(1).get<double>()};
      for (const auto& p : g.at("positions"))
        spec.positions.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
      s.groups.push_back(std::move(spec));
    }
  }
  return s;
}

sim::Scenario load_scenario(const std::string& ref) {
  if (auto p = sim::preset(ref)) return *p;
  if (!std::filesystem::exists(ref)) {
    std::string names;
    for (const auto& n : sim::preset_names()) names += (names.empty() ? "" : ", ") + n;
    throw InputError("scenario '" + ref + "' is neither a preset (" + names + ") nor a file");
  }
  try {
    return scenario_from_json(json::parse(io::read_file(ref)));
  } catch (const json::exception& e) {
    throw InputError("scenario " + ref + ": " + e.what());
  }
}

model::Architecture parse_arch(const std::string& s) {
  return s == "dfn" ? model::Architecture::kDfn : model::Architecture::kPdfn;
}

void check_window(const DensitySequence& seq, std::size_t start) {
  if (start + model::kWindowFrames > seq.length())
    throw InputError("window [" + std::to_string(start) + ", " +
                     std::to_string(start + model::kWindowFrames - 1) + "] exceeds " +
                     std::to_string(seq.length()) + " frames");
}

struct TrainArgs {
  std::string data, out, loss_csv;
  std::size_t stride = 1;
  train::TrainConfig config;
};

void add_train_flags(CLI::App* cmd, TrainArgs& a) {
  cmd->add_option("--data", a.data, "Training density sequence (.cdmf)")->required();
  cmd->add_option("--iters", a.config.iterations, "Optimizer iterations");
  cmd->add_option("--lr", a.config.learning_rate, "Adam learning rate");
  cmd->add_option("--batch", a.config.batch_size, "Windows per mini-batch");
  cmd->add_option("--seed", a.config.seed, "Seed for initialization and batch sampling");
  cmd->add_option("--stride", a.stride, "Sliding-window stride");
  cmd->add_option("--loss-csv", a.loss_csv, "Write iteration,loss rows here");
  cmd->add_option("--out", a.out, "Output checkpoint")->required();
}

train::ProgressFn progress_printer() {
  return [](std::size_t it, double loss) {
    std::printf("iter=%zu loss=%.9g\n", it + 1, loss);
    std::fflush(stdout);
  };
}

void write_losses(const std::string& path, const train::TrainResult& r) {
  if (path.empty()) return;
  std::string csv = "iteration,loss\n";
  char line[64];
  for (std::size_t i = 0; i < r.losses.size(); ++i) {
    std::snprintf(line, sizeof line, "%zu,%.9g\n", i + 1, r.losses[i]);
    csv += line;
  }
  io::write_file(path, csv);
}

int run(int argc, char** argv) {
  CLI::App app{"Crowd density forecasting on synthetic scenes"};
  app.require_subcommand(1);

  // simulate
  std::string scenario_ref = "two-groups", ann_out;
  std::optional<std::size_t> sim_frames;
  std::optional<std::uint64_t> sim_seed;
  auto* simulate = app.add_subcommand("simulate", "Generate an annotation CSV");
  simulate->add_option("--scenario", scenario_ref, "Preset name or JSON scenario file");
  simulate->add_option("--frames", sim_frames, "Number of frames");
  simulate->add_option("--seed", sim_seed, "Simulation seed");
  simulate->add_option("--out", ann_out, "Output CSV")->required();

  // rasterize
  std::string ras_ann, ras_out;
  std::size_t ras_w = model::kMapSize, ras_h = model::kMapSize;
  std::optional<std::size_t> ras_frames;
  double ras_sigma = 0.0, ras_fps = 0.0;
  auto* rasterize_cmd = app.add_subcommand("rasterize", "Annotations to density maps");
  rasterize_cmd->add_option("--ann", ras_ann, "Annotation CSV")->required();
  rasterize_cmd->add_option("--width", ras_w, "Map width");
  rasterize_cmd->add_option("--height", ras_h, "Map height");
  rasterize_cmd->add_option("--frames", ras_frames, "Frame count (default: last frame + 1)");
  rasterize_cmd->add_option("--sigma", ras_sigma, "Per-frame spatial Gaussian smoothing (0: none)");
  rasterize_cmd->add_option("--fps", ras_fps, "Frame rate stored in the header");
  rasterize_cmd->add_option("--out", ras_out, "Output .cdmf")->required();

  // train-ae
  TrainArgs ae_args;
  std::string arch = "pdfn", target = "sqrt";
  std::optional<std::size_t> latent;
  auto* train_ae = app.add_subcommand("train-ae", "Train the patch autoencoder");
  add_train_flags(train_ae, ae_args);
  train_ae->add_option("--arch", arch, "pdfn or dfn")
      ->check(CLI::IsMember({"pdfn", "dfn"}));
  train_ae->add_option("--latent", latent, "Latent channels K (default 16, dfn 128)");
  train_ae->add_option("--target", target, "Decoder target: sqrt or identity")
      ->check(CLI::IsMember({"sqrt", "identity"}));

  // train-forecaster
  TrainArgs fc_args;
  std::string fc_ae;
  auto* train_fc = app.add_subcommand("train-forecaster", "Train the latent forecaster");
  add_train_flags(train_fc, fc_args);
  train_fc->add_option("--ae", fc_ae, "Autoencoder checkpoint")->required();

  // forecast
  std::string f_data, f_ae, f_fc, f_out;
  std::size_t f_start = 0;
  auto* forecast_cmd = app.add_subcommand("forecast", "Predict 12 frames from 8");
  forecast_cmd->add_option("--data", f_data, "Density sequence (.cdmf)")->required();
  forecast_cmd->add_option("--ae", f_ae, "Autoencoder checkpoint")->required();
  forecast_cmd->add_option("--fc", f_fc, "Forecaster checkpoint")->required();
  forecast_cmd->add_option("--window-start", f_start, "First frame of the 20-frame window")
      ->required();
  forecast_cmd->add_option("--out", f_out, "Output .cdmf")->required();

  // baseline
  std::string b_method, b_ann, b_data, b_out;
  std::size_t b_start = 0, b_w = model::kMapSize, b_h = model::kMapSize;
  double b_sigma = 3.0;
  auto* baseline = app.add_subcommand("baseline", "ConstVel or persistence forecast");
  baseline->add_option("--method", b_method, "constvel or persistence")
      ->required()
      ->check(CLI::IsMember({"constvel", "persistence"}));
  baseline->add_option("--ann", b_ann, "Annotation CSV")->required();
  baseline->add_option("--data", b_data, "Persistence input (.cdmf) instead of rasterizing --ann");
  baseline->add_option("--window-start", b_start, "First frame of the 20-frame window")
      ->required();
  baseline->add_option("--sigma", b_sigma, "Spatial smoothing of rendered maps");
  baseline->add_option("--width", b_w, "Map width");
  baseline->add_option("--height", b_h, "Map height");
  baseline->add_option("--out", b_out, "Output .cdmf")->required();

  // evaluate
  std::string e_pred, e_gt, e_out;
  double e_sigma = 3.0;
  bool e_prefactor = false;
  auto* evaluate = app.add_subcommand("evaluate", "Score a forecast against ground truth");
  evaluate->add_option("--pred", e_pred, "Predicted .cdmf")->required();
  evaluate->add_option("--gt", e_gt, "Ground-truth .cdmf")->required();
  evaluate->add_option("--sigma", e_sigma, "Spatiotemporal smoothing before scoring");
  evaluate->add_flag("--prefactor", e_prefactor, "Scale divergences by 1/(W*H)");
  evaluate->add_option("--out", e_out, "Report CSV")->required();

  // slice
  std::string s_data, s_out;
  std::size_t s_start = 0, s_count = model::kOutputFrames;
  auto* slice = app.add_subcommand("slice", "Copy a frame range of a .cdmf");
  slice->add_option("--data", s_data, "Input .cdmf")->required();
  slice->add_option("--start", s_start, "First frame")->required();
  slice->add_option("--count", s_count, "Number of frames");
  slice->add_option("--out", s_out, "Output .cdmf")->required();

  // selftest
  std::size_t st_instances = 20;
  std::string st_corrupt;
  auto* selftest_cmd = app.add_subcommand("selftest", "Gradient and shape checks");
  selftest_cmd->add_option("--instances", st_instances, "Random instances per gradient check");
  selftest_cmd->add_option("--corrupt", st_corrupt, "Perturb one op's analytic gradient")
      ->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  if (*simulate) {
    sim::Scenario s = load_scenario(scenario_ref);
    if (sim_frames) s.n_frames = *sim_frames;
    if (sim_seed) s.seed = *sim_seed;
    io::write_annotations(sim::simulate(s), ann_out);
    return kOk;
  }

  if (*rasterize_cmd) {
    const AnnotationStream ann = io::read_annotations(ras_ann);
    const std::size_t n = ras_frames ? *ras_frames : std::max<std::size_t>(frame_count(ann), 1);
    if (n == 0) throw InputError("rasterize: --frames must be at least 1");
    DensitySequence seq = crowdcast::rasterize(ann, ras_w, ras_h, n);
    if (ras_sigma > 0.0) seq = smooth_spatial(seq, ras_sigma);
    seq.frame_rate = ras_fps;
    io::write_sequence(seq, ras_out);
    return kOk;
  }

  if (*train_ae) {
    const auto data = train::make_windows(io::read_sequence(ae_args.data), ae_args.stride);
    model::ModelConfig cfg{parse_arch(arch),
                           latent.value_or(parse_arch(arch) == model::Architecture::kDfn ? 128 : 16)};
    if (cfg.latent_dim == 0) throw InputError("train-ae: --latent must be positive");
    ae_args.config.target =
        target == "sqrt" ? model::OutputTransform::kSqrt : model::OutputTransform::kIdentity;
    train::validate(ae_args.config);
    auto m = model::ForecastModel::create(cfg, ae_args.config.seed);
    const auto result = train::train_autoencoder(m, data, ae_args.config, progress_printer());
    io::write_checkpoint(m.autoencoder_tensors(), ae_args.out);
    write_losses(ae_args.loss_csv, result);
    return kOk;
  }

  if (*train_fc) {
    auto m = model::ForecastModel::from_autoencoder(io::read_checkpoint(fc_ae));
    train::validate(fc_args.config);
    const auto data = train::make_windows(io::read_sequence(fc_args.data), fc_args.stride);
    const auto result = train::train_forecaster(m, data, fc_args.config, progress_printer());
    io::write_checkpoint(m.forecaster_tensors(), fc_args.out);
    write_losses(fc_args.loss_csv, result);
    return kOk;
  }

  if (*forecast_cmd) {
    auto m = model::ForecastModel::from_autoencoder(io::read_checkpoint(f_ae));
    m.load_forecaster(io::read_checkpoint(f_fc));
    const DensitySequence data = io::read_sequence(f_data);
    check_window(data, f_start);
    io::write_sequence(model::forecast(data.slice(f_start, model::kInputFrames), m), f_out);
    return kOk;
  }

  if (*baseline) {
    const AnnotationStream ann = io::read_annotations(b_ann);
    DensitySequence out;
    if (b_method == "persistence") {
      DensitySequence data;
      if (b_data.empty()) {
        data = crowdcast::rasterize(ann, b_w, b_h, std::max<std::size_t>(frame_count(ann), 1));
        if (b_sigma > 0.0) data = smooth_spatial(data, b_sigma);
      } else {
        data = io::read_sequence(b_data);
      }
      check_window(data, b_start);
      out = baselines::persistence_forecast(data.slice(b_start, model::kInputFrames),
                                            model::kOutputFrames);
    } else {
      DensitySequence span;
      span.frames.resize(frame_count(ann));
      check_window(span, b_start);
      out = baselines::constvel_forecast(sim::track_oracle(ann), b_start, model::kInputFrames,
                                         model::kOutputFrames, b_w, b_h, b_sigma);
    }
    io::write_sequence(out, b_out);
    return kOk;
  }

  if (*evaluate) {
    metrics::EvalOptions opts;
    opts.sigma = e_sigma;
    opts.prefactor = e_prefactor;
    const auto report =
        metrics::evaluate_sequence(io::read_sequence(e_pred), io::read_sequence(e_gt), opts);
    io::write_file(e_out, metrics::report_csv(report));
    std::printf("average d_kl=%.6g d_ikl=%.6g d_js=%.6g\n", report.average.d_kl,
                report.average.d_ikl, report.average.d_js);
    return kOk;
  }

  if (*slice) {
    io::write_sequence(io::read_sequence(s_data).slice(s_start, s_count), s_out);
    return kOk;
  }

  if (*selftest_cmd) {
    selftest::Options opts;
    opts.instances = st_instances;
    if (!st_corrupt.empty()) {
      for (nn::PrimitiveOp op : nn::kAllPrimitiveOps)
        if (st_corrupt == nn::primitive_name(op)) opts.corrupt = op;
      if (!opts.corrupt) throw InputError("selftest: unknown op '" + st_corrupt + "'");
    }
    bool ok = true;
    for (const auto& r : selftest::run(opts)) {
      std::printf("%s %s: %s\n", r.passed ? "PASS" : "FAIL", r.name.c_str(), r.detail.c_str());
      ok = ok && r.passed;
    }
    return ok ? kOk : kFailure;
  }
  return kUsage;
}

}  // namespace

int main(int argc, char** argv) {
  crowdcast::runtime::keep_heap_mapped();
  try {
    return run(argc, argv);
  } catch (const crowdcast::InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const crowdcast::FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const crowdcast::ShapeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kFailure;
  }
}
