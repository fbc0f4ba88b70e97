#include "handcast_cli/commands.hpp"

#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "handcast/data.hpp"
#include "handcast/denoiser.hpp"
#include "handcast/errors.hpp"
#include "handcast/eval.hpp"
#include "handcast/synthgen.hpp"
#include "handcast/training.hpp"
#include "handcast_cli/plot.hpp"
#include "handcast_cli/run_config.hpp"

namespace handcast::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

std::uint64_t validation_seed(std::uint64_t seed) {
  // splitmix64 finalizer
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace {

// Settings layers shared by every subcommand.
struct Layers {
  std::string config_file;
  std::vector<std::string> assignments;
  // Explicit flags, applied last.
  std::vector<std::pair<std::string, std::optional<std::string>>> flags;

  void add_common(CLI::App* app) {
    app->add_option("--config", config_file, "key = value settings file");
    app->add_option("--set", assignments, "override one setting, key=value (repeatable)");
  }
  void flag(CLI::App* app, const std::string& name, const std::string& key, const std::string& help) {
    flags.emplace_back(key, std::nullopt);
    // Stable address: flags is reserved before registration.
    app->add_option(name, flags.back().second, help + " (" + key + ")");
  }
  RunConfig resolve() const {
    RunConfig rc;
    if (!config_file.empty()) {
      if (!fs::exists(config_file)) throw UsageError("config file not found: " + config_file);
      rc.load_file(config_file);
    }
    rc.load_env();
    for (const auto& a : assignments) rc.set_assignment(a);
    for (const auto& [key, value] : flags) {
      if (value) rc.set(key, *value);
    }
    return rc;
  }
};

void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw UsageError(what + " path is required");
  if (!fs::is_regular_file(path)) throw UsageError(what + " not found: " + path);
}

DatasetShape shape_from(const RunConfig& rc) {
  DatasetShape s;
  s.T = rc.get_int("gen.T");
  s.F = rc.get_int("gen.F");
  return s;
}

int feature_dim(const std::vector<Sequence>& data) {
  if (data.empty() || data.front().obs_features.empty()) return 0;
  return static_cast<int>(data.front().obs_features.front().size());
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw IoError("cannot write " + path.string());
}

void check_model_data(const DenoiserConfig& cfg, const std::vector<Sequence>& data) {
  if (data.empty()) return;
  const Sequence& s = data.front();
  auto check = [](const char* field, int ckpt, int got) {
    if (ckpt != got) {
      throw ConfigError(std::string(field) + " mismatch: checkpoint " + std::to_string(ckpt) +
                        ", data " + std::to_string(got));
    }
  };
  check("T", cfg.T, s.T());
  check("F", cfg.F, s.F());
  check("J", cfg.J, s.J());
  check("d_img", cfg.d_img, feature_dim(data));
}

std::vector<Sequence> load_data(const std::string& path, const RunConfig& rc, int J = kNumJoints) {
  require_file(path, "dataset");
  DatasetShape shape = shape_from(rc);
  shape.J = J;
  return load_dataset(path, shape);
}

// ---- gen ----

int cmd_gen(const Layers& layers, const std::string& out_dir, std::ostream& out) {
  RunConfig rc = layers.resolve();
  if (out_dir.empty()) throw UsageError("--out is required");
  GenConfig train_cfg;
  try {
    train_cfg = rc.gen_config();
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
  GenConfig val_cfg = train_cfg;
  train_cfg.id_prefix = "train";
  val_cfg.id_prefix = "val";
  val_cfg.seed = validation_seed(train_cfg.seed);
  val_cfg.n_sequences = rc.get_int("gen.n_val");
  if (val_cfg.n_sequences < 1) throw UsageError("gen.n_val must be at least 1");
  rc.write(fs::path(out_dir) / "resolved_config.txt");
  for (const auto& [name, cfg] : {std::pair{"train", &train_cfg}, {"val", &val_cfg}}) {
    const fs::path path = fs::path(out_dir) / (std::string(name) + ".jsonl");
    const GenSummary s = generate_dataset(*cfg, path);
    out << name << ": " << s.n_sequences << " sequences, " << s.n_in_view_pairs
        << " in-view and " << s.n_out_of_view_pairs << " out-of-view hand pairs -> "
        << path.string() << "\n";
  }
  return kExitOk;
}

// ---- train ----

int cmd_train(const Layers& layers, const std::string& data_path, const std::string& out_dir,
              const std::string& resume_path, std::ostream& out) {
  const RunConfig rc = layers.resolve();
  if (out_dir.empty()) throw UsageError("--out is required");
  require_file(data_path, "dataset");
  if (!resume_path.empty()) require_file(resume_path, "checkpoint");
  const TrainConfig tcfg = rc.train_config();
  std::optional<Checkpoint> resume;
  if (!resume_path.empty()) resume = load_checkpoint(resume_path);
  const int J = resume ? resume->config.J : kNumJoints;
  const auto data = load_data(data_path, rc, J);
  if (data.empty()) throw UsageError("dataset is empty: " + data_path);
  const DenoiserConfig mcfg =
      resume ? resume->config
             : rc.model_config(data.front().T(), data.front().F(), data.front().J(), feature_dim(data));
  check_model_data(mcfg, data);
  rc.write(fs::path(out_dir) / "resolved_config.txt");

  const int log_every = rc.get_int("train.log_every");
  TrainOptions opt;
  opt.out_dir = out_dir;
  opt.checkpoint_every = rc.get_int("train.checkpoint_every");
  opt.resume = resume ? &*resume : nullptr;
  opt.on_step = [&](int it, const StepResult& r) {
    if (log_every > 0 && (it % log_every == 0 || it == tcfg.iterations)) {
      char line[160];
      std::snprintf(line, sizeof line, "iter %6d  L_joint %.5f  L_vis %.5f  L_reproj %.5f  L_total %.5f\n",
                    it, r.parts.joint, r.parts.vis, r.parts.reproj, r.parts.total);
      out << line << std::flush;
    }
  };
  train(data, mcfg, tcfg, opt);
  out << "checkpoint -> " << (fs::path(out_dir) / "checkpoint.bin").string() << "\n";
  return kExitOk;
}

// ---- eval ----

struct EvalArgs {
  std::string data, ckpt, out, train_data;
  std::vector<std::string> baselines;
  bool gt_as_pred = false;
};

int cmd_eval(const Layers& layers, const EvalArgs& a, std::ostream& out) {
  const RunConfig rc = layers.resolve();
  if (a.out.empty()) throw UsageError("--out is required");
  if (a.ckpt.empty() && !a.gt_as_pred && a.baselines.empty()) {
    throw UsageError("nothing to evaluate: give --ckpt, --baselines or --gt-as-pred");
  }
  for (const auto& b : a.baselines) {
    if (b != "static" && b != "cvm") throw UsageError("unknown baseline '" + b + "'");
    if (b == "static" && a.train_data.empty()) {
      throw UsageError("the static baseline needs --train-data for the mean pose");
    }
  }
  require_file(a.data, "dataset");
  std::optional<DenoiserModel> model;
  int J = kNumJoints;
  if (!a.ckpt.empty()) {
    require_file(a.ckpt, "checkpoint");
    model = model_from_checkpoint(load_checkpoint(a.ckpt));
    J = -1;  // compared against the checkpoint below
  }
  const auto data = load_data(a.data, rc, J);
  if (model) check_model_data(model->config(), data);
  rc.write(fs::path(a.out) / "resolved_config.txt");

  EvalOptions opt;
  opt.fps = rc.get_double("gen.fps");
  opt.seed = rc.get_u64("eval.seed");
  opt.batch_size = rc.get_int("eval.batch_size");
  if (model) opt.layout = model->config().layout();

  MetricsReport report;
  report.n_sequences = data.size();
  report.T = data.empty() ? 0 : data.front().T();
  report.F = data.empty() ? 0 : data.front().F();
  report.fps = opt.fps;
  report.seed = opt.seed;

  auto run_method = [&](const std::string& name, const std::vector<Forecast>& fc, bool oracle) {
    MethodReport m = evaluate(name, data, fc, opt);
    m.oracle_privileged = oracle;
    report.methods.push_back(std::move(m));
  };
  if (model) run_method("model", model_forecasts(*model, data, opt.seed, opt.batch_size), false);
  if (a.gt_as_pred) {
    std::vector<Forecast> fc;
    for (const auto& s : data) fc.push_back(ground_truth_forecast(s));
    run_method("ground_truth", fc, true);
  }
  for (const auto& b : a.baselines) {
    std::vector<Forecast> fc;
    if (b == "static") {
      const auto train_set = load_data(a.train_data, rc, J);
      const DatasetStats stats = compute_stats(train_set);
      for (const auto& s : data) fc.push_back(baseline_static(s, stats));
      run_method("static", fc, false);
    } else {
      for (const auto& s : data) fc.push_back(baseline_cvm(s));
      run_method("cvm", fc, true);
    }
  }
  write_text(fs::path(a.out) / "report.json", report.to_json());
  const std::string table = report.to_table();
  write_text(fs::path(a.out) / "report.txt", table);
  out << table;
  return kExitOk;
}

// ---- forecast ----

json vec_json(const Eigen::Ref<const Eigen::VectorXd>& v) {
  json j = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) j.push_back(v[i]);
  return j;
}

json points_json(const Points& p) {
  json j = json::array();
  for (Eigen::Index r = 0; r < p.rows(); ++r) j.push_back(json::array({p(r, 0), p(r, 1), p(r, 2)}));
  return j;
}

struct ForecastArgs {
  std::string ckpt, data, id, out;
  int index = -1;
};

int cmd_forecast(const Layers& layers, const ForecastArgs& a, std::ostream& out) {
  const RunConfig rc = layers.resolve();
  if (a.out.empty()) throw UsageError("--out is required");
  require_file(a.ckpt, "checkpoint");
  require_file(a.data, "dataset");
  if (a.id.empty() == (a.index < 0)) throw UsageError("give exactly one of --id or --index");
  const Checkpoint ckpt = load_checkpoint(a.ckpt);
  const DenoiserModel model = model_from_checkpoint(ckpt);
  const auto data = load_data(a.data, rc, -1);
  check_model_data(model.config(), data);
  const Sequence* seq = nullptr;
  if (!a.id.empty()) {
    for (const auto& s : data) {
      if (s.id == a.id) seq = &s;
    }
    if (!seq) throw Error("unknown sequence id '" + a.id + "'");
  } else {
    if (static_cast<std::size_t>(a.index) >= data.size()) {
      throw Error("sequence index " + std::to_string(a.index) + " out of range");
    }
    seq = &data[static_cast<std::size_t>(a.index)];
  }
  fs::path out_path(a.out);
  rc.write(fs::path(out_path).replace_extension(".config.txt"));

  const std::uint64_t seed = rc.get_u64("eval.seed");
  const Forecast fc = model_forecasts(model, {*seq}, seed, 1).front();
  const JointLayout layout = model.config().layout();
  const int T = seq->T();
  const int L = T + seq->F();

  json j;
  j["v"] = kDatasetVersion;
  j["id"] = seq->id;
  j["activity"] = seq->activity;
  j["seed"] = seed;
  j["T"] = T;
  j["F"] = seq->F();
  j["J"] = seq->J();
  j["n_hand"] = layout.n_hand;
  const Intrinsics& K = seq->intrinsics;
  j["intrinsics"] = json::array({K.fx, K.fy, K.cx, K.cy});
  j["image_size"] = json::array({seq->image_size.width, seq->image_size.height});
  json cams = json::array();
  for (const auto& c : seq->obs_poses) {
    cams.push_back({{"pose_r6", vec_json(Eigen::Map<const Eigen::VectorXd>(c.rotation.r.data(), 6))},
                    {"pose_t", vec_json(c.translation)}});
  }
  j["cameras"] = std::move(cams);
  json pred = json::array(), gt = json::array(), in_view_j = json::array();
  for (int t = 0; t < L; ++t) {
    const Points& p = fc.joints[static_cast<std::size_t>(t)];
    pred.push_back(points_json(p));
    gt.push_back(points_json(seq->frame(t).joints));
    const CameraPose& cam = seq->obs_poses[static_cast<std::size_t>(std::min(t, T - 1))];
    json row = json::array();
    for (Side s : kSides) row.push_back(in_view(cam, Vec3(p.row(layout.wrist(s)).transpose())));
    in_view_j.push_back(std::move(row));
  }
  j["pred"] = std::move(pred);
  j["gt"] = std::move(gt);
  json vis = json::array(), observed = json::array();
  for (int t = 0; t < T; ++t) {
    vis.push_back(json::array({fc.vis(t, 0), fc.vis(t, 1)}));
    const auto& h = seq->obs_hands2d[static_cast<std::size_t>(t)];
    observed.push_back(json::array({h.left_visible, h.right_visible}));
  }
  j["vis"] = std::move(vis);
  j["observed_visible"] = std::move(observed);
  // Predicted wrists re-checked against the frame's camera (last observed
  // camera for future frames).
  j["pred_in_view"] = std::move(in_view_j);
  write_text(out_path, j.dump() + "\n");
  out << "forecast for '" << seq->id << "' (" << L << " frames) -> " << out_path.string() << "\n";
  return kExitOk;
}

// ---- plot ----

json read_json(const std::string& path, const std::string& what) {
  require_file(path, what);
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return json::parse(ss.str());
  } catch (const json::exception& e) {
    throw UsageError(what + " is not valid JSON: " + path);
  }
}

int cmd_plot(const Layers& layers, const std::string& forecast, const std::string& per_timestep,
             const std::string& out_dir, std::ostream& out) {
  const RunConfig rc = layers.resolve();
  if (out_dir.empty()) throw UsageError("--out is required");
  if (forecast.empty() && per_timestep.empty()) {
    throw UsageError("give --forecast and/or --per-timestep");
  }
  std::vector<std::pair<fs::path, std::string>> files;
  if (!forecast.empty()) {
    const json f = read_json(forecast, "forecast file");
    if (!f.contains("pred") || f["pred"].empty()) throw UsageError("forecast file has no frames");
    const std::string stem = fs::path(forecast).stem().string();
    files.emplace_back(fs::path(out_dir) / (stem + "_topdown.svg"), plot_top_down(f));
    files.emplace_back(fs::path(out_dir) / (stem + "_reprojection.svg"), plot_reprojection(f));
  }
  if (!per_timestep.empty()) {
    const json r = read_json(per_timestep, "report");
    files.emplace_back(fs::path(out_dir) / "ade_per_timestep.svg", plot_per_timestep(r));
  }
  rc.write(fs::path(out_dir) / "resolved_config.txt");
  for (const auto& [path, svg] : files) {
    write_text(path, svg);
    out << "wrote " << path.string() << "\n";
  }
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Egocentric hand forecasting with a conditional diffusion model"};
  app.require_subcommand(1);
  std::string footer = "Environment overrides (between config file and flags):\n";
  for (const auto& k : config_keys()) {
    footer += "  " + env_name(k.key) + "  " + k.help + " [" + k.default_value + "]\n";
  }
  app.footer(footer);

  Layers gen_l, train_l, eval_l, fc_l, plot_l;
  for (Layers* l : {&gen_l, &train_l, &eval_l, &fc_l, &plot_l}) l->flags.reserve(16);

  std::string gen_out;
  auto* gen = app.add_subcommand("gen", "generate synthetic train/val datasets");
  gen_l.add_common(gen);
  gen->add_option("--out", gen_out, "output directory");
  gen_l.flag(gen, "--seed", "gen.seed", "generator seed");
  gen_l.flag(gen, "--n", "gen.n", "training sequences");
  gen_l.flag(gen, "--n-val", "gen.n_val", "validation sequences");
  gen_l.flag(gen, "--feature-mode", "gen.feature_mode", "image features");

  std::string train_data, train_out, train_resume;
  auto* tr = app.add_subcommand("train", "train the denoiser");
  train_l.add_common(tr);
  tr->add_option("--data", train_data, "training dataset file");
  tr->add_option("--out", train_out, "output directory");
  tr->add_option("--resume", train_resume, "checkpoint to continue from");
  train_l.flag(tr, "--iterations", "train.iterations", "total iterations");
  train_l.flag(tr, "--seed", "train.seed", "training seed");
  train_l.flag(tr, "--lr", "train.lr", "learning rate");
  train_l.flag(tr, "--batch-size", "train.batch_size", "batch size");

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint and/or baselines");
  eval_l.add_common(ev);
  ev->add_option("--data", ea.data, "evaluation dataset file");
  ev->add_option("--ckpt", ea.ckpt, "model checkpoint");
  ev->add_option("--out", ea.out, "output directory");
  ev->add_option("--baselines", ea.baselines, "comma-separated: static, cvm")->delimiter(',');
  ev->add_option("--train-data", ea.train_data, "training set for the static mean pose");
  ev->add_flag("--gt-as-pred", ea.gt_as_pred, "score ground truth as the prediction");
  eval_l.flag(ev, "--seed", "eval.seed", "sampling seed");

  ForecastArgs fa;
  auto* fc = app.add_subcommand("forecast", "forecast one sequence");
  fc_l.add_common(fc);
  fc->add_option("--ckpt", fa.ckpt, "model checkpoint");
  fc->add_option("--data", fa.data, "dataset file");
  fc->add_option("--id", fa.id, "sequence id");
  fc->add_option("--index", fa.index, "sequence index");
  fc->add_option("--out", fa.out, "output forecast file");
  fc_l.flag(fc, "--seed", "eval.seed", "sampling seed");

  std::string plot_fc, plot_report, plot_out;
  auto* pl = app.add_subcommand("plot", "render SVG plots");
  plot_l.add_common(pl);
  pl->add_option("--forecast", plot_fc, "forecast file");
  pl->add_option("--per-timestep", plot_report, "evaluation report for the ADE-vs-timestep curve");
  pl->add_option("--out", plot_out, "output directory");

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  try {
    app.parse(argv_rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_gen(gen_l, gen_out, out);
    if (tr->parsed()) return cmd_train(train_l, train_data, train_out, train_resume, out);
    if (ev->parsed()) return cmd_eval(eval_l, ea, out);
    if (fc->parsed()) return cmd_forecast(fc_l, fa, out);
    if (pl->parsed()) return cmd_plot(plot_l, plot_fc, plot_report, plot_out, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace handcast::cli
