#include "cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "voxelsr/baselines.hpp"
#include "voxelsr/checkpoint.hpp"
#include "voxelsr/error.hpp"
#include "voxelsr/inference.hpp"
#include "voxelsr/metrics.hpp"
#include "voxelsr/phantom.hpp"
#include "voxelsr/training.hpp"
#include "voxelsr/volume.hpp"

namespace voxelsr::cli {
namespace {

namespace fs = std::filesystem;

Dims to_dims(const std::vector<std::int64_t>& v, const char* flag) {
  if (v.size() != 3) throw ConfigError(std::string(flag) + " expects three comma-separated integers X,Y,Z");
  return {v[0], v[1], v[2]};
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string() + " for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw ConfigError("failed writing " + path.string());
}

ModelParams<float> open_model(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("model file not found: " + path.string());
  return load_model(path);
}

Volume open_volume(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("volume file not found: " + path.string());
  return load_volume(path);
}

// Sliding-window flags shared by infer and eval.
struct WindowFlags {
  std::vector<std::int64_t> patch;
  double overlap = SlidingWindowConfig{}.overlap;
  double sigma_fraction = SlidingWindowConfig{}.sigma_fraction;

  void attach(CLI::App* cmd) {
    cmd->add_option("--patch", patch, "Tile extent X,Y,Z in LR voxels (default 32,32,8)")->delimiter(',');
    cmd->add_option("--overlap", overlap, "Fraction of a tile shared with its neighbour, in [0, 0.9]");
    cmd->add_option("--sigma-fraction", sigma_fraction, "Gaussian window sigma relative to tile extent");
  }

  SlidingWindowConfig config() const {
    SlidingWindowConfig cfg;
    if (!patch.empty()) cfg.patch = to_dims(patch, "--patch");
    cfg.overlap = overlap;
    cfg.sigma_fraction = sigma_fraction;
    cfg.validate();
    return cfg;
  }
};

struct PhantomArgs {
  std::string kind = "sinusoid";
  std::vector<std::int64_t> dims{32, 32, 32};
  std::vector<double> sigma;
  std::vector<float> spacing;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_phantom(const PhantomArgs& a, std::ostream& out) {
  PhantomSpec spec;
  spec.kind = parse_phantom_kind(a.kind);
  spec.dims = to_dims(a.dims, "--dims");
  spec.noise_sigma = a.sigma;
  spec.seed = a.seed;
  if (!a.spacing.empty()) {
    if (a.spacing.size() != 3) throw ConfigError("--spacing expects three comma-separated values");
    spec.base_spacing = {a.spacing[0], a.spacing[1], a.spacing[2]};
  }
  const auto v = make_phantom(spec);
  save_volume(v, a.out);
  out << "wrote " << a.out << " (" << v.dims().x << "x" << v.dims().y << "x" << v.dims().z << ")\n";
  return kExitOk;
}

struct DownsampleArgs {
  std::string in, out;
  std::int64_t factor = 2;
};

int cmd_downsample(const DownsampleArgs& a, std::ostream& out) {
  const auto v = downsample_z_interval(open_volume(a.in), a.factor);
  save_volume(v, a.out);
  out << "wrote " << a.out << " (" << v.dims().z << " slices)\n";
  return kExitOk;
}

struct TrainArgs {
  std::string config, data, out;
  bool no_lam = false;
  bool no_ccl = false;
};

std::vector<Volume> load_training_set(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ConfigError("data directory not found: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".vxr") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ConfigError("no .vxr volumes in " + dir.string());
  std::vector<Volume> volumes;
  for (const auto& f : files) volumes.push_back(load_volume(f));
  return volumes;
}

std::string checkpoint_name(std::int64_t epoch) {
  std::string digits = std::to_string(epoch);
  if (digits.size() < 5) digits.insert(0, 5 - digits.size(), '0');
  return "checkpoint_epoch" + digits + ".mdl";
}

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  auto cfg = parse_train_config(read_text(a.config));
  if (a.no_lam) cfg.model.use_lam = false;
  if (a.no_ccl) cfg.lambda = 0.0;
  cfg.validate();
  const auto volumes = load_training_set(a.data);
  const fs::path dir(a.out);
  fs::create_directories(dir);
  write_text(dir / "config.txt", format_train_config(cfg));

  std::ofstream csv(dir / "loss.csv", std::ios::binary);
  if (!csv) throw ConfigError("cannot open " + (dir / "loss.csv").string() + " for writing");
  csv << loss_csv_header() << '\n';
  TrainHooks hooks;
  hooks.on_step = [&](const LossRecord& r) { csv << format_loss_row(r) << '\n'; };
  hooks.on_epoch = [&](const LossRecord& r) {
    csv.flush();
    out << "epoch " << r.epoch << " inr=" << format_number(r.inr) << " cycle=" << format_number(r.cycle)
        << " total=" << format_number(r.total) << " lr=" << format_number(r.lr) << '\n';
  };
  hooks.on_checkpoint = [&](std::int64_t epoch, const ModelParams<float>& p) {
    save_model(p, dir / checkpoint_name(epoch));
  };
  try {
    const auto result = train(volumes, cfg, hooks);
    csv.close();
    save_model(result.params, dir / "model.mdl");
  } catch (const TrainingDiverged& e) {
    csv.close();
    err << "error: training diverged: " << e.what() << '\n';
    return kExitNumerical;
  }
  out << "wrote " << (dir / "model.mdl").string() << '\n';
  return kExitOk;
}

struct InferArgs {
  std::string model, in, out;
  double scale = 0.0;
  WindowFlags window;
};

int cmd_infer(const InferArgs& a, std::ostream& out) {
  if (!(a.scale > 1.0)) throw ConfigError("--scale must be greater than 1");
  const auto window = a.window.config();
  const auto params = open_model(a.model);
  const auto lr = open_volume(a.in);
  const auto hr = super_resolve(lr, params, a.scale, window);
  save_volume(hr, a.out);
  out << "wrote " << a.out << " (" << hr.dims().z << " slices)\n";
  return kExitOk;
}

struct EvalArgs {
  std::string ref, test, lr, model, out;
  std::string label = "test";
  std::vector<std::string> methods;
  double scale = 0.0;
  bool timing = false;
  WindowFlags window;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const auto ref = open_volume(a.ref);
  EvalReport report;
  if (!a.test.empty()) {
    if (!a.methods.empty() || !a.lr.empty()) throw ConfigError("--test cannot be combined with --method or --lr");
    const auto test = open_volume(a.test);
    report.rows.push_back(evaluate(a.label, a.scale > 0.0 ? a.scale : 1.0, ref, test));
  } else {
    if (a.methods.empty() || a.lr.empty()) throw ConfigError("eval needs either --test, or --lr with --method");
    std::vector<Method> methods;
    for (const auto& m : a.methods) methods.push_back(parse_method(m));
    CompareOptions options;
    options.window = a.window.config();
    options.record_runtime = a.timing;
    ModelParams<float> params;
    if (std::find(methods.begin(), methods.end(), Method::cycleinr) != methods.end()) {
      if (a.model.empty()) throw ConfigError("--method cycleinr requires --model");
      params = open_model(a.model);
      options.model = &params;
    }
    report = compare_methods(open_volume(a.lr), ref, methods, options);
  }
  const auto csv = report.csv();
  if (a.out.empty()) {
    out << csv;
  } else {
    write_text(a.out, csv);
    out << "wrote " << a.out << '\n';
  }
  return kExitOk;
}

struct SnliArgs {
  std::string in, out;
};

int cmd_snli(const SnliArgs& a, std::ostream& out) {
  const auto profile = snli(open_volume(a.in));
  if (!a.out.empty()) write_text(a.out, noise_profile_csv(profile));
  out << "snli=" << format_number(profile.snli) << '\n';
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Arbitrary-scale z-axis super-resolution of volumes with an implicit neural representation"};
  app.name("voxelsr");
  app.require_subcommand(1);

  PhantomArgs phantom;
  auto* ph = app.add_subcommand("phantom", "Write a synthetic phantom volume");
  ph->add_option("--kind", phantom.kind, "ramp, sinusoid or ellipsoids")->capture_default_str();
  ph->add_option("--dims", phantom.dims, "X,Y,Z")->delimiter(',');
  ph->add_option("--sigma", phantom.sigma, "Noise sigma: one value, or one per slice")->delimiter(',');
  ph->add_option("--spacing", phantom.spacing, "Voxel spacing sx,sy,sz in mm")->delimiter(',');
  ph->add_option("--seed", phantom.seed)->capture_default_str();
  ph->add_option("--out", phantom.out, "Output VXR1 file")->required();

  DownsampleArgs down;
  auto* ds = app.add_subcommand("downsample", "Keep every k-th axial slice");
  ds->add_option("--in", down.in)->required();
  ds->add_option("--factor", down.factor, "Slice interval k")->capture_default_str();
  ds->add_option("--out", down.out)->required();

  TrainArgs tr;
  auto* trc = app.add_subcommand("train", "Fit a model to a directory of volumes");
  trc->add_option("--config", tr.config, "key = value training config")->required();
  trc->add_option("--data", tr.data, "Directory of .vxr volumes")->required();
  trc->add_option("--out", tr.out, "Output directory")->required();
  trc->add_flag("--no-lam", tr.no_lam, "Disable attention over neighbouring latent codes");
  trc->add_flag("--no-ccl", tr.no_ccl, "Disable the cycle-consistent loss (lambda = 0)");

  InferArgs inf;
  auto* ic = app.add_subcommand("infer", "Super-resolve a volume along z");
  ic->add_option("--model", inf.model)->required();
  ic->add_option("--in", inf.in)->required();
  ic->add_option("--scale", inf.scale, "Upsampling factor r > 1")->required();
  ic->add_option("--out", inf.out)->required();
  inf.window.attach(ic);

  EvalArgs ev;
  auto* ec = app.add_subcommand("eval", "Score volumes against a reference (PSNR, SSIM, SNLI)");
  ec->add_option("--ref", ev.ref, "Reference HR volume")->required();
  ec->add_option("--test", ev.test, "Volume to score on the reference grid");
  ec->add_option("--label", ev.label, "Method name for --test rows")->capture_default_str();
  ec->add_option("--lr", ev.lr, "LR input to upsample with --method");
  ec->add_option("--method", ev.methods, "cubic, trilinear, cycleinr (comma-separated)")->delimiter(',');
  ec->add_option("--model", ev.model, "Model file for cycleinr");
  ec->add_option("--scale", ev.scale, "Scale written in --test rows (default 1)");
  ec->add_option("--out", ev.out, "CSV output (stdout if omitted)");
  ec->add_flag("--timing", ev.timing, "Record wall-clock runtime_s (not reproducible)");
  ev.window.attach(ec);

  SnliArgs sn;
  auto* sc = app.add_subcommand("snli", "Per-slice noise estimates and their spread");
  sc->add_option("--in", sn.in)->required();
  sc->add_option("--out", sn.out, "Per-slice CSV output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\nRun with --help for usage.\n";
    return kExitUsage;
  }

  try {
    if (ph->parsed()) return cmd_phantom(phantom, out);
    if (ds->parsed()) return cmd_downsample(down, out);
    if (trc->parsed()) return cmd_train(tr, out, err);
    if (ic->parsed()) return cmd_infer(inf, out);
    if (ec->parsed()) return cmd_eval(ev, out);
    if (sc->parsed()) return cmd_snli(sn, out);
  } catch (const NumericalError& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace voxelsr::cli
