#include "voxelsr/training.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "voxelsr/error.hpp"
#include "voxelsr/metrics.hpp"
#include "voxelsr/ops.hpp"

namespace voxelsr {

void TrainConfig::validate() const {
  if (!(scale_min >= 1.0) || !(scale_max >= scale_min)) {
    throw ConfigError("scale range must satisfy 1 <= scale_min <= scale_max");
  }
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
  if (!(lr > 0.0)) throw ConfigError("lr must be > 0");
  if (lr_half_every <= 0) throw ConfigError("lr_half_every must be positive");
  if (epochs < 0 || steps_per_epoch <= 0) throw ConfigError("epochs must be >= 0 and steps_per_epoch > 0");
  if (patch_lr.x < 3 || patch_lr.y < 3 || patch_lr.z < 3) throw ConfigError("patch_lr dims must be >= 3");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
  model.validate();
}

double TrainConfig::lr_at_epoch(std::int64_t epoch) const {
  return lr * std::ldexp(1.0, -static_cast<int>(epoch / lr_half_every));
}

std::int64_t TrainConfig::hr_patch_depth(double r) const {
  return static_cast<std::int64_t>(std::llround(static_cast<double>(patch_lr.z - 1) * r)) + 1;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
  }
}

std::int64_t parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long i = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected an integer, got '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config key '" + key + "': expected true/false, got '" + v + "'");
}

Dims parse_dims(const std::string& key, const std::string& v) {
  std::vector<std::int64_t> parts;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) parts.push_back(parse_int(key, trim(item)));
  if (parts.size() != 3) throw ConfigError("config key '" + key + "': expected px,py,pz");
  return {parts[0], parts[1], parts[2]};
}

}  // namespace

TrainConfig parse_train_config(const std::string& text) {
  TrainConfig cfg;
  std::stringstream ss(text);
  std::string line;
  int line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (key == "scale_min") cfg.scale_min = parse_double(key, value);
    else if (key == "scale_max") cfg.scale_max = parse_double(key, value);
    else if (key == "lambda") cfg.lambda = parse_double(key, value);
    else if (key == "lr") cfg.lr = parse_double(key, value);
    else if (key == "lr_half_every") cfg.lr_half_every = parse_int(key, value);
    else if (key == "epochs") cfg.epochs = parse_int(key, value);
    else if (key == "steps_per_epoch") cfg.steps_per_epoch = parse_int(key, value);
    else if (key == "patch_lr") cfg.patch_lr = parse_dims(key, value);
    else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(parse_int(key, value));
    else if (key == "checkpoint_every") cfg.checkpoint_every = parse_int(key, value);
    else if (key == "code_length") cfg.model.code_length = parse_int(key, value);
    else if (key == "channels") cfg.model.channels = parse_int(key, value);
    else if (key == "blocks") cfg.model.blocks = parse_int(key, value);
    else if (key == "layers_per_block") cfg.model.layers_per_block = parse_int(key, value);
    else if (key == "hidden") cfg.model.hidden = parse_int(key, value);
    else if (key == "use_lam") cfg.model.use_lam = parse_bool(key, value);
    else throw ConfigError("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
  }
  cfg.validate();
  return cfg;
}

std::string format_train_config(const TrainConfig& cfg) {
  std::ostringstream os;
  os << "scale_min = " << format_number(cfg.scale_min) << '\n'
     << "scale_max = " << format_number(cfg.scale_max) << '\n'
     << "lambda = " << format_number(cfg.lambda) << '\n'
     << "lr = " << format_number(cfg.lr) << '\n'
     << "lr_half_every = " << cfg.lr_half_every << '\n'
     << "epochs = " << cfg.epochs << '\n'
     << "steps_per_epoch = " << cfg.steps_per_epoch << '\n'
     << "patch_lr = " << cfg.patch_lr.x << ',' << cfg.patch_lr.y << ',' << cfg.patch_lr.z << '\n'
     << "seed = " << cfg.seed << '\n'
     << "checkpoint_every = " << cfg.checkpoint_every << '\n'
     << "code_length = " << cfg.model.code_length << '\n'
     << "channels = " << cfg.model.channels << '\n'
     << "blocks = " << cfg.model.blocks << '\n'
     << "layers_per_block = " << cfg.model.layers_per_block << '\n'
     << "hidden = " << cfg.model.hidden << '\n'
     << "use_lam = " << (cfg.model.use_lam ? "true" : "false") << '\n';
  return os.str();
}

TrainSample make_pair(const Volume& hr_volume, double r, const Dims& origin, const Dims& patch_lr) {
  const auto depth = static_cast<std::int64_t>(std::llround(static_cast<double>(patch_lr.z - 1) * r)) + 1;
  const Dims hr_size{patch_lr.x, patch_lr.y, depth};
  const auto& d = hr_volume.dims();
  if (hr_size.x > d.x || hr_size.y > d.y || hr_size.z > d.z) {
    throw ShapeError("training volume " + std::to_string(d.x) + "x" + std::to_string(d.y) + "x" +
                     std::to_string(d.z) + " is smaller than the HR patch " + std::to_string(hr_size.x) + "x" +
                     std::to_string(hr_size.y) + "x" + std::to_string(hr_size.z) + " needed at scale " +
                     format_number(r));
  }
  TrainSample s;
  s.scale = r;
  s.hr_patch = crop(hr_volume, origin, hr_size);
  // Linear z-resampling straight to pz slices; identical to continuous
  // downsampling but immune to floor() rounding at the effective factor.
  s.lr_patch = resample_z_linear(s.hr_patch, patch_lr.z);
  s.hr_coords = CoordBatch::lattice(s.hr_patch.dims());
  s.lr_coords = CoordBatch::lattice(s.lr_patch.dims());
  return s;
}

TrainSample sample_pair(const Volume& hr_volume, const TrainConfig& cfg, std::mt19937_64& rng) {
  const auto lo = static_cast<int>(std::llround(cfg.scale_min * 10.0));
  const auto hi = static_cast<int>(std::llround(cfg.scale_max * 10.0));
  const double r = std::uniform_int_distribution<int>(lo, hi)(rng) / 10.0;
  const auto& d = hr_volume.dims();
  const auto depth = cfg.hr_patch_depth(cfg.scale_max);
  if (cfg.patch_lr.x > d.x || cfg.patch_lr.y > d.y || depth > d.z) {
    throw ShapeError("training volume too small for an HR patch at the maximum scale " +
                     format_number(cfg.scale_max) + " (needs depth " + std::to_string(depth) + ")");
  }
  const auto hr_depth = cfg.hr_patch_depth(r);
  auto pick = [&](std::int64_t extent, std::int64_t size) {
    return std::uniform_int_distribution<std::int64_t>(0, extent - size)(rng);
  };
  const Dims origin{pick(d.x, cfg.patch_lr.x), pick(d.y, cfg.patch_lr.y), pick(d.z, hr_depth)};
  return make_pair(hr_volume, r, origin, cfg.patch_lr);
}

template <typename T>
BasicTensor<T> inr_loss(const BasicTensor<T>& prediction, const Volume& hr_patch) {
  if (prediction.numel() != hr_patch.dims().count()) {
    throw ShapeError("inr_loss: prediction has " + std::to_string(prediction.numel()) + " values, HR patch has " +
                     std::to_string(hr_patch.dims().count()));
  }
  std::vector<T> target(hr_patch.voxels().begin(), hr_patch.voxels().end());
  return ops::l1_loss(ops::reshape(prediction, {prediction.numel()}),
                      BasicTensor<T>::from_data({prediction.numel()}, std::move(target)));
}

template <typename T>
BasicTensor<T> cycle_loss(const ModelParams<T>& params, const TrainSample& sample,
                          const BasicTensor<T>& hr_prediction) {
  const auto& hd = sample.hr_patch.dims();
  if (hr_prediction.numel() != hd.count()) throw ShapeError("cycle_loss: HR prediction does not cover the HR patch");
  const auto regenerated = ops::reshape(hr_prediction, {1, 1, hd.z, hd.y, hd.x});
  const auto lr_estimate = forward(regenerated, sample.lr_coords, params);
  std::vector<T> target(sample.lr_patch.voxels().begin(), sample.lr_patch.voxels().end());
  return ops::l1_loss(lr_estimate, BasicTensor<T>::from_data({lr_estimate.numel()}, std::move(target)));
}

template <typename T>
BasicTensor<T> total_loss(const BasicTensor<T>& inr, const BasicTensor<T>& cycle, double lambda) {
  if (lambda == 0.0) return inr;
  return ops::add(inr, ops::scale(cycle, static_cast<T>(lambda)));
}

template <typename T>
LossTerms<T> compute_losses(const ModelParams<T>& params, const TrainSample& sample, double lambda) {
  const auto prediction = forward(volume_tensor<T>(sample.lr_patch), sample.hr_coords, params);
  LossTerms<T> out;
  out.inr = inr_loss(prediction, sample.hr_patch);
  out.cycle = lambda > 0.0 ? cycle_loss(params, sample, prediction) : BasicTensor<T>::scalar(T(0));
  out.total = total_loss(out.inr, out.cycle, lambda);
  return out;
}

AdamOptimizer::AdamOptimizer(std::vector<Tensor> params) : params_(std::move(params)) {
  for (const auto& p : params_) {
    m_.emplace_back(static_cast<std::size_t>(p.numel()), 0.0F);
    v_.emplace_back(static_cast<std::size_t>(p.numel()), 0.0F);
  }
}

void AdamOptimizer::step(double lr) {
  ++step_;
  const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    if (!p.has_grad()) continue;
    auto g = p.grad();
    auto w = p.mutable_data();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double gk = g[k];
      m[k] = static_cast<float>(kBeta1 * m[k] + (1.0 - kBeta1) * gk);
      v[k] = static_cast<float>(kBeta2 * v[k] + (1.0 - kBeta2) * gk * gk);
      const double m_hat = m[k] / c1;
      const double v_hat = v[k] / c2;
      w[k] = static_cast<float>(w[k] - lr * m_hat / (std::sqrt(v_hat) + kEpsilon));
    }
  }
}

void AdamOptimizer::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

std::string loss_csv_header() { return "epoch,step,loss_inr,loss_cycle,loss_total,lr"; }

std::string format_loss_row(const LossRecord& r) {
  std::ostringstream os;
  os << r.epoch << ',' << r.step << ',' << format_number(r.inr) << ',' << format_number(r.cycle) << ','
     << format_number(r.total) << ',' << format_number(r.lr);
  return os.str();
}

TrainResult train(const std::vector<Volume>& volumes, const TrainConfig& cfg, const TrainHooks& hooks) {
  cfg.validate();
  return train(volumes, cfg, ModelParams<float>::init(cfg.model, cfg.seed), hooks);
}

TrainResult train(const std::vector<Volume>& volumes, const TrainConfig& cfg, const ModelParams<float>& initial,
                  const TrainHooks& hooks) {
  cfg.validate();
  if (volumes.empty()) throw ConfigError("train: empty training set");
  TrainResult result{initial.clone(), {}};
  auto& params = result.params;
  std::vector<Tensor> handles;
  for (const auto& [name, t] : params.named()) handles.push_back(t);
  AdamOptimizer adam(handles);

  // Sampling uses its own stream so that parameter init and pair draws are
  // independently reproducible.
  std::mt19937_64 rng(cfg.seed ^ 0xD1B54A32D192ED03ULL);
  std::int64_t step = 0;
  for (std::int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cfg.lr_at_epoch(epoch);
    LossRecord epoch_mean{epoch, 0, 0.0, 0.0, 0.0, lr};
    for (std::int64_t s = 0; s < cfg.steps_per_epoch; ++s, ++step) {
      const auto pick = std::uniform_int_distribution<std::size_t>(0, volumes.size() - 1)(rng);
      const auto sample = sample_pair(volumes[pick], cfg, rng);
      auto losses = compute_losses(params, sample, cfg.lambda);
      LossRecord rec{epoch, step, losses.inr.item(), losses.cycle.item(), losses.total.item(), lr};
      if (!std::isfinite(rec.total) || !std::isfinite(rec.inr) || !std::isfinite(rec.cycle)) {
        throw TrainingDiverged(step, "non-finite loss at step " + std::to_string(step) + " (epoch " +
                                         std::to_string(epoch) + ", scale " + format_number(sample.scale) +
                                         "): inr=" + format_number(rec.inr) + " cycle=" + format_number(rec.cycle));
      }
      losses.total.backward();
      adam.step(lr);
      adam.zero_grad();
      result.history.push_back(rec);
      if (hooks.on_step) hooks.on_step(rec);
      epoch_mean.inr += rec.inr;
      epoch_mean.cycle += rec.cycle;
      epoch_mean.total += rec.total;
      epoch_mean.step = step;
    }
    if (hooks.on_epoch) {
      const auto n = static_cast<double>(cfg.steps_per_epoch);
      epoch_mean.inr /= n;
      epoch_mean.cycle /= n;
      epoch_mean.total /= n;
      hooks.on_epoch(epoch_mean);
    }
    if (hooks.on_checkpoint && cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0) {
      hooks.on_checkpoint(epoch + 1, params);
    }
  }
  return result;
}

#define VOXELSR_INSTANTIATE_TRAINING(T)                                                          \
  template BasicTensor<T> inr_loss(const BasicTensor<T>&, const Volume&);                        \
  template BasicTensor<T> cycle_loss(const ModelParams<T>&, const TrainSample&, const BasicTensor<T>&); \
  template BasicTensor<T> total_loss(const BasicTensor<T>&, const BasicTensor<T>&, double);      \
  template LossTerms<T> compute_losses(const ModelParams<T>&, const TrainSample&, double);

VOXELSR_INSTANTIATE_TRAINING(float)
VOXELSR_INSTANTIATE_TRAINING(double)

#undef VOXELSR_INSTANTIATE_TRAINING

}  // namespace voxelsr
