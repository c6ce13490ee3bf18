#include "ilic/train.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <sstream>

namespace ilic {

namespace {

long long parse_ll(const std::string& s, const std::string& ctx) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(s, &used);
    if (used != s.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw Error(ctx + ": not an integer: '" + s + "'");
  }
}

}  // namespace

LambdaESchedule LambdaESchedule::parse(const std::string& text) {
  LambdaESchedule s;
  s.text_ = text;
  std::stringstream ss(text);
  std::string item;
  const std::string ctx = "lambda_e schedule '" + text + "'";
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw Error(ctx + ": entries must be value:start");
    Entry e;
    try {
      std::size_t used = 0;
      const std::string v = item.substr(0, colon);
      e.value = std::stod(v, &used);
      if (used != v.size() || !std::isfinite(e.value) || e.value < 0) throw std::invalid_argument("");
    } catch (const std::exception&) {
      throw Error(ctx + ": bad value in '" + item + "'");
    }
    const std::string start = item.substr(colon + 1);
    const auto slash = start.find('/');
    if (slash == std::string::npos) {
      e.num = parse_ll(start, ctx);
    } else {
      e.num = parse_ll(start.substr(0, slash), ctx);
      e.den = parse_ll(start.substr(slash + 1), ctx);
    }
    if (e.den <= 0 || e.num < 0 || e.num > e.den) throw Error(ctx + ": start must lie in [0, 1]");
    if (!s.entries_.empty() &&
        e.num * s.entries_.back().den <= s.entries_.back().num * e.den) {
      throw Error(ctx + ": starts must be increasing");
    }
    s.entries_.push_back(e);
  }
  if (s.entries_.empty() || s.entries_.front().num != 0) throw Error(ctx + ": first entry must start at 0");
  return s;
}

double LambdaESchedule::at(long long epoch, long long epochs) const {
  double v = entries_.front().value;
  for (const auto& e : entries_) {
    // epoch / epochs >= num / den
    if (epoch * e.den >= e.num * epochs) v = e.value;
  }
  return v;
}

double lr_at(double base, long long epoch, long long epochs) {
  if (3 * epoch < 2 * epochs) return base;
  if (12 * epoch < 11 * epochs) return base / 10.0;
  return base / 100.0;
}

TrainOptions TrainOptions::from_config(const Config& c) {
  TrainOptions o;
  o.lambda = c.get_double("train.lambda", o.lambda);
  o.lambda_scale = c.get_double("train.lambda_scale", o.lambda_scale);
  o.lambda_e = LambdaESchedule::parse(c.get_string("train.lambda_e_schedule", o.lambda_e.str()));
  o.base_lr = c.get_double("train.lr", o.base_lr);
  o.epochs = c.get_int("train.epochs", o.epochs);
  o.batch = c.get_int("train.batch", o.batch);
  o.crop = std::size_t(c.get_int("train.crop", static_cast<long long>(o.crop)));
  o.seed = c.get_u64("train.seed", o.seed);
  o.clamp_output = c.get_bool("train.clamp_output", o.clamp_output);
  o.clip_norm = c.get_double("train.clip_norm", o.clip_norm);
  o.checkpoint_every = c.get_int("train.checkpoint_every", o.checkpoint_every);
  o.checkpoint_path = c.get_string("train.checkpoint_path", o.checkpoint_path);
  if (!(o.lambda > 0.0)) throw Error("train.lambda must be positive");
  if (!(o.lambda_scale > 0.0)) throw Error("train.lambda_scale must be positive");
  if (!(o.base_lr > 0.0)) throw Error("train.lr must be positive");
  if (o.epochs < 1) throw Error("train.epochs must be at least 1");
  if (o.batch < 1) throw Error("train.batch must be at least 1");
  if (!(o.clip_norm >= 0.0)) throw Error("train.clip_norm must be non-negative");
  if (o.checkpoint_every < 0) throw Error("train.checkpoint_every must be non-negative");
  return o;
}

void TrainOptions::to_config(Config& c) const {
  auto num = [](double v) {
    std::ostringstream s;
    s.precision(17);
    s << v;
    return s.str();
  };
  c.set("train.lambda", num(lambda));
  c.set("train.lambda_scale", num(lambda_scale));
  c.set("train.lambda_e_schedule", lambda_e.str());
  c.set("train.lr", num(base_lr));
  c.set("train.epochs", std::to_string(epochs));
  c.set("train.batch", std::to_string(batch));
  c.set("train.crop", std::to_string(crop));
  c.set("train.seed", std::to_string(seed));
  c.set("train.clamp_output", clamp_output ? "1" : "0");
  c.set("train.clip_norm", num(clip_norm));
}

std::vector<Image> load_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw Error("dataset directory not found: " + dir);
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (ext == ".png" || ext == ".ppm") files.push_back(e.path().string());
  }
  if (files.empty()) throw Error("dataset directory " + dir + " holds no PNG or PPM images");
  std::sort(files.begin(), files.end());
  std::vector<Image> out;
  out.reserve(files.size());
  for (const auto& f : files) out.push_back(load_image(f));
  return out;
}

Image random_crop(const Image& img, std::size_t size, Rng& rng) {
  if (img.height < size || img.width < size) {
    throw Error("image of " + std::to_string(img.height) + "x" + std::to_string(img.width) +
                " is smaller than the crop size " + std::to_string(size));
  }
  const std::size_t y0 = rng.below(img.height - size + 1);
  const std::size_t x0 = rng.below(img.width - size + 1);
  const bool flip = rng.below(2) == 1;
  Image out(size, size);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x)
        out.at(c, y, x) = img.at(c, y0 + y, x0 + (flip ? size - 1 - x : x));
  return out;
}

double clip_gradients(const ParamStore& params, double max_norm) {
  double sq = 0.0;
  for (const auto& [_, t] : params)
    if (t.has_grad())
      for (double g : t.grad()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double f = max_norm / norm;
    for (const auto& [_, t] : params)
      if (t.has_grad())
        for (double& g : const_cast<Tensor&>(t).mutable_grad()) g *= f;
  }
  return norm;
}

TrainResult train(const ModelConfig& model_cfg, const TrainOptions& opts,
                  const std::vector<Image>& data,
                  const std::function<void(const EpochLog&)>& on_epoch) {
  if (data.empty()) throw Error("train: empty dataset");
  if (opts.crop == 0 || opts.crop % model_cfg.granularity() != 0) {
    throw Error("train.crop must be a positive multiple of " +
                std::to_string(model_cfg.granularity()));
  }
  TrainResult res{Model(model_cfg, derive_seed(opts.seed, 0)), Adam(), {}};
  Model& model = res.model;
  model.clamp_train_output = opts.clamp_output;
  Rng crop_rng(derive_seed(opts.seed, 1));
  const long long n = (long long)data.size();
  const long long steps_per_epoch = (n + opts.batch - 1) / opts.batch;
  long long step = 0;
  for (long long epoch = 0; epoch < opts.epochs; ++epoch) {
    const double lr = lr_at(opts.base_lr, epoch, opts.epochs);
    const double lambda_e = opts.lambda_e.at(epoch, opts.epochs);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(derive_seed(opts.seed, 2000 + std::uint64_t(epoch)));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.below(i)]);

    EpochLog log;
    log.epoch = epoch;
    log.lr = lr;
    log.lambda_e = lambda_e;
    std::size_t next = 0;
    for (long long s = 0; s < steps_per_epoch; ++s) {
      model.params().zero_grad();
      const long long in_batch = std::min<long long>(opts.batch, n - (long long)next);
      for (long long k = 0; k < in_batch; ++k) {
        const Tensor x = image_to_tensor(random_crop(data[order[next++]], opts.crop, crop_rng));
        const std::uint64_t noise_seed = derive_seed(opts.seed, 100000 + std::uint64_t(step) * 64 + std::uint64_t(k));
        const Forward fw = model.forward(x, Mode::kTrain, noise_seed);
        const LossTerms t = total_loss(x, fw.x_hat, fw.bits_y, fw.bits_z, fw.f, fw.f_enh,
                                       opts.lambda, opts.lambda_scale, lambda_e);
        scalar_mul(t.total, 1.0 / double(in_batch)).backward();
        const double rd = t.bpp + opts.lambda * opts.lambda_scale * t.mse;
        log.loss += t.total.item();
        log.rd_loss += rd;
        log.bpp += t.bpp;
        log.mse += t.mse;
        log.fe += t.fe;
      }
      const double norm = clip_gradients(model.params(), opts.clip_norm);
      log.grad_norm = std::max(log.grad_norm, norm);
      res.optimizer.step(model.params(), lr);
      ++step;
    }
    for (double* v : {&log.loss, &log.rd_loss, &log.bpp, &log.mse, &log.fe}) *v /= double(n);
    log.steps = step;
    res.log.push_back(log);
    if (on_epoch) on_epoch(log);
    if (opts.checkpoint_every > 0 && !opts.checkpoint_path.empty() &&
        (epoch + 1) % opts.checkpoint_every == 0) {
      save_checkpoint(opts.checkpoint_path, training_checkpoint(model, opts, res.optimizer));
    }
  }
  collect_qerr_stats(model, data);
  return res;
}

QuantErrorReport collect_qerr_stats(Model& model, const std::vector<Image>& images) {
  if (images.empty()) throw Error("collect_qerr_stats: no images");
  NoGradGuard ng;
  std::vector<double> ys, zs;
  for (const auto& img : images) {
    const PaddedImage p = pad_to_multiple(img, model.config().granularity());
    const Tensor y = model.analysis(model.refine(image_to_tensor(p.image)));
    const Tensor z = model.hyper_analysis(y);
    const Tensor vy = model.compensate(y), vz = model.compensate(z);
    ys.insert(ys.end(), vy.data().begin(), vy.data().end());
    zs.insert(zs.end(), vz.data().begin(), vz.data().end());
  }
  QuantErrorReport r{quant_error_stats(ys), quant_error_stats(zs)};
  model.laplace_y = r.y.fit;
  model.laplace_z = r.z.fit;
  return r;
}

Checkpoint training_checkpoint(const Model& model, const TrainOptions& opts, const Adam& opt) {
  Checkpoint ck = model.to_checkpoint();
  Config c;
  opts.to_config(c);
  for (const auto& [k, v] : c.values()) ck.config[k] = v;
  ck.config["train.steps_done"] = std::to_string(opt.steps());
  for (auto& [k, t] : opt.export_state()) ck.records.emplace("opt." + k, t);
  return ck;
}

Image synthetic_image(std::size_t height, std::size_t width, std::uint64_t seed) {
  Rng rng(seed);
  Image img(height, width);
  double c0[3], c1[3];
  for (int c = 0; c < 3; ++c) {
    c0[c] = rng.uniform(0.1, 0.9);
    c1[c] = rng.uniform(0.1, 0.9);
  }
  const double angle = rng.uniform(0.0, 6.283185307179586);
  const double ux = std::cos(angle), uy = std::sin(angle);
  const double diag = double(height + width);
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x) {
      const double t = std::clamp(0.5 + (ux * double(x) + uy * double(y)) / diag, 0.0, 1.0);
      for (std::size_t c = 0; c < 3; ++c) img.at(c, y, x) = c0[c] + (c1[c] - c0[c]) * t;
    }
  const int shapes = 3 + int(rng.below(6));
  for (int s = 0; s < shapes; ++s) {
    const int kind = int(rng.below(3));
    const double cy = rng.uniform(0, double(height)), cx = rng.uniform(0, double(width));
    const double ry = rng.uniform(3, double(height) / 3 + 3), rx = rng.uniform(3, double(width) / 3 + 3);
    double col[3];
    for (auto& v : col) v = rng.uniform(0.0, 1.0);
    const double period = rng.uniform(3.0, 12.0), phase = rng.uniform(0.0, 6.283185307179586);
    for (std::size_t y = 0; y < height; ++y)
      for (std::size_t x = 0; x < width; ++x) {
        const double dy = (double(y) - cy) / ry, dx = (double(x) - cx) / rx;
        const bool inside = kind == 1 ? dy * dy + dx * dx <= 1.0 : std::abs(dy) <= 1 && std::abs(dx) <= 1;
        if (!inside) continue;
        double shade = 1.0;
        if (kind == 2) shade = 0.75 + 0.25 * std::sin(6.283185307179586 * double(x + y) / period + phase);
        for (std::size_t c = 0; c < 3; ++c) img.at(c, y, x) = col[c] * shade;
      }
  }
  for (auto& v : img.data) v = std::clamp(v + rng.uniform(-0.02, 0.02), 0.0, 1.0);
  return img;
}

}  // namespace ilic
