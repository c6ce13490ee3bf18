// ilic command line: train, encode, decode, eval, rd, qerr-stats, synth.
// Every subcommand writes CSV with a header row to stdout (or -o where noted).

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ilic/bitstream.h"
#include "ilic/checkpoint.h"
#include "ilic/config.h"
#include "ilic/image.h"
#include "ilic/metrics.h"
#include "ilic/model.h"
#include "ilic/tensor.h"
#include "ilic/train.h"

namespace fs = std::filesystem;
using namespace ilic;

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

bool is_image_file(const fs::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".ppm";
}

// Files are taken as given; directories expand to their images in name order.
std::vector<std::string> expand_inputs(const std::vector<std::string>& inputs) {
  std::vector<std::string> out;
  for (const auto& in : inputs) {
    if (fs::is_directory(in)) {
      std::vector<std::string> found;
      for (const auto& e : fs::directory_iterator(in))
        if (e.is_regular_file() && is_image_file(e.path())) found.push_back(e.path().string());
      std::sort(found.begin(), found.end());
      if (found.empty()) throw Error("no PNG/PPM images in " + in);
      out.insert(out.end(), found.begin(), found.end());
    } else if (fs::exists(in)) {
      out.push_back(in);
    } else {
      throw Error("no such file or directory: " + in);
    }
  }
  if (out.empty()) throw Error("no input images");
  return out;
}

Checkpoint load_ckpt(const std::string& path) {
  if (!fs::exists(path)) throw Error("checkpoint not found: " + path);
  return load_checkpoint(path);
}

double ckpt_lambda(const Checkpoint& c) {
  auto it = c.config.find("train.lambda");
  return it == c.config.end() ? 0.0 : std::stod(it->second);
}

struct Measured {
  std::size_t bytes = 0;
  double bpp = 0.0, psnr = 0.0, ms_ssim = 0.0;
  int scales = 0;
};

Measured measure(const Image& img, const Model& model, double lambda, std::uint64_t seed) {
  EncodeOptions eo;
  eo.seed = seed;
  eo.lambda = lambda;
  auto enc = encode_image(img, model, eo);
  auto bytes = serialize_bitstream(enc.stream);
  auto rec = decode_image(parse_bitstream(bytes), model);
  Measured m;
  m.bytes = enc.stream.payload_bytes();
  m.bpp = 8.0 * double(m.bytes) / double(img.pixels());
  m.psnr = psnr(img, rec);
  auto ms = ms_ssim(img, rec);
  m.ms_ssim = ms.value;
  m.scales = ms.scales;
  return m;
}

// key=value overrides given with --set.
void apply_sets(Config& cfg, const std::vector<std::string>& sets) {
  for (const auto& s : sets) {
    auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw Error("--set expects key=value, got '" + s + "'");
    auto trim = [](std::string t) {
      auto a = t.find_first_not_of(" \t"), b = t.find_last_not_of(" \t");
      return a == std::string::npos ? std::string() : t.substr(a, b - a + 1);
    };
    cfg.set(trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
  }
}

struct TrainArgs {
  std::string config, data, out;
  std::vector<std::string> sets;
  std::size_t synthetic = 0, synthetic_size = 64;
  std::optional<double> lambda, lr;
  std::optional<long long> epochs;
  std::optional<std::uint64_t> seed;
};

int run_train(const TrainArgs& a) {
  Config cfg;
  if (!a.config.empty()) cfg = Config::load(a.config);
  apply_seed_env(cfg);
  apply_sets(cfg, a.sets);
  if (a.lambda) cfg.set("train.lambda", fmt(*a.lambda));
  if (a.lr) cfg.set("train.lr", fmt(*a.lr));
  if (a.epochs) cfg.set("train.epochs", std::to_string(*a.epochs));
  if (a.seed) cfg.set("train.seed", std::to_string(*a.seed));

  auto mc = ModelConfig::from_config(cfg);
  auto opts = TrainOptions::from_config(cfg);
  if (a.data.empty() == (a.synthetic == 0))
    throw Error("train needs exactly one of --data or --synthetic");
  std::vector<Image> data;
  if (!a.data.empty()) {
    data = load_dataset(a.data);
  } else {
    for (std::size_t i = 0; i < a.synthetic; ++i)
      data.push_back(synthetic_image(a.synthetic_size, a.synthetic_size, derive_seed(opts.seed, 50000 + i)));
  }

  std::cout << "epoch,steps,lr,lambda_e,loss,rd_loss,bpp,mse,fe\n";
  auto res = train(mc, opts, data, [](const EpochLog& e) {
    std::cout << e.epoch << ',' << e.steps << ',' << fmt(e.lr) << ',' << fmt(e.lambda_e) << ','
              << fmt(e.loss) << ',' << fmt(e.rd_loss) << ',' << fmt(e.bpp) << ',' << fmt(e.mse)
              << ',' << fmt(e.fe) << '\n'
              << std::flush;
  });
  save_checkpoint(a.out, training_checkpoint(res.model, opts, res.optimizer));
  return 0;
}

int run_encode(const std::string& in, const std::string& ckpt, const std::string& out,
               std::optional<std::uint64_t> seed) {
  auto c = load_ckpt(ckpt);
  auto model = Model::from_checkpoint(c);
  auto img = load_image(in);
  EncodeOptions eo;
  eo.lambda = ckpt_lambda(c);
  eo.seed = seed ? *seed : c.config.count("train.seed") ? std::stoull(c.config.at("train.seed")) : 0;
  auto enc = encode_image(img, model, eo);
  write_bitstream(out, enc.stream);
  auto total = serialize_bitstream(enc.stream).size();
  std::cout << "input,output,height,width,bytes,payload_bytes,bpp,estimated_bpp\n"
            << in << ',' << out << ',' << img.height << ',' << img.width << ',' << total << ','
            << enc.stream.payload_bytes() << ','
            << fmt(8.0 * double(enc.stream.payload_bytes()) / double(img.pixels())) << ','
            << fmt(enc.estimated_bits / double(img.pixels())) << '\n';
  return 0;
}

int run_decode(const std::string& in, const std::string& ckpt, const std::string& out) {
  auto model = Model::from_checkpoint(load_ckpt(ckpt));
  if (!fs::exists(in)) throw Error("bitstream not found: " + in);
  auto bs = read_bitstream(in);
  auto img = decode_image(bs, model);
  save_image(img, out);
  std::cout << "input,output,height,width\n"
            << in << ',' << out << ',' << img.height << ',' << img.width << '\n';
  return 0;
}

int run_eval_pairs(const std::vector<std::string>& pair) {
  if (pair.size() != 2) throw Error("--pairs expects two images");
  auto a = load_image(pair[0]);
  auto b = load_image(pair[1]);
  auto ms = ms_ssim(a, b);
  std::cout << "reference,distorted,mse,psnr,ms_ssim,ms_ssim_scales\n"
            << pair[0] << ',' << pair[1] << ',' << fmt(mse(a, b)) << ',' << fmt(psnr(a, b)) << ','
            << fmt(ms.value) << ',' << ms.scales << '\n';
  return 0;
}

int run_eval(const std::vector<std::string>& inputs, const std::string& ckpt,
             std::uint64_t seed) {
  auto c = load_ckpt(ckpt);
  auto model = Model::from_checkpoint(c);
  auto files = expand_inputs(inputs);
  std::cout << "image,height,width,bytes,bpp,psnr,ms_ssim,ms_ssim_scales\n";
  for (const auto& f : files) {
    auto img = load_image(f);
    auto m = measure(img, model, ckpt_lambda(c), seed);
    std::cout << f << ',' << img.height << ',' << img.width << ',' << m.bytes << ','
              << fmt(m.bpp) << ',' << fmt(m.psnr) << ',' << fmt(m.ms_ssim) << ',' << m.scales
              << '\n'
              << std::flush;
  }
  return 0;
}

int run_rd(const std::vector<std::string>& ckpts, const std::vector<std::string>& inputs,
           const std::string& anchor, const std::string& out, std::uint64_t seed) {
  auto files = expand_inputs(inputs);
  std::vector<Image> imgs;
  for (const auto& f : files) imgs.push_back(load_image(f));

  struct Row {
    std::string ckpt;
    double lambda;
    RdPoint p;
  };
  std::vector<Row> rows;
  for (const auto& path : ckpts) {
    auto c = load_ckpt(path);
    auto model = Model::from_checkpoint(c);
    Row r{path, ckpt_lambda(c), {}};
    for (const auto& img : imgs) {
      auto m = measure(img, model, r.lambda, seed);
      r.p.bpp += m.bpp;
      r.p.psnr += m.psnr;
      r.p.ms_ssim += m.ms_ssim;
    }
    double n = double(imgs.size());
    r.p.bpp /= n;
    r.p.psnr /= n;
    r.p.ms_ssim /= n;
    rows.push_back(r);
  }
  std::stable_sort(rows.begin(), rows.end(), [](const Row& x, const Row& y) { return x.lambda < y.lambda; });

  std::ostringstream pts;
  pts << "checkpoint,lambda,bpp,psnr,ms_ssim\n";
  for (const auto& r : rows)
    pts << r.ckpt << ',' << fmt(r.lambda) << ',' << fmt(r.p.bpp) << ',' << fmt(r.p.psnr) << ','
        << fmt(r.p.ms_ssim) << '\n';
  if (!out.empty()) {
    std::ofstream f(out);
    if (!f) throw Error("cannot write " + out);
    f << pts.str();
  }
  if (anchor.empty()) {
    if (out.empty()) std::cout << pts.str();
    return 0;
  }
  std::vector<RdPoint> test;
  for (const auto& r : rows) test.push_back(r.p);
  double bd = bd_rate(read_rd_csv(anchor), test);
  std::cout << "anchor,points,bd_rate_percent\n" << anchor << ',' << test.size() << ',' << fmt(bd) << '\n';
  return 0;
}

int run_qerr(const std::vector<std::string>& inputs, const std::string& ckpt, bool update) {
  auto c = load_ckpt(ckpt);
  auto model = Model::from_checkpoint(c);
  std::vector<Image> imgs;
  for (const auto& f : expand_inputs(inputs)) imgs.push_back(load_image(f));
  auto rep = collect_qerr_stats(model, imgs);
  std::cout << "tensor,row,lo,hi,value\n";
  auto emit = [](const char* name, const QuantErrorStats& s) {
    std::cout << name << ",count,,," << s.count << '\n'
              << name << ",mu,,," << fmt(s.fit.mu) << '\n'
              << name << ",b,,," << fmt(s.fit.b) << '\n';
    for (std::size_t i = 0; i < s.histogram.size(); ++i)
      std::cout << name << ",bin," << fmt(s.bin_edges[i]) << ',' << fmt(s.bin_edges[i + 1]) << ','
                << fmt(s.histogram[i]) << '\n';
  };
  emit("y", rep.y);
  emit("z", rep.z);
  if (update) {
    auto updated = model.to_checkpoint();
    for (const auto& [k, v] : c.config)
      if (!updated.config.count(k)) updated.config[k] = v;
    for (const auto& [k, v] : c.records)
      if (k.rfind("opt.", 0) == 0) updated.records[k] = v;
    save_checkpoint(ckpt, updated);
  }
  return 0;
}

int run_synth(const std::string& dir, std::size_t count, std::size_t size, std::uint64_t seed) {
  fs::create_directories(dir);
  std::cout << "path,height,width\n";
  for (std::size_t i = 0; i < count; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "synth_%04zu.png", i);
    auto path = (fs::path(dir) / name).string();
    save_image(synthetic_image(size, size, derive_seed(seed, 50000 + i)), path);
    std::cout << path << ',' << size << ',' << size << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Interleaved learned image codec"};
  app.require_subcommand(1);

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "Train a model; per-epoch CSV on stdout");
  train_cmd->add_option("-c,--config", ta.config, "key = value config file")->check(CLI::ExistingFile);
  train_cmd->add_option("--data", ta.data, "Directory of PNG/PPM training images");
  train_cmd->add_option("--synthetic", ta.synthetic, "Train on N generated images instead");
  train_cmd->add_option("--synthetic-size", ta.synthetic_size, "Side of generated images");
  train_cmd->add_option("--set", ta.sets, "Config override key=value (repeatable)");
  train_cmd->add_option("--lambda", ta.lambda);
  train_cmd->add_option("--lr", ta.lr);
  train_cmd->add_option("--epochs", ta.epochs);
  train_cmd->add_option("--seed", ta.seed);
  train_cmd->add_option("-o,--output", ta.out, "Checkpoint path")->required();

  std::string in, model_path, out;
  std::optional<std::uint64_t> enc_seed;
  auto* enc_cmd = app.add_subcommand("encode", "Compress an image");
  enc_cmd->add_option("input", in)->required();
  enc_cmd->add_option("-m,--model", model_path)->required();
  enc_cmd->add_option("-o,--output", out)->required();
  enc_cmd->add_option("--seed", enc_seed, "Compensation noise seed (default: train.seed)");

  auto* dec_cmd = app.add_subcommand("decode", "Decompress a bitstream");
  dec_cmd->add_option("input", in)->required();
  dec_cmd->add_option("-m,--model", model_path)->required();
  dec_cmd->add_option("-o,--output", out)->required();

  std::vector<std::string> inputs, pairs, ckpts;
  std::uint64_t seed = 0;
  auto* eval_cmd = app.add_subcommand("eval", "Per-image bpp, PSNR and MS-SSIM");
  eval_cmd->add_option("inputs", inputs, "Images or directories");
  eval_cmd->add_option("-m,--model", model_path);
  eval_cmd->add_option("--pairs", pairs, "Compare two images directly")->expected(2);
  eval_cmd->add_option("--seed", seed);

  std::string anchor;
  auto* rd_cmd = app.add_subcommand("rd", "RD points per checkpoint, optional BD-rate");
  rd_cmd->add_option("inputs", inputs, "Images or directories")->required();
  rd_cmd->add_option("-m,--model", ckpts, "Checkpoint (repeatable)")->required();
  rd_cmd->add_option("--anchor", anchor, "Anchor CSV with bpp,psnr columns")->check(CLI::ExistingFile);
  rd_cmd->add_option("-o,--output", out, "Write RD points here");
  rd_cmd->add_option("--seed", seed);

  bool update = false;
  auto* q_cmd = app.add_subcommand("qerr-stats", "Quantisation error histogram and Laplace fit");
  q_cmd->add_option("inputs", inputs, "Images or directories")->required();
  q_cmd->add_option("-m,--model", model_path)->required();
  q_cmd->add_flag("--update", update, "Store the fit in the checkpoint");

  std::size_t count = 20, size = 64;
  auto* synth_cmd = app.add_subcommand("synth", "Write generated test images");
  synth_cmd->add_option("-o,--output", out, "Directory")->required();
  synth_cmd->add_option("--count", count);
  synth_cmd->add_option("--size", size);
  synth_cmd->add_option("--seed", seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*train_cmd) return run_train(ta);
    if (*enc_cmd) return run_encode(in, model_path, out, enc_seed);
    if (*dec_cmd) return run_decode(in, model_path, out);
    if (*eval_cmd) {
      if (!pairs.empty()) return run_eval_pairs(pairs);
      if (model_path.empty() || inputs.empty()) throw Error("eval needs -m and images, or --pairs");
      return run_eval(inputs, model_path, seed);
    }
    if (*rd_cmd) return run_rd(ckpts, inputs, anchor, out, seed);
    if (*q_cmd) return run_qerr(inputs, model_path, update);
    if (*synth_cmd) return run_synth(out, count, size, seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
