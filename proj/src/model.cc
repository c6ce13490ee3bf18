#include "ilic/model.h"

#include <cstring>

namespace ilic {

void ModelConfig::validate() const {
  if (b < 2 || b > 5) throw Error("model.b must lie in [2, 5]");
  if (N == 0 || M == 0 || Mz == 0) throw Error("model channel counts must be positive");
  if (crm_per_stage < 0) throw Error("model.crm_per_stage must be non-negative");
  if (frm_variant != 'a' && frm_variant != 'b' && frm_variant != 'c') {
    throw Error("frm.variant must be a, b or c");
  }
  if (fenm_layers < 1 || fenm_growth < 1) throw Error("fenm.layers and fenm.growth must be positive");
  if (harmonics < 1 || harmonics > 255) throw Error("qecm.harmonics must lie in [1, 255]");
}

ModelConfig ModelConfig::from_config(const Config& c) {
  ModelConfig m;
  m.b = int(c.get_int("model.b", m.b));
  m.N = std::size_t(c.get_int("model.N", static_cast<long long>(m.N)));
  m.M = std::size_t(c.get_int("model.M", static_cast<long long>(m.M)));
  m.Mz = std::size_t(c.get_int("model.Mz", static_cast<long long>(m.Mz)));
  m.crm_per_stage = int(c.get_int("model.crm_per_stage", m.crm_per_stage));
  const std::string v = c.get_string("frm.variant", std::string(1, m.frm_variant));
  if (v.size() != 1) throw Error("frm.variant must be a, b or c");
  m.frm_variant = v[0];
  m.frm_channels = std::size_t(c.get_int("frm.channels", static_cast<long long>(m.frm_channels)));
  m.fenm_enabled = c.get_bool("fenm.enabled", m.fenm_enabled);
  m.fenm_layers = int(c.get_int("fenm.layers", m.fenm_layers));
  m.fenm_growth = int(c.get_int("fenm.growth", m.fenm_growth));
  m.qecm_enabled = c.get_bool("qecm.enabled", m.qecm_enabled);
  m.harmonics = int(c.get_int("qecm.harmonics", m.harmonics));
  m.validate();
  return m;
}

void ModelConfig::to_config(Config& c) const {
  c.set("model.b", std::to_string(b));
  c.set("model.N", std::to_string(N));
  c.set("model.M", std::to_string(M));
  c.set("model.Mz", std::to_string(Mz));
  c.set("model.crm_per_stage", std::to_string(crm_per_stage));
  c.set("frm.variant", std::string(1, frm_variant));
  c.set("frm.channels", std::to_string(arb_channels()));
  c.set("fenm.enabled", fenm_enabled ? "1" : "0");
  c.set("fenm.layers", std::to_string(fenm_layers));
  c.set("fenm.growth", std::to_string(fenm_growth));
  c.set("qecm.enabled", qecm_enabled ? "1" : "0");
  c.set("qecm.harmonics", std::to_string(harmonics));
}

Model::Model(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  const std::size_t C = cfg_.arb_channels();
  auto rng_for = [seed](std::uint64_t stream) { return Rng(derive_seed(seed, 100 + stream)); };
  {
    Rng r = rng_for(0);
    fexm_ = Fexm(params_, "fexm", cfg_.b, cfg_.N, r);
  }
  {
    Rng r = rng_for(1);
    arb_ = Arb(params_, "arb", cfg_.N, C, cfg_.frm_variant, r);
  }
  {
    Rng r = rng_for(2);
    g_a_ = AnalysisTransform(params_, "g_a", cfg_.refined_channels(), cfg_.N, cfg_.M,
                             cfg_.crm_per_stage, r);
  }
  {
    Rng r = rng_for(3);
    h_a_ = HyperAnalysis(params_, "h_a", cfg_.M, cfg_.Mz, r);
  }
  {
    Rng r = rng_for(4);
    h_s_ = HyperSynthesis(params_, "h_s", cfg_.Mz, cfg_.M, r);
  }
  prior_ = FactorizedPrior(params_, "prior", cfg_.Mz);
  {
    Rng r = rng_for(5);
    g_s_ = SynthesisTransform(params_, "g_s", cfg_.M, cfg_.N, cfg_.refined_channels(),
                              cfg_.crm_per_stage, r);
  }
  if (cfg_.fenm_enabled) {
    Rng r = rng_for(6);
    fenm_ = Fenm(params_, "fenm", cfg_.refined_channels(), cfg_.fenm_growth, cfg_.fenm_layers, r);
  }
  {
    Rng r = rng_for(7);
    rearrange_ = RearrangeInverse(params_, "rearrange", cfg_.frames(), C, r);
  }
  {
    Rng r = rng_for(8);
    ifexm_ = InverseFexm(params_, "ifexm", cfg_.b, C, cfg_.N, r);
  }
}

Tensor Model::refine(const Tensor& x, Tensor* stacked) const {
  if (x.rank() != 3 || x.dim(0) != 3) throw Error("model: expected a [3,H,W] image tensor");
  const std::size_t g = cfg_.granularity();
  if (x.dim(1) % g || x.dim(2) % g) {
    throw Error("model: image extents " + shape_str(x.shape()) + " must be multiples of " +
                std::to_string(g));
  }
  auto feats = fexm_(x);
  const Shape& s = feats.global.shape();
  Tensor st = concat({feats.subs, reshape(feats.global, {1, s[0], s[1], s[2]})}, 0);
  if (stacked) *stacked = st;
  return arb_(st);
}

Tensor Model::compensate(const Tensor& t) const {
  return cfg_.qecm_enabled ? qc_forward(t, cfg_.harmonics) : t;
}

Tensor Model::decompensate_train(const Tensor& t) const {
  return cfg_.qecm_enabled ? iqc_train(t, cfg_.harmonics) : t;
}

Tensor Model::decompensate_test(const Tensor& t, const LaplaceParams& lp, std::uint64_t seed,
                                std::uint64_t stream) const {
  if (!cfg_.qecm_enabled) return t;
  Rng rng(derive_seed(seed, stream));
  return iqc_test(t, cfg_.harmonics, lp, rng);
}

Tensor Model::synthesize(const Tensor& y_hat, std::size_t H, std::size_t W, bool clamp_output,
                         Forward* out) const {
  const std::size_t bb = std::size_t(cfg_.b);
  if (H % cfg_.granularity() || W % cfg_.granularity()) {
    throw Error("model: image extents must be multiples of " + std::to_string(cfg_.granularity()));
  }
  const std::size_t h = H / bb, w = W / bb;
  Tensor f_dec = g_s_(y_hat, h, w);
  Tensor f_enh = cfg_.fenm_enabled ? fenm_(f_dec) : f_dec;
  Tensor r = rearrange_(f_enh);
  const Shape& rs = r.shape();
  Tensor subs = slice(r, 0, 0, bb * bb);
  Tensor global = reshape(slice(r, 0, bb * bb, 1), {rs[1], rs[2], rs[3]});
  Tensor x_hat = ifexm_(subs, global, clamp_output);
  if (out) {
    out->f_dec = f_dec;
    out->f_enh = f_enh;
    out->rearranged = r;
    out->x_hat = x_hat;
  }
  return x_hat;
}

Forward Model::forward(const Tensor& x, Mode mode, std::uint64_t seed) const {
  if (mode == Mode::kTrain) {
    auto rng = std::make_shared<Rng>(derive_seed(seed, kStreamTrainNoise));
    return forward_with(x, mode, [rng](const Tensor& t) { return quantize_noise(t, *rng); }, seed);
  }
  return forward_with(x, mode, quantize_round, seed);
}

Forward Model::forward_with(const Tensor& x, Mode mode, const QuantizeFn& quantize,
                            std::uint64_t seed) const {
  Forward fw;
  fw.f = refine(x, &fw.stacked);
  fw.y = analysis(fw.f);
  fw.z = hyper_analysis(fw.y);

  fw.z_q = quantize(compensate(fw.z));
  fw.bits_z = prior_.bits(fw.z_q);
  fw.z_hat = mode == Mode::kTrain ? decompensate_train(fw.z_q)
                                  : decompensate_test(fw.z_q, laplace_z, seed, kStreamTestNoiseZ);
  fw.gauss = entropy_params(fw.z_hat, fw.y.dim(1), fw.y.dim(2));

  fw.y_q = quantize(compensate(fw.y));
  fw.bits_y = gaussian_bits(fw.y_q, fw.gauss.mu, fw.gauss.sigma);
  fw.y_hat = mode == Mode::kTrain ? decompensate_train(fw.y_q)
                                  : decompensate_test(fw.y_q, laplace_y, seed, kStreamTestNoiseY);

  const bool clamp_output = mode == Mode::kTest || clamp_train_output;
  synthesize(fw.y_hat, x.dim(1), x.dim(2), clamp_output, &fw);
  return fw;
}

Checkpoint Model::to_checkpoint() const {
  Checkpoint ck;
  Config c;
  cfg_.to_config(c);
  ck.config = c.values();
  for (const auto& [name, t] : params_) ck.records.emplace(name, t.detach());
  ck.records.emplace("qecm.mu", Tensor::from({2}, {laplace_y.mu, laplace_z.mu}));
  ck.records.emplace("qecm.b", Tensor::from({2}, {laplace_y.b, laplace_z.b}));
  return ck;
}

Model Model::from_checkpoint(const Checkpoint& ck) {
  Config c;
  for (const auto& [k, v] : ck.config) c.set(k, v);
  Model m(ModelConfig::from_config(c), 0);
  for (const auto& [name, t] : m.params_) {
    auto it = ck.records.find(name);
    if (it == ck.records.end()) throw Error("checkpoint lacks parameter " + name);
    if (it->second.shape() != t.shape()) {
      throw Error("checkpoint parameter " + name + " has shape " + shape_str(it->second.shape()) +
                  ", model expects " + shape_str(t.shape()));
    }
    auto dst = const_cast<Tensor&>(t).mutable_data();
    std::copy(it->second.data().begin(), it->second.data().end(), dst.begin());
  }
  auto mu = ck.records.find("qecm.mu");
  auto b = ck.records.find("qecm.b");
  if (mu != ck.records.end() && b != ck.records.end()) {
    if (mu->second.numel() != 2 || b->second.numel() != 2) throw Error("malformed qecm records");
    m.laplace_y = {mu->second.at(0), b->second.at(0)};
    m.laplace_z = {mu->second.at(1), b->second.at(1)};
  }
  return m;
}

std::uint64_t fnv1a(std::span<const std::uint8_t> bytes, std::uint64_t h) {
  for (auto c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

namespace {

std::uint64_t hash_string(const std::string& s, std::uint64_t h) {
  return fnv1a({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()}, h);
}

}  // namespace

std::uint64_t hash_tensor(const Tensor& t, std::uint64_t h) {
  for (auto e : t.shape()) {
    const std::uint64_t v = e;
    h = fnv1a({reinterpret_cast<const std::uint8_t*>(&v), 8}, h);
  }
  auto d = t.data();
  return fnv1a({reinterpret_cast<const std::uint8_t*>(d.data()), d.size() * sizeof(double)}, h);
}

std::uint64_t Model::id() const {
  Config c;
  cfg_.to_config(c);
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& [k, v] : c.values()) h = hash_string(k + "=" + v + "\n", h);
  for (const auto& [name, t] : params_) h = hash_tensor(t, hash_string(name, h));
  const double q[4] = {laplace_y.mu, laplace_y.b, laplace_z.mu, laplace_z.b};
  return fnv1a({reinterpret_cast<const std::uint8_t*>(q), sizeof(q)}, h);
}

LossTerms total_loss(const Tensor& x, const Tensor& x_hat, const Tensor& bits_y,
                     const Tensor& bits_z, const Tensor& f, const Tensor& f_enh, double lambda,
                     double lambda_scale, double lambda_e) {
  if (x.shape() != x_hat.shape()) {
    throw Error("total_loss: image shapes differ " + shape_str(x.shape()) + " vs " +
                shape_str(x_hat.shape()));
  }
  if (x.rank() != 3) throw Error("total_loss: expected [3,H,W] images");
  const double pixels = double(x.dim(1) * x.dim(2));
  Tensor rate = scalar_mul(add(bits_y, bits_z), 1.0 / pixels);
  Tensor dist = mse(x, x_hat);
  Tensor fe = fe_loss(f_enh, f);
  LossTerms out;
  out.total = add(add(rate, scalar_mul(dist, lambda * lambda_scale)), scalar_mul(fe, lambda_e));
  out.bpp = rate.item();
  out.mse = dist.item();
  out.fe = fe.item();
  return out;
}

std::vector<std::pair<std::string, std::uint64_t>> stage_hashes(const Forward& fw) {
  std::vector<std::pair<std::string, std::uint64_t>> out;
  auto put = [&](const char* name, std::initializer_list<Tensor> ts) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& t : ts) h = hash_tensor(t, h);
    out.emplace_back(name, h);
  };
  put("fexm", {fw.stacked});
  put("frm", {fw.f});
  put("g_a", {fw.y});
  put("h_a", {fw.z});
  put("quant_z", {fw.z_q});
  put("iqc_z", {fw.z_hat});
  put("h_s", {fw.gauss.mu, fw.gauss.sigma});
  put("quant_y", {fw.y_q});
  put("iqc_y", {fw.y_hat});
  put("g_s", {fw.f_dec});
  put("fenm", {fw.f_enh});
  put("rearrange", {fw.rearranged});
  put("ifexm", {fw.x_hat});
  return out;
}

}  // namespace ilic
