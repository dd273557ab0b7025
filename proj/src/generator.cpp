#include "nssi/generator.hpp"

#include "nssi/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace nssi {

namespace L = layers;

void GeneratorConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("generator config: " + m); };
  if (channels == 0) fail("channels must be positive");
  if (points == 0 || pool1 == 0 || pool2 == 0) fail("points and pool widths must be positive");
  if (points % (pool1 * pool2) != 0) {
    fail("points " + std::to_string(points) + " not divisible by pool1*pool2 = " + std::to_string(pool1 * pool2));
  }
  if (points % 8 != 0) fail("points must be divisible by 8 for the second temporal kernel");
  if (temporal_kernel_1() % 2 == 0 || temporal_kernel_2() % 2 == 0) {
    fail("temporal kernels must be odd (points divisible by 16)");
  }
  if (f1 == 0 || f2 == 0 || gru_hidden == 0 || feature_width == 0) fail("layer widths must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must be in [0, 1)");
  if (!(bn_momentum > 0.0 && bn_momentum <= 1.0)) fail("bn_momentum must be in (0, 1]");
  if (!(bn_eps > 0.0)) fail("bn_eps must be positive");
}

namespace {

std::string kernel_str(std::size_t h, std::size_t w) {
  return "[" + std::to_string(h) + ", " + std::to_string(w) + "]";
}

void add_bn(ParamSet& p, const std::string& name, std::size_t maps) {
  p.add(name + ".weight", {maps}, false).value.fill(1.0);
  p.add(name + ".bias", {maps}, false);
  p.add(name + ".running_mean", {maps}, false, false);
  p.add(name + ".running_var", {maps}, false, false).value.fill(1.0);
}

void add_gru(ParamSet& p, const std::string& name, std::size_t in, std::size_t hidden) {
  for (const char* suffix : {"", "_reverse"}) {
    p.add(name + ".weight_ih" + suffix, {3 * hidden, in});
    p.add(name + ".weight_hh" + suffix, {3 * hidden, hidden});
    p.add(name + ".bias_ih" + suffix, {3 * hidden}, false);
    p.add(name + ".bias_hh" + suffix, {3 * hidden}, false);
  }
}

std::vector<std::string> gru_names(const std::string& name) {
  std::vector<std::string> out;
  for (const char* suffix : {"", "_reverse"}) {
    for (const char* t : {".weight_ih", ".weight_hh", ".bias_ih", ".bias_hh"}) out.push_back(name + t + suffix);
  }
  return out;
}

L::GruWeights gru_weights(const ParamSet& p, const std::string& name, bool reverse) {
  const std::string s = reverse ? "_reverse" : "";
  return L::GruWeights{p[name + ".weight_ih" + s], p[name + ".weight_hh" + s], p[name + ".bias_ih" + s],
                       p[name + ".bias_hh" + s]};
}

// Fan-in used for the uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization.
std::size_t fan_in(const ParamTensor& t) {
  const Shape& s = t.value.shape();
  if (s.size() == 4) return s[1] * s[2] * s[3];
  if (s.size() == 2) return s[1];
  return 1;
}

void check_finite(const Tensor& t, const char* row, const char* type) {
  if (!t.all_finite()) {
    throw std::runtime_error(std::string("non-finite activation at layer ") + row + " (" + type + ")");
  }
}

}  // namespace

std::vector<LayerRow> layer_table(const GeneratorConfig& c, std::size_t batch) {
  const std::size_t k1 = c.temporal_kernel_1(), k2 = c.temporal_kernel_2();
  const std::size_t t1 = c.points, t2 = c.points / c.pool1, m = c.sequence_length();
  const std::size_t h = c.gru_hidden, f = c.feature_width, C = c.channels;
  const std::size_t gru_in_enc = f, gru_in_dec = 2 * h;
  auto gru_params = [h](std::size_t in) { return 2 * 3 * ((in + h) * h + 2 * h); };
  return {
      {"1-1", "Conv2d", kernel_str(1, k1), {batch, c.f1, C, t1}, c.f1 * k1 + c.f1,
       {"enc.conv_temporal.weight", "enc.conv_temporal.bias"}},
      {"1-2", "BatchNorm2d", "--", {batch, c.f1, C, t1}, 2 * c.f1, {"enc.bn1.weight", "enc.bn1.bias"}},
      {"1-3", "Conv2d", kernel_str(C, 1), {batch, c.f2, 1, t1}, c.f2 * c.f1 * C + c.f2,
       {"enc.conv_spatial.weight", "enc.conv_spatial.bias"}},
      {"1-4", "BatchNorm2d", "--", {batch, c.f2, 1, t1}, 2 * c.f2, {"enc.bn2.weight", "enc.bn2.bias"}},
      {"1-5", "MaxPool2d", kernel_str(1, c.pool1), {batch, c.f2, 1, t2}, 0, {}},
      {"1-6", "Dropout", "--", {batch, c.f2, 1, t2}, 0, {}},
      {"1-7", "Conv2d", kernel_str(1, k2), {batch, c.f2, 1, t2}, c.f2 * k2 + c.f2,
       {"enc.conv_depthwise.weight", "enc.conv_depthwise.bias"}},
      {"1-8", "Conv2d", kernel_str(1, 1), {batch, c.f1, 1, t2}, c.f1 * c.f2 + c.f1,
       {"enc.conv_pointwise.weight", "enc.conv_pointwise.bias"}},
      {"1-9", "BatchNorm2d", "--", {batch, c.f1, 1, t2}, 2 * c.f1, {"enc.bn3.weight", "enc.bn3.bias"}},
      {"1-10", "MaxPool2d", kernel_str(1, c.pool2), {batch, c.f1, 1, m}, 0, {}},
      {"1-11", "Linear", "--", {batch, m, f}, c.f1 * f + f, {"enc.linear_in.weight", "enc.linear_in.bias"}},
      {"1-12", "GRU", "--", {batch, m, 2 * h}, gru_params(gru_in_enc), gru_names("enc.gru")},
      {"1-13", "Linear", "--", {batch, m, f}, 2 * h * f + f, {"enc.linear_out.weight", "enc.linear_out.bias"}},
      {"1-14", "Linear", "--", {batch, m, 2 * h}, f * 2 * h + 2 * h, {"dec.linear_in.weight", "dec.linear_in.bias"}},
      {"1-15", "GRU", "--", {batch, m, 2 * h}, gru_params(gru_in_dec), gru_names("dec.gru")},
      {"1-16", "Linear", "--", {batch, m, c.f1}, 2 * h * c.f1 + c.f1, {"dec.linear_out.weight", "dec.linear_out.bias"}},
      {"1-17", "MaxUnpool2d", kernel_str(1, c.pool2), {batch, c.f1, 1, t2}, 0, {}},
      {"1-18", "ConvTranspose2d", kernel_str(1, 1), {batch, c.f2, 1, t2}, c.f1 * c.f2 + c.f2,
       {"dec.convt_pointwise.weight", "dec.convt_pointwise.bias"}},
      {"1-19", "ConvTranspose2d", kernel_str(1, k2), {batch, c.f2, 1, t2}, c.f2 * k2 + c.f2,
       {"dec.convt_depthwise.weight", "dec.convt_depthwise.bias"}},
      {"1-20", "BatchNorm2d", "--", {batch, c.f2, 1, t2}, 2 * c.f2, {"dec.bn4.weight", "dec.bn4.bias"}},
      {"1-21", "Dropout", "--", {batch, c.f2, 1, t2}, 0, {}},
      {"1-22", "MaxUnpool2d", kernel_str(1, c.pool1), {batch, c.f2, 1, t1}, 0, {}},
      {"1-23", "ConvTranspose2d", kernel_str(C, 1), {batch, c.f1, C, t1}, c.f2 * c.f1 * C + c.f1,
       {"dec.convt_spatial.weight", "dec.convt_spatial.bias"}},
      {"1-24", "BatchNorm2d", "--", {batch, c.f1, C, t1}, 2 * c.f1, {"dec.bn5.weight", "dec.bn5.bias"}},
      {"1-25", "ConvTranspose2d", kernel_str(1, k1), {batch, 1, C, t1}, c.f1 * k1 + 1,
       {"dec.convt_temporal.weight", "dec.convt_temporal.bias"}},
  };
}

Generator::Generator(const GeneratorConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  const auto& c = config_;
  const std::size_t k1 = c.temporal_kernel_1(), k2 = c.temporal_kernel_2();
  const std::size_t h = c.gru_hidden, f = c.feature_width;
  ParamSet& p = params_;

  p.add("enc.conv_temporal.weight", {c.f1, 1, 1, k1});
  p.add("enc.conv_temporal.bias", {c.f1}, false);
  add_bn(p, "enc.bn1", c.f1);
  p.add("enc.conv_spatial.weight", {c.f2, c.f1, c.channels, 1});
  p.add("enc.conv_spatial.bias", {c.f2}, false);
  add_bn(p, "enc.bn2", c.f2);
  p.add("enc.conv_depthwise.weight", {c.f2, 1, 1, k2});
  p.add("enc.conv_depthwise.bias", {c.f2}, false);
  p.add("enc.conv_pointwise.weight", {c.f1, c.f2, 1, 1});
  p.add("enc.conv_pointwise.bias", {c.f1}, false);
  add_bn(p, "enc.bn3", c.f1);
  p.add("enc.linear_in.weight", {f, c.f1});
  p.add("enc.linear_in.bias", {f}, false);
  add_gru(p, "enc.gru", f, h);
  p.add("enc.linear_out.weight", {f, 2 * h});
  p.add("enc.linear_out.bias", {f}, false);

  p.add("dec.linear_in.weight", {2 * h, f});
  p.add("dec.linear_in.bias", {2 * h}, false);
  add_gru(p, "dec.gru", 2 * h, h);
  p.add("dec.linear_out.weight", {c.f1, 2 * h});
  p.add("dec.linear_out.bias", {c.f1}, false);
  p.add("dec.convt_pointwise.weight", {c.f1, c.f2, 1, 1});
  p.add("dec.convt_pointwise.bias", {c.f2}, false);
  p.add("dec.convt_depthwise.weight", {c.f2, 1, 1, k2});
  p.add("dec.convt_depthwise.bias", {c.f2}, false);
  add_bn(p, "dec.bn4", c.f2);
  p.add("dec.convt_spatial.weight", {c.f2, c.f1, c.channels, 1});
  p.add("dec.convt_spatial.bias", {c.f1}, false);
  add_bn(p, "dec.bn5", c.f1);
  p.add("dec.convt_temporal.weight", {c.f1, 1, 1, k1});
  p.add("dec.convt_temporal.bias", {1}, false);

  Rng rng(derive_seed(seed, "generator.init"));
  for (auto& t : p.entries()) {
    if (!t.trainable || !t.decay) continue;  // biases and BatchNorm keep their constant init
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in(t)));
    for (auto& v : t.value.storage()) v = rng.uniform(-bound, bound);
  }
}

ForwardTrace Generator::forward(const Tensor& x, Mode mode, std::uint64_t dropout_seed) const {
  const auto& c = config_;
  const auto& p = params_;
  if (x.rank() != 4 || x.dim(1) != 1 || x.dim(2) != c.channels || x.dim(3) != c.points) {
    throw std::invalid_argument("generator: input " + shape_string(x.shape()) + " does not match [B, 1, " +
                                std::to_string(c.channels) + ", " + std::to_string(c.points) + "]");
  }
  check_finite(x, "input", "Input");
  const bool train = mode == Mode::train;
  const std::size_t batch = x.dim(0);
  ForwardTrace tr;
  tr.mode = mode;
  tr.dropout_seed = dropout_seed;
  tr.input = x;
  auto record = [&tr](const char* row, const char* type, const Tensor& t) {
    check_finite(t, row, type);
    tr.row_shapes.emplace_back(row, t.shape());
  };
  auto bn = [&](const std::string& name, const Tensor& in, L::BatchNormCache& cache) {
    return L::batchnorm_forward(in, p[name + ".weight"], p[name + ".bias"], p[name + ".running_mean"],
                                p[name + ".running_var"], train, c.bn_eps, cache);
  };

  tr.conv1_out = L::conv_time(x, p["enc.conv_temporal.weight"], p["enc.conv_temporal.bias"], 1);
  record("1-1", "Conv2d", tr.conv1_out);
  tr.bn1_out = bn("enc.bn1", tr.conv1_out, tr.bn1);
  record("1-2", "BatchNorm2d", tr.bn1_out);
  tr.spatial_out = L::conv_rows(tr.bn1_out, p["enc.conv_spatial.weight"], p["enc.conv_spatial.bias"]);
  record("1-3", "Conv2d", tr.spatial_out);
  tr.bn2_out = bn("enc.bn2", tr.spatial_out, tr.bn2);
  record("1-4", "BatchNorm2d", tr.bn2_out);
  tr.pool1_out = L::max_pool_time(tr.bn2_out, c.pool1, tr.pool1);
  record("1-5", "MaxPool2d", tr.pool1_out);
  if (train && c.dropout > 0.0) {
    tr.drop1_mask = L::dropout_mask(tr.pool1_out.shape(), c.dropout, derive_seed(dropout_seed, "dropout", 1));
    tr.drop1_out = L::multiply(tr.pool1_out, tr.drop1_mask);
  } else {
    tr.drop1_out = tr.pool1_out;
  }
  record("1-6", "Dropout", tr.drop1_out);
  tr.depthwise_out = L::conv_time(tr.drop1_out, p["enc.conv_depthwise.weight"], p["enc.conv_depthwise.bias"], c.f2);
  record("1-7", "Conv2d", tr.depthwise_out);
  tr.pointwise_out = L::conv_rows(tr.depthwise_out, p["enc.conv_pointwise.weight"], p["enc.conv_pointwise.bias"]);
  record("1-8", "Conv2d", tr.pointwise_out);
  tr.bn3_out = bn("enc.bn3", tr.pointwise_out, tr.bn3);
  record("1-9", "BatchNorm2d", tr.bn3_out);
  tr.pool2_out = L::max_pool_time(tr.bn3_out, c.pool2, tr.pool2);
  record("1-10", "MaxPool2d", tr.pool2_out);

  tr.sequence = L::maps_to_sequence(tr.pool2_out);
  tr.features = L::linear(tr.sequence, p["enc.linear_in.weight"], p["enc.linear_in.bias"]);
  record("1-11", "Linear", tr.features);
  const Tensor enc_f = L::gru_forward(tr.features, gru_weights(p, "enc.gru", false), false, tr.enc_forward);
  const Tensor enc_b = L::gru_forward(tr.features, gru_weights(p, "enc.gru", true), true, tr.enc_backward);
  tr.bigru = L::concat_features(enc_f, enc_b);
  record("1-12", "GRU", tr.bigru);
  tr.latent = L::linear(tr.bigru, p["enc.linear_out.weight"], p["enc.linear_out.bias"]);
  record("1-13", "Linear", tr.latent);
  tr.flat = tr.latent.reshaped({batch, c.flat_size()});

  tr.dec_in = L::linear(tr.latent, p["dec.linear_in.weight"], p["dec.linear_in.bias"]);
  record("1-14", "Linear", tr.dec_in);
  const Tensor dec_f = L::gru_forward(tr.dec_in, gru_weights(p, "dec.gru", false), false, tr.dec_forward);
  const Tensor dec_b = L::gru_forward(tr.dec_in, gru_weights(p, "dec.gru", true), true, tr.dec_backward);
  tr.dec_gru = L::concat_features(dec_f, dec_b);
  record("1-15", "GRU", tr.dec_gru);
  tr.dec_seq = L::linear(tr.dec_gru, p["dec.linear_out.weight"], p["dec.linear_out.bias"]);
  record("1-16", "Linear", tr.dec_seq);
  tr.dec_maps = L::sequence_to_maps(tr.dec_seq);
  tr.unpool2_out = L::max_unpool_time(tr.dec_maps, tr.pool2);
  record("1-17", "MaxUnpool2d", tr.unpool2_out);
  tr.pointwise_t_out =
      L::conv_rows_transposed(tr.unpool2_out, p["dec.convt_pointwise.weight"], p["dec.convt_pointwise.bias"]);
  record("1-18", "ConvTranspose2d", tr.pointwise_t_out);
  tr.depthwise_t_out = L::conv_time_transposed(tr.pointwise_t_out, p["dec.convt_depthwise.weight"],
                                               p["dec.convt_depthwise.bias"], c.f2);
  record("1-19", "ConvTranspose2d", tr.depthwise_t_out);
  tr.bn4_out = bn("dec.bn4", tr.depthwise_t_out, tr.bn4);
  record("1-20", "BatchNorm2d", tr.bn4_out);
  if (train && c.dropout > 0.0) {
    tr.drop2_mask = L::dropout_mask(tr.bn4_out.shape(), c.dropout, derive_seed(dropout_seed, "dropout", 2));
    tr.drop2_out = L::multiply(tr.bn4_out, tr.drop2_mask);
  } else {
    tr.drop2_out = tr.bn4_out;
  }
  record("1-21", "Dropout", tr.drop2_out);
  tr.unpool1_out = L::max_unpool_time(tr.drop2_out, tr.pool1);
  record("1-22", "MaxUnpool2d", tr.unpool1_out);
  tr.spatial_t_out =
      L::conv_rows_transposed(tr.unpool1_out, p["dec.convt_spatial.weight"], p["dec.convt_spatial.bias"]);
  record("1-23", "ConvTranspose2d", tr.spatial_t_out);
  tr.bn5_out = bn("dec.bn5", tr.spatial_t_out, tr.bn5);
  record("1-24", "BatchNorm2d", tr.bn5_out);
  tr.reconstruction = L::conv_time_transposed(tr.bn5_out, p["dec.convt_temporal.weight"],
                                              p["dec.convt_temporal.bias"], 1);
  record("1-25", "ConvTranspose2d", tr.reconstruction);
  return tr;
}

void Generator::commit_statistics(const ForwardTrace& trace) {
  if (trace.mode != Mode::train) return;
  const double mom = config_.bn_momentum;
  auto upd = [&](const std::string& name, const L::BatchNormCache& cache) {
    L::batchnorm_update_running(cache, mom, params_[name + ".running_mean"], params_[name + ".running_var"]);
  };
  upd("enc.bn1", trace.bn1);
  upd("enc.bn2", trace.bn2);
  upd("enc.bn3", trace.bn3);
  upd("dec.bn4", trace.bn4);
  upd("dec.bn5", trace.bn5);
}

GradientSet Generator::backward(const ForwardTrace& tr, const Tensor* d_reconstruction, const Tensor* d_flat) const {
  const auto& c = config_;
  const auto& p = params_;
  const std::size_t batch = tr.batch();
  GradientSet g = p.zeros_like();
  auto put = [&g](const std::string& name, Tensor t) {
    if (!t.all_finite()) throw std::runtime_error("non-finite gradient for parameter tensor '" + name + "'");
    g[name] = std::move(t);
  };
  auto put_conv = [&](const std::string& name, L::ConvGrads& cg) {
    put(name + ".weight", std::move(cg.d_weight));
    put(name + ".bias", std::move(cg.d_bias));
  };
  auto bn_back = [&](const std::string& name, const L::BatchNormCache& cache, const Tensor& d_out) {
    L::BatchNormGrads bg = L::batchnorm_backward(cache, p[name + ".weight"], d_out);
    put(name + ".weight", std::move(bg.d_gamma));
    put(name + ".bias", std::move(bg.d_beta));
    return std::move(bg.d_input);
  };
  auto lin_back = [&](const std::string& name, const Tensor& in, const Tensor& d_out) {
    L::LinearGrads lg = L::linear_backward(in, p[name + ".weight"], d_out);
    put(name + ".weight", std::move(lg.d_weight));
    put(name + ".bias", std::move(lg.d_bias));
    return std::move(lg.d_input);
  };
  auto gru_back = [&](const std::string& name, const L::GruCache& fwd, const L::GruCache& bwd, const Tensor& d_out) {
    Tensor d_f, d_b;
    L::split_features(d_out, d_f, d_b);
    Tensor d_x;
    for (int dir = 0; dir < 2; ++dir) {
      const bool rev = dir == 1;
      L::GruGrads gg = L::gru_backward(rev ? bwd : fwd, gru_weights(p, name, rev), rev ? d_b : d_f);
      const std::string s = rev ? "_reverse" : "";
      put(name + ".weight_ih" + s, std::move(gg.d_w_ih));
      put(name + ".weight_hh" + s, std::move(gg.d_w_hh));
      put(name + ".bias_ih" + s, std::move(gg.d_b_ih));
      put(name + ".bias_hh" + s, std::move(gg.d_b_hh));
      if (dir == 0) {
        d_x = std::move(gg.d_x);
      } else {
        for (std::size_t i = 0; i < d_x.size(); ++i) d_x[i] += gg.d_x[i];
      }
    }
    return d_x;
  };

  Tensor d_latent({batch, c.sequence_length(), c.feature_width});
  if (d_reconstruction) {
    if (d_reconstruction->shape() != tr.reconstruction.shape()) {
      throw std::invalid_argument("generator backward: reconstruction gradient shape mismatch");
    }
    L::ConvGrads cg = L::conv_time_transposed_backward(tr.bn5_out, p["dec.convt_temporal.weight"], 1,
                                                       *d_reconstruction, true);
    put_conv("dec.convt_temporal", cg);
    Tensor d = bn_back("dec.bn5", tr.bn5, cg.d_input);
    cg = L::conv_rows_transposed_backward(tr.unpool1_out, p["dec.convt_spatial.weight"], d, true);
    put_conv("dec.convt_spatial", cg);
    d = L::max_unpool_time_backward(tr.pool1, cg.d_input);
    if (!tr.drop2_mask.empty()) d = L::multiply(d, tr.drop2_mask);
    d = bn_back("dec.bn4", tr.bn4, d);
    cg = L::conv_time_transposed_backward(tr.pointwise_t_out, p["dec.convt_depthwise.weight"], c.f2, d, true);
    put_conv("dec.convt_depthwise", cg);
    cg = L::conv_rows_transposed_backward(tr.unpool2_out, p["dec.convt_pointwise.weight"], cg.d_input, true);
    put_conv("dec.convt_pointwise", cg);
    d = L::max_unpool_time_backward(tr.pool2, cg.d_input);
    d = L::maps_to_sequence(d);
    d = lin_back("dec.linear_out", tr.dec_gru, d);
    d = gru_back("dec.gru", tr.dec_forward, tr.dec_backward, d);
    d_latent = lin_back("dec.linear_in", tr.latent, d);
  }
  if (d_flat) {
    if (d_flat->shape() != tr.flat.shape()) throw std::invalid_argument("generator backward: feature gradient shape mismatch");
    for (std::size_t i = 0; i < d_latent.size(); ++i) d_latent[i] += (*d_flat)[i];
  }
  if (!d_reconstruction && !d_flat) return g;

  Tensor d = lin_back("enc.linear_out", tr.bigru, d_latent);
  d = gru_back("enc.gru", tr.enc_forward, tr.enc_backward, d);
  d = lin_back("enc.linear_in", tr.sequence, d);
  d = L::sequence_to_maps(d);
  d = L::max_pool_time_backward(tr.pool2, d);
  d = bn_back("enc.bn3", tr.bn3, d);
  L::ConvGrads cg = L::conv_rows_backward(tr.depthwise_out, p["enc.conv_pointwise.weight"], d, true);
  put_conv("enc.conv_pointwise", cg);
  cg = L::conv_time_backward(tr.drop1_out, p["enc.conv_depthwise.weight"], c.f2, cg.d_input, true);
  put_conv("enc.conv_depthwise", cg);
  d = std::move(cg.d_input);
  if (!tr.drop1_mask.empty()) d = L::multiply(d, tr.drop1_mask);
  d = L::max_pool_time_backward(tr.pool1, d);
  d = bn_back("enc.bn2", tr.bn2, d);
  cg = L::conv_rows_backward(tr.bn1_out, p["enc.conv_spatial.weight"], d, true);
  put_conv("enc.conv_spatial", cg);
  d = bn_back("enc.bn1", tr.bn1, cg.d_input);
  cg = L::conv_time_backward(tr.input, p["enc.conv_temporal.weight"], 1, d, false);
  put_conv("enc.conv_temporal", cg);
  return g;
}

Tensor unflatten_features(const Tensor& flat, std::size_t steps, std::size_t width) {
  if (flat.rank() != 2 || flat.dim(1) != steps * width) {
    throw std::invalid_argument("unflatten_features: " + shape_string(flat.shape()) + " is not [B, " +
                                std::to_string(steps * width) + "]");
  }
  return flat.reshaped({flat.dim(0), steps, width});
}

}  // namespace nssi
