#include "nssi/heads.hpp"

#include "nssi/layers.hpp"
#include "nssi/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace nssi {

MlpHead::MlpHead(std::string name, std::size_t in, std::size_t hidden, std::size_t out, std::uint64_t seed)
    : name_(std::move(name)) {
  if (in == 0 || hidden == 0 || out == 0) throw std::invalid_argument("head '" + name_ + "': zero width");
  params_.add("fc1.weight", {hidden, in});
  params_.add("fc1.bias", {hidden}, false);
  params_.add("fc2.weight", {out, hidden});
  params_.add("fc2.bias", {out}, false);
  Rng rng(derive_seed(seed, "head." + name_));
  for (const char* w : {"fc1.weight", "fc2.weight"}) {
    Tensor& t = params_[w];
    const double bound = 1.0 / std::sqrt(static_cast<double>(t.dim(1)));
    for (auto& v : t.storage()) v = rng.uniform(-bound, bound);
  }
}

Tensor MlpHead::forward(const Tensor& in, MlpCache& cache) const {
  if (in.rank() != 2 || in.dim(1) != in_width()) {
    throw std::invalid_argument("head '" + name_ + "': input " + shape_string(in.shape()) + " expected width " +
                                std::to_string(in_width()));
  }
  cache.input = in;
  cache.pre = layers::linear(in, params_["fc1.weight"], params_["fc1.bias"]);
  cache.hidden = layers::relu(cache.pre);
  return layers::linear(cache.hidden, params_["fc2.weight"], params_["fc2.bias"]);
}

MlpHead::Backward MlpHead::backward(const MlpCache& cache, const Tensor& d_logits) const {
  Backward out{params_.zeros_like(), {}};
  layers::LinearGrads g2 = layers::linear_backward(cache.hidden, params_["fc2.weight"], d_logits);
  const Tensor d_pre = layers::relu_backward(cache.pre, g2.d_input);
  layers::LinearGrads g1 = layers::linear_backward(cache.input, params_["fc1.weight"], d_pre);
  out.grads["fc1.weight"] = std::move(g1.d_weight);
  out.grads["fc1.bias"] = std::move(g1.d_bias);
  out.grads["fc2.weight"] = std::move(g2.d_weight);
  out.grads["fc2.bias"] = std::move(g2.d_bias);
  out.d_input = std::move(g1.d_input);
  return out;
}

std::size_t HeadSet::parameter_count() const {
  return signal.params().trainable_count() + gender.params().trainable_count() +
         domain.params().trainable_count() + disease.params().trainable_count();
}

HeadSet make_heads(std::size_t signal_width, std::size_t feature_width, std::size_t domain_classes,
                   std::size_t hidden, std::uint64_t seed) {
  if (domain_classes != 2 && domain_classes != 3) throw std::invalid_argument("domain head must have 2 or 3 classes");
  return HeadSet{MlpHead("signal", signal_width, hidden, 1, seed), MlpHead("gender", feature_width, hidden, 1, seed),
                 MlpHead("domain", feature_width, hidden, domain_classes, seed),
                 MlpHead("disease", feature_width, hidden, 1, seed)};
}

}  // namespace nssi
