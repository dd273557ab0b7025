#include "nssi/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace nssi::loss {

double clamp_prob(double p) { return std::clamp(p, kProbClamp, 1.0 - kProbClamp); }

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double gan(std::span<const double> d_real, std::span<const double> d_fake) {
  if (d_real.size() != d_fake.size() || d_real.empty()) throw std::invalid_argument("gan loss: size mismatch or empty");
  double s = 0.0;
  for (std::size_t i = 0; i < d_real.size(); ++i) {
    s += std::log(clamp_prob(d_real[i])) + std::log(1.0 - clamp_prob(d_fake[i]));
  }
  return s / static_cast<double>(d_real.size());
}

double reconstruction(const Tensor& x, const Tensor& x_hat) {
  if (x.shape() != x_hat.shape()) {
    throw std::invalid_argument("reconstruction loss: shape " + shape_string(x.shape()) + " vs " +
                                shape_string(x_hat.shape()));
  }
  if (x.rank() == 0 || x.dim(0) == 0) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - x_hat[i];
    s += d * d;
  }
  return s / static_cast<double>(x.dim(0));
}

Tensor reconstruction_grad(const Tensor& x, const Tensor& x_hat) {
  if (x.shape() != x_hat.shape()) throw std::invalid_argument("reconstruction loss: shape mismatch");
  Tensor g(x.shape());
  const double scale = 2.0 / static_cast<double>(x.dim(0));
  for (std::size_t i = 0; i < x.size(); ++i) g[i] = scale * (x_hat[i] - x[i]);
  return g;
}

SignalTerms signal(const Tensor& x, const Tensor& x_hat, std::span<const double> d_real,
                   std::span<const double> d_fake, double lambda) {
  if (d_fake.empty()) throw std::invalid_argument("signal loss: empty batch");
  double adv = 0.0;
  for (double p : d_fake) adv -= std::log(clamp_prob(p));
  adv /= static_cast<double>(d_fake.size());
  return {adv + lambda * reconstruction(x, x_hat), -gan(d_real, d_fake)};
}

double gender(std::span<const double> e_male, std::span<const double> e_female) {
  double s = 0.0;
  for (double p : e_male) s -= std::log(clamp_prob(p));
  for (double p : e_female) s -= std::log(1.0 - clamp_prob(p));
  return s;
}

double domain(const Tensor& probs, const Tensor& one_hot) {
  if (probs.shape() != one_hot.shape() || probs.rank() != 2) {
    throw std::invalid_argument("domain loss: expected matching [N, K] tensors");
  }
  const std::size_t n = probs.dim(0), k = probs.dim(1);
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    int hot = -1;
    for (std::size_t j = 0; j < k; ++j) {
      const double v = one_hot[i * k + j];
      if (v == 1.0) {
        if (hot >= 0) throw std::invalid_argument("domain loss: row " + std::to_string(i) + " is not one-hot");
        hot = static_cast<int>(j);
      } else if (v != 0.0) {
        throw std::invalid_argument("domain loss: row " + std::to_string(i) + " is not one-hot");
      }
    }
    if (hot < 0) throw std::invalid_argument("domain loss: row " + std::to_string(i) + " is not one-hot");
    s -= std::log(clamp_prob(probs[i * k + static_cast<std::size_t>(hot)]));
  }
  return s;
}

double disease(std::span<const double> f_probs, std::span<const int> y, std::span<const DomainTag> tags) {
  if (f_probs.size() != y.size() || y.size() != tags.size()) throw std::invalid_argument("disease loss: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (tags[i] != DomainTag::labeled_source) {
      throw std::invalid_argument("disease loss: sample " + std::to_string(i) + " is not from the labeled source");
    }
    if (y[i] != 0 && y[i] != 1) throw std::invalid_argument("disease loss: label must be 0 or 1");
    const double p = clamp_prob(f_probs[i]);
    s -= y[i] == 1 ? std::log(p) : std::log(1.0 - p);
  }
  return s;
}

void Weights::validate() const {
  const std::pair<const char*, double> all[] = {
      {"alpha", alpha}, {"beta", beta}, {"delta", delta}, {"theta", theta}, {"lambda", lambda}};
  for (const auto& [name, v] : all) {
    if (!std::isfinite(v) || v < 0) throw std::invalid_argument(std::string("loss weight ") + name + " must be >= 0");
  }
}

double total(const Components& c, const Weights& w) {
  return w.alpha * c.signal + w.beta * c.gender + w.delta * c.domain + w.theta * c.disease;
}

Tensor sigmoid(const Tensor& logits) {
  Tensor p(logits.shape());
  for (std::size_t i = 0; i < logits.size(); ++i) p[i] = sigmoid(logits[i]);
  return p;
}

Tensor softmax(const Tensor& logits) {
  if (logits.rank() != 2) throw std::invalid_argument("softmax: expected [N, K]");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  Tensor p(logits.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const double* z = logits.data() + i * k;
    double* q = p.data() + i * k;
    const double m = *std::max_element(z, z + k);
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) s += (q[j] = std::exp(z[j] - m));
    for (std::size_t j = 0; j < k; ++j) q[j] /= s;
  }
  return p;
}

LogitLoss binary_logits(const Tensor& logits, std::span<const double> target, Reduction reduction,
                        std::span<const double> row_weight) {
  if (logits.rank() != 2 || logits.dim(1) != 1 || logits.dim(0) != target.size()) {
    throw std::invalid_argument("binary loss: logits " + shape_string(logits.shape()) + " vs " +
                                std::to_string(target.size()) + " targets");
  }
  if (!row_weight.empty() && row_weight.size() != target.size()) throw std::invalid_argument("binary loss: weight size");
  LogitLoss out{0.0, Tensor(logits.shape())};
  double count = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double w = row_weight.empty() ? 1.0 : row_weight[i];
    if (w == 0.0) continue;
    count += w;
    const double p = sigmoid(logits[i]);
    const double t = target[i];
    double v = 0.0, g = 0.0;
    if (t != 0.0) {
      v -= t * std::log(clamp_prob(p));
      if (p >= kProbClamp) g -= t * (1.0 - p);
    }
    if (t != 1.0) {
      v -= (1.0 - t) * std::log(1.0 - clamp_prob(p));
      if (1.0 - p >= kProbClamp) g += (1.0 - t) * p;
    }
    out.value += w * v;
    out.d_logits[i] = w * g;
  }
  if (reduction == Reduction::mean && count > 0) {
    out.value /= count;
    for (auto& g : out.d_logits.storage()) g /= count;
  }
  return out;
}

LogitLoss softmax_logits(const Tensor& logits, std::span<const int> label, Reduction reduction) {
  if (logits.rank() != 2 || logits.dim(0) != label.size()) throw std::invalid_argument("softmax loss: shape mismatch");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  const Tensor p = softmax(logits);
  LogitLoss out{0.0, Tensor(logits.shape())};
  for (std::size_t i = 0; i < n; ++i) {
    if (label[i] < 0 || static_cast<std::size_t>(label[i]) >= k) {
      throw std::invalid_argument("softmax loss: label " + std::to_string(label[i]) + " out of range");
    }
    const std::size_t y = static_cast<std::size_t>(label[i]);
    const double py = p[i * k + y];
    out.value -= std::log(clamp_prob(py));
    if (py >= kProbClamp) {
      for (std::size_t j = 0; j < k; ++j) out.d_logits[i * k + j] = p[i * k + j] - (j == y ? 1.0 : 0.0);
    }
  }
  if (reduction == Reduction::mean && n > 0) {
    out.value /= static_cast<double>(n);
    for (auto& g : out.d_logits.storage()) g /= static_cast<double>(n);
  }
  return out;
}

}  // namespace nssi::loss
