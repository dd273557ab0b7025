#pragma once

// Loss functions of the four heads and their weighted combination. The
// probability-space functions evaluate the closed forms; the logit-space
// helpers return the same values together with gradients for training.
//
// Every probability entering a logarithm is clamped to [kProbClamp, 1 - kProbClamp].
// Where the clamp is active the gradient through it is zero.

#include "nssi/tensor.hpp"

#include <span>
#include <vector>

namespace nssi {

enum class DomainTag { labeled_source, unlabeled_source, target };

namespace loss {

inline constexpr double kProbClamp = 1e-7;

double clamp_prob(double p);
double sigmoid(double z);

// mean_i [ln D(x_i) + ln(1 - D(G(x_i)))]
double gan(std::span<const double> d_real, std::span<const double> d_fake);

// Squared error summed over each sample, averaged over the batch (leading axis).
double reconstruction(const Tensor& x, const Tensor& x_hat);
Tensor reconstruction_grad(const Tensor& x, const Tensor& x_hat);  // d/dx_hat

struct SignalTerms {
  double generator = 0.0;      // -mean ln D(x_hat) + lambda * reconstruction
  double discriminator = 0.0;  // -gan
};
SignalTerms signal(const Tensor& x, const Tensor& x_hat, std::span<const double> d_real,
                   std::span<const double> d_fake, double lambda);

// -sum_male ln e - sum_female ln(1 - e)
double gender(std::span<const double> e_male, std::span<const double> e_female);

// -sum_i sum_k p_ik ln d_ik; probs and one_hot are [N, K].
double domain(const Tensor& probs, const Tensor& one_hot);

// Binary cross-entropy summed over labeled-source samples; any other tag throws.
double disease(std::span<const double> f_probs, std::span<const int> y, std::span<const DomainTag> tags);

struct Components {
  double signal = 0.0;
  double gender = 0.0;
  double domain = 0.0;
  double disease = 0.0;
};

struct Weights {
  double alpha = 1.0;
  double beta = 1.0;
  double delta = 1.0;
  double theta = 1.0;
  double lambda = 1.0;

  void validate() const;  // nonnegative and finite
  friend bool operator==(const Weights&, const Weights&) = default;
};

// alpha*signal + beta*gender + delta*domain + theta*disease
double total(const Components& c, const Weights& w);

// ---------------------------------------------------------------------------
// Logit-space evaluation.

enum class Reduction { sum, mean };

struct LogitLoss {
  double value = 0.0;
  Tensor d_logits;  // same shape as the logits
};

// logits [N, 1]; target[i] in {0, 1}. Rows with weight 0 contribute nothing.
LogitLoss binary_logits(const Tensor& logits, std::span<const double> target, Reduction reduction,
                        std::span<const double> row_weight = {});

// logits [N, K]; label[i] in [0, K).
LogitLoss softmax_logits(const Tensor& logits, std::span<const int> label, Reduction reduction);

Tensor sigmoid(const Tensor& logits);
Tensor softmax(const Tensor& logits);  // row-wise over the last axis of [N, K]

}  // namespace loss
}  // namespace nssi
