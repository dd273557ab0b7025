#pragma once

// Reference computations that share no code with the library: a direct-DFT
// periodogram, a band-power logistic classifier and a softmax feature probe.

#include "nssi/cohort.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace nssi::testing {

// Mean periodogram |X_k|^2 / n over the DFT bins with lo <= f_k <= hi.
inline double band_power(std::span<const float> x, int rate, double lo, double hi) {
  const std::size_t n = x.size();
  double total = 0.0;
  std::size_t bins = 0;
  for (std::size_t k = 1; k <= n / 2; ++k) {
    const double f = static_cast<double>(k) * rate / static_cast<double>(n);
    if (f < lo || f > hi) continue;
    double re = 0.0, im = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      const double ph = 2.0 * std::numbers::pi * static_cast<double>(k * t % n) / static_cast<double>(n);
      re += x[t] * std::cos(ph);
      im -= x[t] * std::sin(ph);
    }
    total += (re * re + im * im) / static_cast<double>(n);
    ++bins;
  }
  return bins ? total / static_cast<double>(bins) : 0.0;
}

inline double channel_band_power(const Trial& tr, std::size_t channel, double lo, double hi) {
  const std::size_t n = tr.samples();
  return band_power(std::span<const float>(tr.data.data() + channel * n, n), tr.rate, lo, hi);
}

struct FeatureRow {
  std::string subject;
  int label = 0;  // 1 = DN+
  std::vector<double> x;
};

// One row per whole-second window: log band power on every channel.
inline std::vector<FeatureRow> band_features(const Cohort& cohort, double lo, double hi) {
  std::vector<FeatureRow> rows;
  for (const Subject& s : cohort.subjects) {
    for (const Trial& tr : s.trials) {
      const std::size_t w = static_cast<std::size_t>(tr.rate), n = tr.samples();
      for (std::size_t start = 0; start + w <= n; start += w) {
        FeatureRow r{s.id, s.disease == Disease::dn_plus ? 1 : 0, {}};
        for (std::size_t c = 0; c < tr.channels; ++c) {
          const std::span<const float> seg(tr.data.data() + c * n + start, w);
          r.x.push_back(std::log(band_power(seg, tr.rate, lo, hi) + 1e-12));
        }
        rows.push_back(std::move(r));
      }
    }
  }
  return rows;
}

// L2-regularized logistic regression by full-batch gradient descent on
// standardized features. Returns P(label = 1) for each test row.
inline std::vector<double> logistic_fit_predict(const std::vector<const FeatureRow*>& train,
                                                const std::vector<const FeatureRow*>& test,
                                                std::size_t iterations = 2000, double rate = 0.5,
                                                double l2 = 1e-3) {
  const std::size_t d = train.front()->x.size();
  std::vector<double> mu(d, 0.0), sd(d, 0.0);
  for (const auto* r : train)
    for (std::size_t j = 0; j < d; ++j) mu[j] += r->x[j] / static_cast<double>(train.size());
  for (const auto* r : train)
    for (std::size_t j = 0; j < d; ++j) sd[j] += std::pow(r->x[j] - mu[j], 2) / static_cast<double>(train.size());
  for (auto& s : sd) s = std::sqrt(s) + 1e-12;
  auto z = [&](const FeatureRow& r, std::size_t j) { return (r.x[j] - mu[j]) / sd[j]; };

  std::vector<double> w(d, 0.0);
  double b = 0.0;
  for (std::size_t it = 0; it < iterations; ++it) {
    std::vector<double> gw(d, 0.0);
    double gb = 0.0;
    for (const auto* r : train) {
      double s = b;
      for (std::size_t j = 0; j < d; ++j) s += w[j] * z(*r, j);
      const double e = 1.0 / (1.0 + std::exp(-s)) - r->label;
      for (std::size_t j = 0; j < d; ++j) gw[j] += e * z(*r, j);
      gb += e;
    }
    const double n = static_cast<double>(train.size());
    for (std::size_t j = 0; j < d; ++j) w[j] -= rate * (gw[j] / n + l2 * w[j]);
    b -= rate * gb / n;
  }
  std::vector<double> out;
  for (const auto* r : test) {
    double s = b;
    for (std::size_t j = 0; j < d; ++j) s += w[j] * z(*r, j);
    out.push_back(1.0 / (1.0 + std::exp(-s)));
  }
  return out;
}

// Mean per-fold sample accuracy of the band-power classifier under a
// subject-level FoldPlan.
inline double band_power_cv_accuracy(const std::vector<FeatureRow>& rows, const FoldPlan& plan) {
  double sum = 0.0;
  for (const Fold& f : plan.folds) {
    const std::set<std::string> test(f.test.begin(), f.test.end());
    const std::set<std::string> train(f.train.begin(), f.train.end());
    std::vector<const FeatureRow*> tr, te;
    for (const auto& r : rows) {
      if (test.count(r.subject)) te.push_back(&r);
      else if (train.count(r.subject)) tr.push_back(&r);
    }
    const std::vector<double> p = logistic_fit_predict(tr, te);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < te.size(); ++i) correct += (p[i] > 0.5 ? 1 : 0) == te[i]->label;
    sum += static_cast<double>(correct) / static_cast<double>(te.size());
  }
  return sum / static_cast<double>(plan.folds.size());
}

// Multinomial logistic regression on standardized features, full-batch
// gradient descent. Rows of `x` are samples; returns accuracy on the test rows.
inline double softmax_probe_accuracy(const std::vector<std::vector<double>>& train_x, const std::vector<int>& train_y,
                                     const std::vector<std::vector<double>>& test_x, const std::vector<int>& test_y,
                                     int classes, std::size_t iterations = 1500, double rate = 0.5,
                                     double l2 = 1e-3) {
  const std::size_t d = train_x.front().size(), n = train_x.size();
  std::vector<double> mu(d, 0.0), sd(d, 0.0);
  for (const auto& r : train_x)
    for (std::size_t j = 0; j < d; ++j) mu[j] += r[j] / static_cast<double>(n);
  for (const auto& r : train_x)
    for (std::size_t j = 0; j < d; ++j) sd[j] += std::pow(r[j] - mu[j], 2) / static_cast<double>(n);
  for (auto& s : sd) s = std::sqrt(s) + 1e-12;
  auto standardize = [&](const std::vector<std::vector<double>>& x) {
    std::vector<std::vector<double>> z = x;
    for (auto& r : z)
      for (std::size_t j = 0; j < d; ++j) r[j] = (r[j] - mu[j]) / sd[j];
    return z;
  };
  const auto ztr = standardize(train_x), zte = standardize(test_x);
  const std::size_t k = static_cast<std::size_t>(classes);
  std::vector<double> w(k * d, 0.0), b(k, 0.0);
  auto logits = [&](const std::vector<double>& r) {
    std::vector<double> s(b);
    for (std::size_t c = 0; c < k; ++c)
      for (std::size_t j = 0; j < d; ++j) s[c] += w[c * d + j] * r[j];
    return s;
  };
  for (std::size_t it = 0; it < iterations; ++it) {
    std::vector<double> gw(k * d, 0.0), gb(k, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> s = logits(ztr[i]);
      const double m = *std::max_element(s.begin(), s.end());
      double z = 0.0;
      for (auto& v : s) z += (v = std::exp(v - m));
      for (std::size_t c = 0; c < k; ++c) {
        const double e = s[c] / z - (static_cast<int>(c) == train_y[i] ? 1.0 : 0.0);
        gb[c] += e;
        for (std::size_t j = 0; j < d; ++j) gw[c * d + j] += e * ztr[i][j];
      }
    }
    for (std::size_t q = 0; q < k * d; ++q) w[q] -= rate * (gw[q] / static_cast<double>(n) + l2 * w[q]);
    for (std::size_t c = 0; c < k; ++c) b[c] -= rate * gb[c] / static_cast<double>(n);
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < zte.size(); ++i) {
    const std::vector<double> s = logits(zte[i]);
    correct += static_cast<int>(std::max_element(s.begin(), s.end()) - s.begin()) == test_y[i];
  }
  return static_cast<double>(correct) / static_cast<double>(zte.size());
}

}  // namespace nssi::testing
