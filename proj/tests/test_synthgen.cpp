#include "oracles.hpp"
#include "nssi/synthgen.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <unistd.h>

using namespace nssi;
using namespace nssi::testing;
namespace fs = std::filesystem;

namespace {

SynthSpec alpha_spec(double amplitude, double noise, std::uint64_t seed) {
  SynthSpec s;
  s.n_per_cell = 15;
  s.channels = 8;
  s.rate = 384;
  s.trials_per_subject = 10;
  s.trial_seconds = 5;
  s.class_effect = {{3}, 8.0, 12.0, amplitude};
  s.noise_amplitude = noise;
  s.seed = seed;
  return s;
}

// Mean in-band power per group, each subject divided by its planted gain^2.
template <typename Pick>
double group_ratio(const SynthResult& r, std::size_t channel, double lo, double hi, Pick in_group) {
  double p[2] = {0, 0};
  std::size_t n[2] = {0, 0};
  for (std::size_t i = 0; i < r.cohort.subjects.size(); ++i) {
    const Subject& s = r.cohort.subjects[i];
    const double g2 = std::pow(r.truth.subjects[i].gains[channel], 2);
    const int k = in_group(s) ? 1 : 0;
    for (const Trial& t : s.trials) {
      p[k] += channel_band_power(t, channel, lo, hi) / g2;
      ++n[k];
    }
  }
  return (p[1] / n[1]) / (p[0] / n[0]);
}

bool is_dn_plus(const Subject& s) { return s.disease == Disease::dn_plus; }

std::vector<double> subject_band_means(const Cohort& c, Disease d, std::size_t channel, double lo, double hi) {
  std::vector<double> out;
  for (const Subject& s : c.subjects) {
    if (s.disease != d) continue;
    double sum = 0;
    for (const Trial& t : s.trials) sum += channel_band_power(t, channel, lo, hi);
    out.push_back(sum / static_cast<double>(s.trials.size()));
  }
  return out;
}

double welch_p(const std::vector<double>& a, const std::vector<double>& b) {
  auto stats = [](const std::vector<double>& v) {
    double m = 0, s = 0;
    for (double x : v) m += x / v.size();
    for (double x : v) s += (x - m) * (x - m) / (v.size() - 1);
    return std::pair{m, s / v.size()};
  };
  const auto [ma, va] = stats(a);
  const auto [mb, vb] = stats(b);
  const double t = (ma - mb) / std::sqrt(va + vb);
  const double df = (va + vb) * (va + vb) / (va * va / (a.size() - 1) + vb * vb / (b.size() - 1));
  return 2 * boost::math::cdf(boost::math::complement(boost::math::students_t(df), std::abs(t)));
}

}  // namespace

TEST_SUITE("synthgen") {
  TEST_CASE("sixty subjects of 35 five-second trials") {
    SynthSpec s = alpha_spec(1.0, 1.0, 4);
    s.trials_per_subject = 35;
    const SynthResult r = generate_cohort(s);
    REQUIRE(r.cohort.subjects.size() == 60);
    for (const Subject& sub : r.cohort.subjects) {
      REQUIRE(sub.trials.size() == 35);
      for (const Trial& t : sub.trials) {
        REQUIRE(t.channels == 8);
        REQUIRE(t.samples() == 1920);
      }
    }
  }

  TEST_CASE("planted amplitude 1 quadruples in-band power") {
    // Without background noise the ratio is (1 + a)^2 up to periodogram sampling error.
    CHECK(group_ratio(generate_cohort(alpha_spec(1.0, 0.0, 1)), 3, 8, 12, is_dn_plus) ==
          doctest::Approx(4.0).epsilon(0.025));
    // The 1/f floor inside the band shrinks the ratio slightly.
    for (std::uint64_t seed : {1, 2}) {
      const double r = group_ratio(generate_cohort(alpha_spec(1.0, 1.0, seed)), 3, 8, 12, is_dn_plus);
      CHECK(r >= 3.5);
      CHECK(r <= 4.5);
    }
  }

  TEST_CASE("the gender effect sits on its own channel and band") {
    SynthSpec s = alpha_spec(1.0, 0.0, 3);
    s.trials_per_subject = 4;
    const SynthResult r = generate_cohort(s);
    auto male = [](const Subject& x) { return x.gender == Gender::male; };
    CHECK(group_ratio(r, 6, 16, 24, male) == doctest::Approx(4.0).epsilon(0.05));
    CHECK(group_ratio(r, 3, 16, 24, male) == doctest::Approx(1.0).epsilon(0.05));
    CHECK(group_ratio(r, 6, 8, 12, is_dn_plus) == doctest::Approx(1.0).epsilon(0.05));
  }

  TEST_CASE("amplitude 0 leaves the groups indistinguishable") {
    SynthSpec s = alpha_spec(0.0, 1.0, 9);
    s.trials_per_subject = 4;
    const Cohort c = generate_cohort(s).cohort;
    const double p = welch_p(subject_band_means(c, Disease::dn_plus, 3, 8, 12),
                             subject_band_means(c, Disease::dn_minus, 3, 8, 12));
    CHECK(p > 0.01);
  }

  TEST_CASE("generation is a pure function of the spec") {
    SynthSpec s = alpha_spec(1.0, 1.0, 5);
    s.n_per_cell = 2;
    s.trials_per_subject = 2;
    s.domain_groups = 2;
    s.domain_shift = 0.5;
    const SynthResult a = generate_cohort(s);
    const SynthResult b = generate_cohort(s);
    CHECK(a.cohort == b.cohort);
    CHECK(a.truth == b.truth);
    CHECK(rerender(a.truth, s.seed) == a.cohort);
    s.seed = 6;
    CHECK(!(generate_cohort(s).cohort == a.cohort));
  }

  TEST_CASE("data are finite with positive variance on every channel") {
    SynthSpec s = alpha_spec(1.0, 1.0, 2);
    s.n_per_cell = 2;
    s.trials_per_subject = 2;
    s.domain_groups = 3;
    s.domain_shift = 1.0;
    for (const Subject& sub : generate_cohort(s).cohort.subjects) {
      for (const Trial& t : sub.trials) {
        for (std::size_t c = 0; c < t.channels; ++c) {
          double m = 0, v = 0;
          for (std::size_t i = 0; i < t.samples(); ++i) {
            REQUIRE(std::isfinite(t.at(c, i)));
            m += t.at(c, i) / t.samples();
          }
          for (std::size_t i = 0; i < t.samples(); ++i) v += std::pow(t.at(c, i) - m, 2);
          REQUIRE(v > 0);
        }
      }
    }
  }

  TEST_CASE("a new noise seed keeps the planted parameters and their power ratio") {
    const SynthResult a = generate_cohort(alpha_spec(1.0, 0.0, 7));
    const SynthResult b{rerender(a.truth, 8), a.truth};
    CHECK(!(a.cohort == b.cohort));
    const double ra = group_ratio(a, 3, 8, 12, is_dn_plus);
    const double rb = group_ratio(b, 3, 8, 12, is_dn_plus);
    CHECK(rb == doctest::Approx(ra).epsilon(0.05));
  }

  TEST_CASE("a one-subject-per-cell cohort round-trips through disk") {
    SynthSpec s = alpha_spec(1.0, 1.0, 3);
    s.n_per_cell = 1;
    s.trials_per_subject = 1;
    s.rate = 64;
    s.trial_seconds = 2;
    s.class_effect.band_lo = 4;
    s.class_effect.band_hi = 8;
    s.gender_effect.band_lo = 10;
    s.gender_effect.band_hi = 14;
    const SynthResult r = generate_cohort(s);
    CHECK(r.cohort.subjects.size() == 4);
    const fs::path dir = fs::temp_directory_path() / ("nssinet_test_synth_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    write_synthetic(r, dir);
    CHECK(load_cohort(dir) == r.cohort);
    const PlantedGroundTruth gt = read_ground_truth(dir);
    CHECK(gt == r.truth);
    CHECK(rerender(gt, s.seed) == r.cohort);
    fs::remove_all(dir);
  }

  TEST_CASE("the spec round-trips through json and rejects bad values") {
    SynthSpec s = alpha_spec(0.5, 0.7, 11);
    s.domain_groups = 3;
    s.domain_shift = 0.2;
    CHECK(synth_spec_from_json(to_json(s)) == s);

    json j = to_json(s);
    j["class_effect"]["band_hz"] = {8.0, 200.0};
    CHECK_THROWS_WITH_AS(synth_spec_from_json(j), doctest::Contains("class_effect: band"), ConfigError);
    json typo = to_json(s);
    typo["n_per_cel"] = 3;
    CHECK_THROWS_WITH_AS(synth_spec_from_json(typo), doctest::Contains("n_per_cel"), ConfigError);
    SynthSpec neg = s;
    neg.class_effect.amplitude = -1;
    CHECK_THROWS(neg.validate());
    SynthSpec ch = s;
    ch.class_effect.channels = {8};
    CHECK_THROWS_WITH(ch.validate(), doctest::Contains("out of range"));
  }

  TEST_CASE("zero domain shift gives identity mixing") {
    SynthSpec s = alpha_spec(1.0, 1.0, 1);
    s.n_per_cell = 1;
    s.domain_groups = 2;
    const PlantedGroundTruth gt = plant(s);
    for (const auto& m : gt.mixing)
      for (std::size_t i = 0; i < 8; ++i)
        for (std::size_t j = 0; j < 8; ++j) CHECK(m[i * 8 + j] == (i == j ? 1.0 : 0.0));
  }
}
