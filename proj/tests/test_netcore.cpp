#include "checks.hpp"
#include "reference_table.hpp"
#include "nssi/generator.hpp"
#include "nssi/layers.hpp"
#include "nssi/optimizer.hpp"

#include <doctest.h>

#include <cmath>

using namespace nssi;
using namespace nssi::testing;
namespace L = nssi::layers;

namespace {

Shape with_batch(Shape s, std::size_t b) {
  s[0] = b;
  return s;
}

}  // namespace

TEST_SUITE("netcore") {
  TEST_CASE("layer table rows match the reference architecture") {
    const GeneratorConfig ref;
    const Generator gen(ref, 1);
    const auto table = layer_table(ref, 384);
    REQUIRE(table.size() == 25);
    std::size_t total = 0;
    for (std::size_t i = 0; i < 25; ++i) {
      const ReferenceRow& p = reference_rows()[i];
      CAPTURE(p.id);
      CHECK(table[i].id == p.id);
      CHECK(table[i].type == p.type);
      CHECK(table[i].output == p.output);
      CHECK(table[i].params == p.params);
      std::size_t owned = 0;
      for (const auto& name : table[i].tensors) owned += gen.params()[name].size();
      CHECK(owned == p.params);
      total += p.params;
    }
    // The printed total (164,807) is not the sum of the rows.
    CHECK(total == 85185);
    CHECK(gen.parameter_count() == total);
  }

  TEST_CASE("first conv and 8-channel spatial conv parameter counts") {
    const GeneratorConfig ref;
    CHECK(layer_table(ref, 1)[0].params == 16 * 193 + 16);
    GeneratorConfig c8 = ref;
    c8.channels = 8;
    CHECK(layer_table(c8, 1)[2].params == 32 * 16 * 8 + 32);
  }

  TEST_CASE("batched forward reproduces every table output shape") {
    const GeneratorConfig ref;
    const Generator gen(ref, 3);
    Rng rng(4);
    const Tensor x = random_tensor({2, 1, 63, 384}, rng);
    const ForwardTrace tr = gen.forward(x, Mode::train, 5);
    REQUIRE(tr.row_shapes.size() == 25);
    for (std::size_t i = 0; i < 25; ++i) {
      CAPTURE(tr.row_shapes[i].first);
      CHECK(tr.row_shapes[i].second == with_batch(reference_rows()[i].output, 2));
    }
    CHECK(tr.pool2_out.shape() == Shape{2, 16, 1, 12});
    CHECK(tr.latent.shape() == Shape{2, 12, 16});
    CHECK(tr.reconstruction.shape() == Shape{2, 1, 63, 384});
  }

  TEST_CASE("decoder shapes mirror the encoder") {
    const auto t = layer_table(GeneratorConfig{}, 4);
    CHECK(t[24].output == with_batch(Shape{1, 1, 63, 384}, 4));
    CHECK(t[23].output == t[0].output);
    CHECK(t[21].output == t[3].output);
    CHECK(t[19].output == t[6].output);
    CHECK(t[16].output == t[8].output);
  }

  TEST_CASE("flatten and unflatten round trip") {
    const Generator gen(tiny_generator(), 2);
    Rng rng(3);
    const ForwardTrace tr = gen.forward(random_tensor({3, 1, 3, 64}, rng), Mode::eval);
    CHECK(unflatten_features(tr.flat, gen.config().sequence_length(), gen.config().feature_width) == tr.latent);
  }

  TEST_CASE("eval forward is pure and repeatable") {
    Generator gen(tiny_generator(), 2);
    Rng rng(7);
    const Tensor x = random_tensor({3, 1, 3, 64}, rng);
    const ParamSet before = gen.params();
    const ForwardTrace a = gen.forward(x, Mode::eval);
    const ForwardTrace b = gen.forward(x, Mode::eval);
    CHECK(a.reconstruction == b.reconstruction);
    CHECK(a.flat == b.flat);
    for (std::size_t i = 0; i < before.size(); ++i) CHECK(before.entries()[i].value == gen.params().entries()[i].value);
  }

  TEST_CASE("training forward with the same dropout seed is repeatable") {
    const Generator gen(tiny_generator(), 2);
    Rng rng(8);
    const Tensor x = random_tensor({4, 1, 3, 64}, rng);
    CHECK(gen.forward(x, Mode::train, 11).reconstruction == gen.forward(x, Mode::train, 11).reconstruction);
    CHECK(!(gen.forward(x, Mode::train, 11).reconstruction == gen.forward(x, Mode::train, 12).reconstruction));
  }

  TEST_CASE("every layer type passes the finite-difference check") {
    for (const auto& [name, s] : layer_gradient_checks(101)) {
      CAPTURE(name);
      CAPTURE(s.worst_at);
      CAPTURE(s.worst);
      CHECK(s.checked > 0);
      CHECK(s.failed == 0);
    }
  }

  TEST_CASE("zero upstream gradient gives exactly zero parameter gradients") {
    const Generator gen(tiny_generator(), 2);
    Rng rng(9);
    const ForwardTrace tr = gen.forward(random_tensor({2, 1, 3, 64}, rng), Mode::train, 1);
    const Tensor zr(tr.reconstruction.shape()), zf(tr.flat.shape());
    const GradientSet g = gen.backward(tr, &zr, &zf);
    for (const auto& e : g.entries()) {
      for (double v : e.value.values()) REQUIRE(v == 0.0);
    }
  }

  TEST_CASE("backward is linear in the upstream gradient") {
    const Generator gen(tiny_generator(), 2);
    Rng rng(10);
    const ForwardTrace tr = gen.forward(random_tensor({2, 1, 3, 64}, rng), Mode::train, 1);
    const Tensor r1 = random_tensor(tr.reconstruction.shape(), rng);
    const Tensor f2 = random_tensor(tr.flat.shape(), rng);
    GradientSet sum = gen.backward(tr, &r1, nullptr);
    sum.add_scaled(gen.backward(tr, nullptr, &f2), 1.0);
    const GradientSet both = gen.backward(tr, &r1, &f2);
    for (const auto& e : both.entries()) {
      CAPTURE(e.name);
      CHECK(max_abs_diff(e.value, sum[e.name]) <= 1e-12 * (1.0 + std::abs(e.value.values()[0])) + 1e-12);
    }
  }

  TEST_CASE("max pool example, tie rule and unpool") {
    Tensor x({1, 1, 1, 4}, std::vector<double>{1, 3, 2, 0});
    L::PoolIndices idx;
    const Tensor y = L::max_pool_time(x, 4, idx);
    CHECK(y[0] == 3.0);
    CHECK(idx.argmax[0] == 1);
    CHECK(L::max_unpool_time(y, idx) == Tensor({1, 1, 1, 4}, std::vector<double>{0, 3, 0, 0}));

    // every 4-element pattern over {0, 1}: the first maximum wins
    for (int mask = 0; mask < 16; ++mask) {
      std::vector<double> v(4);
      for (int i = 0; i < 4; ++i) v[i] = (mask >> i) & 1;
      L::PoolIndices id;
      L::max_pool_time(Tensor({1, 1, 1, 4}, v), 4, id);
      const auto first = static_cast<std::uint32_t>(std::max_element(v.begin(), v.end()) - v.begin());
      CHECK(id.argmax[0] == first);
    }
  }

  TEST_CASE("pool of unpool is the identity") {
    Rng rng(12);
    Tensor x = random_tensor({2, 3, 1, 16}, rng);
    for (auto& v : x.storage()) v = std::abs(v);
    L::PoolIndices idx;
    const Tensor y = L::max_pool_time(x, 4, idx);
    const Tensor u = L::max_unpool_time(y, idx);
    L::PoolIndices idx2;
    CHECK(L::max_pool_time(u, 4, idx2) == y);
  }

  TEST_CASE("GRU matches a scalar cell oracle") {
    const std::size_t in = 16, H = 16, M = 12;
    Rng rng(13);
    const Tensor x = random_tensor({1, M, in}, rng);
    const Tensor wih = random_tensor({3 * H, in}, rng, 0.3), whh = random_tensor({3 * H, H}, rng, 0.3);
    const Tensor bih = random_tensor({3 * H}, rng, 0.3), bhh = random_tensor({3 * H}, rng, 0.3);
    for (bool reverse : {false, true}) {
      L::GruCache c;
      const Tensor out = L::gru_forward(x, {wih, whh, bih, bhh}, reverse, c);
      std::vector<double> h(H, 0.0);
      auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
      for (std::size_t step = 0; step < M; ++step) {
        const std::size_t t = reverse ? M - 1 - step : step;
        std::vector<double> hn(H);
        for (std::size_t j = 0; j < H; ++j) {
          double ar = bih[j] + bhh[j], az = bih[H + j] + bhh[H + j], an = bih[2 * H + j], ah = bhh[2 * H + j];
          for (std::size_t i = 0; i < in; ++i) {
            const double xi = x[t * in + i];
            ar += wih[j * in + i] * xi;
            az += wih[(H + j) * in + i] * xi;
            an += wih[(2 * H + j) * in + i] * xi;
          }
          for (std::size_t i = 0; i < H; ++i) {
            ar += whh[j * H + i] * h[i];
            az += whh[(H + j) * H + i] * h[i];
            ah += whh[(2 * H + j) * H + i] * h[i];
          }
          const double r = sig(ar), z = sig(az);
          const double n = std::tanh(an + r * ah);
          hn[j] = (1 - z) * n + z * h[j];
        }
        h = hn;
        for (std::size_t j = 0; j < H; ++j) CHECK(std::abs(out[t * H + j] - h[j]) < 1e-6);
      }
    }
  }

  TEST_CASE("reversed input with swapped directions mirrors the output") {
    const std::size_t in = 4, H = 3, M = 6;
    Rng rng(14);
    const Tensor x = random_tensor({1, M, in}, rng);
    Tensor xr({1, M, in});
    for (std::size_t t = 0; t < M; ++t) {
      for (std::size_t i = 0; i < in; ++i) xr[t * in + i] = x[(M - 1 - t) * in + i];
    }
    const Tensor wih = random_tensor({3 * H, in}, rng), whh = random_tensor({3 * H, H}, rng);
    const Tensor bih = random_tensor({3 * H}, rng), bhh = random_tensor({3 * H}, rng);
    L::GruCache c1, c2;
    const Tensor fwd = L::gru_forward(x, {wih, whh, bih, bhh}, false, c1);
    const Tensor bwd_on_reversed = L::gru_forward(xr, {wih, whh, bih, bhh}, true, c2);
    for (std::size_t t = 0; t < M; ++t) {
      for (std::size_t j = 0; j < H; ++j) CHECK(fwd[t * H + j] == doctest::Approx(bwd_on_reversed[(M - 1 - t) * H + j]).epsilon(1e-12));
    }
  }

  TEST_CASE("rmsprop hand example") {
    ParamSet p;
    p.add("w", {1}, false).value[0] = 1.0;
    ParamSet g = p.zeros_like();
    g["w"][0] = 1.0;
    RmspropState s = rmsprop_init(p);
    rmsprop_step(p, g, s, {0.1, 0.9, 1e-8, 0.0});
    CHECK(s.square_avg["w"][0] == doctest::Approx(0.1).epsilon(1e-15));
    CHECK(p["w"][0] == doctest::Approx(1.0 - 0.1 / (std::sqrt(0.1) + 1e-8)).epsilon(1e-15));
    CHECK(p["w"][0] == doctest::Approx(0.683772).epsilon(1e-6));
  }

  TEST_CASE("rmsprop leaves parameters alone on zero gradients without decay") {
    Rng rng(15);
    ParamSet p;
    p.add("w", {3, 4}).value = random_tensor({3, 4}, rng);
    const ParamSet before = p;
    RmspropState s = rmsprop_init(p);
    rmsprop_step(p, p.zeros_like(), s, {1e-3, 0.99, 1e-8, 0.0});
    CHECK(p["w"] == before["w"]);
  }

  TEST_CASE("weight decay only touches decay-flagged tensors") {
    ParamSet p;
    p.add("w", {2}, true).value.fill(1.0);
    p.add("b", {2}, false).value.fill(1.0);
    RmspropState s = rmsprop_init(p);
    rmsprop_step(p, p.zeros_like(), s, {1e-3, 0.99, 1e-8, 1e-2});
    CHECK(p["w"][0] < 1.0);
    CHECK(p["b"][0] == 1.0);
  }
}
