#include "nssi/layers.hpp"

#include "nssi/rng.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace nssi::layers {

namespace {

using StridedMap = Eigen::Map<RowMatrix, 0, Eigen::OuterStride<>>;
using ConstStridedMap = Eigen::Map<const RowMatrix, 0, Eigen::OuterStride<>>;

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

struct ConvDims {
  std::size_t batch, cin, rows, time, cout, cin_g, cout_g, k, pad;
};

ConvDims conv_dims(const Tensor& in, const Tensor& weight, std::size_t groups) {
  require(in.rank() == 4 && weight.rank() == 4, "conv_time: expected rank-4 input and weight");
  require(weight.dim(2) == 1, "conv_time: kernel height must be 1");
  const std::size_t k = weight.dim(3);
  require(k % 2 == 1, "conv_time: kernel width must be odd for same padding");
  require(groups >= 1 && in.dim(1) % groups == 0 && weight.dim(0) % groups == 0, "conv_time: bad groups");
  require(weight.dim(1) * groups == in.dim(1), "conv_time: weight/input channel mismatch, input " +
                                                   shape_string(in.shape()) + " weight " +
                                                   shape_string(weight.shape()));
  return ConvDims{in.dim(0), in.dim(1), in.dim(2), in.dim(3), weight.dim(0), weight.dim(1),
                  weight.dim(0) / groups, k, k / 2};
}

// [Cin, Cout/g, 1, K] (transposed layout) <-> [Cout, Cin/g, 1, K] with the
// kernel reversed in time. The mapping is an involution on index pairs, so the
// same routine converts gradients back.
Tensor swap_flip(const Tensor& w, std::size_t groups, bool to_effective) {
  const std::size_t k = w.dim(3);
  Shape out_shape;
  std::size_t cin = 0, cout_g = 0, cin_g = 0;
  if (to_effective) {
    cin = w.dim(0);
    cout_g = w.dim(1);
    cin_g = cin / groups;
    out_shape = {cout_g * groups, cin_g, 1, k};
  } else {
    cout_g = w.dim(0) / groups;
    cin_g = w.dim(1);
    cin = cin_g * groups;
    out_shape = {cin, cout_g, 1, k};
  }
  Tensor out(out_shape);
  for (std::size_t g = 0; g < groups; ++g) {
    for (std::size_t ii = 0; ii < cin_g; ++ii) {
      for (std::size_t oo = 0; oo < cout_g; ++oo) {
        const std::size_t i = g * cin_g + ii;
        const std::size_t o = g * cout_g + oo;
        for (std::size_t kk = 0; kk < k; ++kk) {
          const std::size_t t_idx = (i * cout_g + oo) * k + kk;           // transposed layout
          const std::size_t e_idx = (o * cin_g + ii) * k + (k - 1 - kk);  // effective layout
          if (to_effective) {
            out[e_idx] = w[t_idx];
          } else {
            out[t_idx] = w[e_idx];
          }
        }
      }
    }
  }
  return out;
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

// ---------------------------------------------------------------------------

// Output positions [t0, t0 + n) receive tap k from input positions shifted by
// k - pad.
struct Tap {
  std::size_t t0, n, s0;
};

Tap tap(const ConvDims& d, std::size_t k) {
  if (k < d.pad) {
    const std::size_t shift = d.pad - k;
    return Tap{shift, d.time - shift, 0};
  }
  const std::size_t shift = k - d.pad;
  return Tap{0, d.time - shift, shift};
}

Tensor conv_time(const Tensor& in, const Tensor& weight, const Tensor& bias, std::size_t groups) {
  const ConvDims d = conv_dims(in, weight, groups);
  require(bias.size() == d.cout, "conv_time: bias size mismatch");
  Tensor out({d.batch, d.cout, d.rows, d.time});
  const std::size_t in_stride = d.cin * d.rows * d.time;
  const std::size_t out_stride = d.cout * d.rows * d.time;
  for (std::size_t b = 0; b < d.batch; ++b) {
    for (std::size_t o = 0; o < d.cout; ++o) {
      const std::size_t g = o / d.cout_g;
      for (std::size_t r = 0; r < d.rows; ++r) {
        double* dst = out.data() + b * out_stride + (o * d.rows + r) * d.time;
        for (std::size_t j = 0; j < d.time; ++j) dst[j] = bias[o];
        for (std::size_t ii = 0; ii < d.cin_g; ++ii) {
          const double* w = weight.data() + (o * d.cin_g + ii) * d.k;
          const double* src = in.data() + b * in_stride + ((g * d.cin_g + ii) * d.rows + r) * d.time;
          for (std::size_t k = 0; k < d.k; ++k) {
            const Tap tp = tap(d, k);
            const double wk = w[k];
            const double* s = src + tp.s0;
            double* o_ptr = dst + tp.t0;
            for (std::size_t j = 0; j < tp.n; ++j) o_ptr[j] += wk * s[j];
          }
        }
      }
    }
  }
  return out;
}

ConvGrads conv_time_backward(const Tensor& in, const Tensor& weight, std::size_t groups, const Tensor& d_out,
                             bool need_input) {
  const ConvDims d = conv_dims(in, weight, groups);
  require(d_out.shape() == Shape({d.batch, d.cout, d.rows, d.time}), "conv_time_backward: d_out shape");
  ConvGrads g{Tensor(weight.shape()), Tensor({d.cout}), need_input ? Tensor(in.shape()) : Tensor()};
  const std::size_t in_stride = d.cin * d.rows * d.time;
  const std::size_t out_stride = d.cout * d.rows * d.time;
  for (std::size_t b = 0; b < d.batch; ++b) {
    for (std::size_t o = 0; o < d.cout; ++o) {
      const std::size_t grp = o / d.cout_g;
      for (std::size_t r = 0; r < d.rows; ++r) {
        const double* go = d_out.data() + b * out_stride + (o * d.rows + r) * d.time;
        double bsum = 0.0;
        for (std::size_t j = 0; j < d.time; ++j) bsum += go[j];
        g.d_bias[o] += bsum;
        for (std::size_t ii = 0; ii < d.cin_g; ++ii) {
          const std::size_t ci = grp * d.cin_g + ii;
          const double* w = weight.data() + (o * d.cin_g + ii) * d.k;
          double* dw = g.d_weight.data() + (o * d.cin_g + ii) * d.k;
          const double* src = in.data() + b * in_stride + (ci * d.rows + r) * d.time;
          double* gi = need_input ? g.d_input.data() + b * in_stride + (ci * d.rows + r) * d.time : nullptr;
          for (std::size_t k = 0; k < d.k; ++k) {
            const Tap tp = tap(d, k);
            const double* s = src + tp.s0;
            const double* go_k = go + tp.t0;
            dw[k] += Eigen::Map<const Eigen::VectorXd>(go_k, static_cast<Eigen::Index>(tp.n))
                         .dot(Eigen::Map<const Eigen::VectorXd>(s, static_cast<Eigen::Index>(tp.n)));
            if (gi) {
              const double wk = w[k];
              double* gi_k = gi + tp.s0;
              for (std::size_t j = 0; j < tp.n; ++j) gi_k[j] += wk * go_k[j];
            }
          }
        }
      }
    }
  }
  return g;
}

Tensor conv_time_transposed(const Tensor& in, const Tensor& weight, const Tensor& bias, std::size_t groups) {
  require(weight.rank() == 4 && weight.dim(0) == in.dim(1), "conv_time_transposed: weight/input channel mismatch");
  return conv_time(in, swap_flip(weight, groups, true), bias, groups);
}

ConvGrads conv_time_transposed_backward(const Tensor& in, const Tensor& weight, std::size_t groups,
                                        const Tensor& d_out, bool need_input) {
  ConvGrads g = conv_time_backward(in, swap_flip(weight, groups, true), groups, d_out, need_input);
  g.d_weight = swap_flip(g.d_weight, groups, false);
  return g;
}

// ---------------------------------------------------------------------------

Tensor conv_rows(const Tensor& in, const Tensor& weight, const Tensor& bias) {
  require(in.rank() == 4 && weight.rank() == 4 && weight.dim(3) == 1, "conv_rows: expected kernel [R, 1]");
  require(weight.dim(1) == in.dim(1) && weight.dim(2) == in.dim(2),
          "conv_rows: weight " + shape_string(weight.shape()) + " does not fit input " + shape_string(in.shape()));
  const std::size_t batch = in.dim(0), cin = in.dim(1), rows = in.dim(2), time = in.dim(3), cout = weight.dim(0);
  require(bias.size() == cout, "conv_rows: bias size mismatch");
  Tensor out({batch, cout, 1, time});
  ConstMatrixMap wm(weight.data(), static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(cin * rows));
  Eigen::Map<const Eigen::VectorXd> bv(bias.data(), static_cast<Eigen::Index>(cout));
  for (std::size_t b = 0; b < batch; ++b) {
    ConstMatrixMap x(in.data() + b * cin * rows * time, static_cast<Eigen::Index>(cin * rows),
                     static_cast<Eigen::Index>(time));
    MatrixMap y(out.data() + b * cout * time, static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(time));
    y.noalias() = wm * x;
    y.colwise() += bv;
  }
  return out;
}

ConvGrads conv_rows_backward(const Tensor& in, const Tensor& weight, const Tensor& d_out, bool need_input) {
  const std::size_t batch = in.dim(0), cin = in.dim(1), rows = in.dim(2), time = in.dim(3), cout = weight.dim(0);
  require(d_out.shape() == Shape({batch, cout, 1, time}), "conv_rows_backward: d_out shape");
  ConvGrads g{Tensor(weight.shape()), Tensor({cout}), need_input ? Tensor(in.shape()) : Tensor()};
  ConstMatrixMap wm(weight.data(), static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(cin * rows));
  MatrixMap dwm(g.d_weight.data(), static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(cin * rows));
  Eigen::Map<Eigen::VectorXd> db(g.d_bias.data(), static_cast<Eigen::Index>(cout));
  for (std::size_t b = 0; b < batch; ++b) {
    ConstMatrixMap x(in.data() + b * cin * rows * time, static_cast<Eigen::Index>(cin * rows),
                     static_cast<Eigen::Index>(time));
    ConstMatrixMap go(d_out.data() + b * cout * time, static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(time));
    dwm.noalias() += go * x.transpose();
    db += go.rowwise().sum();
    if (need_input) {
      MatrixMap gi(g.d_input.data() + b * cin * rows * time, static_cast<Eigen::Index>(cin * rows),
                   static_cast<Eigen::Index>(time));
      gi.noalias() = wm.transpose() * go;
    }
  }
  return g;
}

Tensor conv_rows_transposed(const Tensor& in, const Tensor& weight, const Tensor& bias) {
  require(in.rank() == 4 && in.dim(2) == 1, "conv_rows_transposed: input must have a single row");
  require(weight.rank() == 4 && weight.dim(3) == 1 && weight.dim(0) == in.dim(1),
          "conv_rows_transposed: weight " + shape_string(weight.shape()) + " does not fit input " +
              shape_string(in.shape()));
  const std::size_t batch = in.dim(0), cin = in.dim(1), time = in.dim(3);
  const std::size_t cout = weight.dim(1), rows = weight.dim(2);
  require(bias.size() == cout, "conv_rows_transposed: bias size mismatch");
  Tensor out({batch, cout, rows, time});
  ConstMatrixMap wm(weight.data(), static_cast<Eigen::Index>(cin), static_cast<Eigen::Index>(cout * rows));
  for (std::size_t b = 0; b < batch; ++b) {
    ConstMatrixMap x(in.data() + b * cin * time, static_cast<Eigen::Index>(cin), static_cast<Eigen::Index>(time));
    MatrixMap y(out.data() + b * cout * rows * time, static_cast<Eigen::Index>(cout * rows),
                static_cast<Eigen::Index>(time));
    y.noalias() = wm.transpose() * x;
    for (std::size_t o = 0; o < cout; ++o) y.middleRows(static_cast<Eigen::Index>(o * rows), static_cast<Eigen::Index>(rows)).array() += bias[o];
  }
  return out;
}

ConvGrads conv_rows_transposed_backward(const Tensor& in, const Tensor& weight, const Tensor& d_out,
                                        bool need_input) {
  const std::size_t batch = in.dim(0), cin = in.dim(1), time = in.dim(3);
  const std::size_t cout = weight.dim(1), rows = weight.dim(2);
  require(d_out.shape() == Shape({batch, cout, rows, time}), "conv_rows_transposed_backward: d_out shape");
  ConvGrads g{Tensor(weight.shape()), Tensor({cout}), need_input ? Tensor(in.shape()) : Tensor()};
  ConstMatrixMap wm(weight.data(), static_cast<Eigen::Index>(cin), static_cast<Eigen::Index>(cout * rows));
  MatrixMap dwm(g.d_weight.data(), static_cast<Eigen::Index>(cin), static_cast<Eigen::Index>(cout * rows));
  for (std::size_t b = 0; b < batch; ++b) {
    ConstMatrixMap x(in.data() + b * cin * time, static_cast<Eigen::Index>(cin), static_cast<Eigen::Index>(time));
    ConstMatrixMap go(d_out.data() + b * cout * rows * time, static_cast<Eigen::Index>(cout * rows),
                      static_cast<Eigen::Index>(time));
    dwm.noalias() += x * go.transpose();
    for (std::size_t o = 0; o < cout; ++o) {
      g.d_bias[o] += go.middleRows(static_cast<Eigen::Index>(o * rows), static_cast<Eigen::Index>(rows)).sum();
    }
    if (need_input) {
      MatrixMap gi(g.d_input.data() + b * cin * time, static_cast<Eigen::Index>(cin), static_cast<Eigen::Index>(time));
      gi.noalias() = wm * go;
    }
  }
  return g;
}

// ---------------------------------------------------------------------------

Tensor batchnorm_forward(const Tensor& in, const Tensor& gamma, const Tensor& beta, const Tensor& running_mean,
                         const Tensor& running_var, bool training, double eps, BatchNormCache& cache) {
  require(in.rank() == 4, "batchnorm: expected NCHW input");
  const std::size_t batch = in.dim(0), maps = in.dim(1), plane = in.dim(2) * in.dim(3);
  require(gamma.size() == maps && beta.size() == maps, "batchnorm: parameter size mismatch");
  cache.training = training;
  cache.count = batch * plane;
  cache.inv_std.assign(maps, 0.0);
  cache.batch_mean.assign(maps, 0.0);
  cache.batch_var.assign(maps, 0.0);
  cache.x_hat = Tensor(in.shape());
  Tensor out(in.shape());
  for (std::size_t m = 0; m < maps; ++m) {
    double mean = 0.0, var = 0.0;
    if (training) {
      for (std::size_t b = 0; b < batch; ++b) {
        const double* x = in.data() + (b * maps + m) * plane;
        for (std::size_t j = 0; j < plane; ++j) mean += x[j];
      }
      mean /= static_cast<double>(cache.count);
      for (std::size_t b = 0; b < batch; ++b) {
        const double* x = in.data() + (b * maps + m) * plane;
        for (std::size_t j = 0; j < plane; ++j) var += (x[j] - mean) * (x[j] - mean);
      }
      var /= static_cast<double>(cache.count);
    } else {
      mean = running_mean[m];
      var = running_var[m];
    }
    cache.batch_mean[m] = mean;
    cache.batch_var[m] = var;
    const double inv = 1.0 / std::sqrt(var + eps);
    cache.inv_std[m] = inv;
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t off = (b * maps + m) * plane;
      for (std::size_t j = 0; j < plane; ++j) {
        const double xh = (in[off + j] - mean) * inv;
        cache.x_hat[off + j] = xh;
        out[off + j] = gamma[m] * xh + beta[m];
      }
    }
  }
  return out;
}

BatchNormGrads batchnorm_backward(const BatchNormCache& cache, const Tensor& gamma, const Tensor& d_out) {
  require(d_out.shape() == cache.x_hat.shape(), "batchnorm_backward: d_out shape");
  const std::size_t batch = d_out.dim(0), maps = d_out.dim(1), plane = d_out.dim(2) * d_out.dim(3);
  BatchNormGrads g{Tensor(d_out.shape()), Tensor({maps}), Tensor({maps})};
  const double n = static_cast<double>(cache.count);
  for (std::size_t m = 0; m < maps; ++m) {
    double sum_dy = 0.0, sum_dy_xh = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t off = (b * maps + m) * plane;
      for (std::size_t j = 0; j < plane; ++j) {
        sum_dy += d_out[off + j];
        sum_dy_xh += d_out[off + j] * cache.x_hat[off + j];
      }
    }
    g.d_beta[m] = sum_dy;
    g.d_gamma[m] = sum_dy_xh;
    const double scale = gamma[m] * cache.inv_std[m];
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t off = (b * maps + m) * plane;
      for (std::size_t j = 0; j < plane; ++j) {
        if (cache.training) {
          g.d_input[off + j] = scale * (d_out[off + j] - sum_dy / n - cache.x_hat[off + j] * sum_dy_xh / n);
        } else {
          g.d_input[off + j] = scale * d_out[off + j];
        }
      }
    }
  }
  return g;
}

void batchnorm_update_running(const BatchNormCache& cache, double momentum, Tensor& running_mean,
                              Tensor& running_var) {
  if (!cache.training) return;
  const double n = static_cast<double>(cache.count);
  const double unbias = n > 1 ? n / (n - 1.0) : 1.0;
  for (std::size_t m = 0; m < running_mean.size(); ++m) {
    running_mean[m] = (1.0 - momentum) * running_mean[m] + momentum * cache.batch_mean[m];
    running_var[m] = (1.0 - momentum) * running_var[m] + momentum * cache.batch_var[m] * unbias;
  }
}

// ---------------------------------------------------------------------------

Tensor max_pool_time(const Tensor& in, std::size_t width, PoolIndices& indices) {
  require(in.rank() == 4 && width >= 1, "max_pool_time: expected NCHW input");
  const std::size_t time = in.dim(3);
  require(time % width == 0, "max_pool_time: width " + std::to_string(width) + " does not divide length " +
                                 std::to_string(time));
  const std::size_t lines = in.dim(0) * in.dim(1) * in.dim(2);
  const std::size_t out_t = time / width;
  Tensor out({in.dim(0), in.dim(1), in.dim(2), out_t});
  indices.input_shape = in.shape();
  indices.width = width;
  indices.argmax.assign(out.size(), 0);
  for (std::size_t l = 0; l < lines; ++l) {
    const double* x = in.data() + l * time;
    for (std::size_t j = 0; j < out_t; ++j) {
      std::size_t best = j * width;
      for (std::size_t t = j * width + 1; t < (j + 1) * width; ++t) {
        if (x[t] > x[best]) best = t;
      }
      out[l * out_t + j] = x[best];
      indices.argmax[l * out_t + j] = static_cast<std::uint32_t>(best);
    }
  }
  return out;
}

Tensor max_pool_time_backward(const PoolIndices& indices, const Tensor& d_out) {
  return max_unpool_time(d_out, indices);
}

Tensor max_unpool_time(const Tensor& in, const PoolIndices& indices) {
  const Shape& full = indices.input_shape;
  require(full.size() == 4 && indices.width >= 1, "max_unpool_time: indices carry no pooling record");
  const Shape pooled{full[0], full[1], full[2], full[3] / indices.width};
  require(in.shape() == pooled, "max_unpool_time: input " + shape_string(in.shape()) +
                                    " does not match pooling record " + shape_string(pooled));
  require(indices.argmax.size() == in.size(), "max_unpool_time: index count mismatch");
  Tensor out(full);
  const std::size_t time = full[3], out_t = pooled[3];
  const std::size_t lines = full[0] * full[1] * full[2];
  for (std::size_t l = 0; l < lines; ++l) {
    for (std::size_t j = 0; j < out_t; ++j) {
      const std::size_t idx = indices.argmax[l * out_t + j];
      if (idx < j * indices.width || idx >= (j + 1) * indices.width) {
        throw std::invalid_argument("max_unpool_time: stale index " + std::to_string(idx) + " outside window " +
                                    std::to_string(j));
      }
      out[l * time + idx] = in[l * out_t + j];
    }
  }
  return out;
}

Tensor max_unpool_time_backward(const PoolIndices& indices, const Tensor& d_out) {
  require(d_out.shape() == indices.input_shape, "max_unpool_time_backward: d_out shape");
  const Shape& full = indices.input_shape;
  const std::size_t time = full[3], out_t = time / indices.width;
  Tensor g({full[0], full[1], full[2], out_t});
  for (std::size_t i = 0; i < g.size(); ++i) {
    g[i] = d_out[(i / out_t) * time + indices.argmax[i]];
  }
  return g;
}

// ---------------------------------------------------------------------------

Tensor dropout_mask(const Shape& shape, double rate, std::uint64_t seed) {
  require(rate >= 0.0 && rate < 1.0, "dropout: rate must be in [0, 1)");
  Tensor mask(shape);
  Rng rng(seed);
  const double keep = 1.0 / (1.0 - rate);
  for (auto& v : mask.storage()) v = rng.bernoulli(rate) ? 0.0 : keep;
  return mask;
}

Tensor multiply(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), "multiply: shape mismatch");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

// ---------------------------------------------------------------------------

Tensor linear(const Tensor& in, const Tensor& weight, const Tensor& bias) {
  require(weight.rank() == 2 && in.rank() >= 1 && in.shape().back() == weight.dim(1),
          "linear: input " + shape_string(in.shape()) + " does not fit weight " + shape_string(weight.shape()));
  const std::size_t n_in = weight.dim(1), n_out = weight.dim(0);
  require(bias.size() == n_out, "linear: bias size mismatch");
  const std::size_t rows = in.size() / n_in;
  Shape out_shape = in.shape();
  out_shape.back() = n_out;
  Tensor out(out_shape);
  ConstMatrixMap x(in.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(n_in));
  ConstMatrixMap w(weight.data(), static_cast<Eigen::Index>(n_out), static_cast<Eigen::Index>(n_in));
  MatrixMap y(out.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(n_out));
  y.noalias() = x * w.transpose();
  y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias.data(), static_cast<Eigen::Index>(n_out));
  return out;
}

LinearGrads linear_backward(const Tensor& in, const Tensor& weight, const Tensor& d_out) {
  const std::size_t n_in = weight.dim(1), n_out = weight.dim(0);
  const std::size_t rows = in.size() / n_in;
  require(d_out.size() == rows * n_out, "linear_backward: d_out shape");
  LinearGrads g{Tensor(weight.shape()), Tensor({n_out}), Tensor(in.shape())};
  ConstMatrixMap x(in.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(n_in));
  ConstMatrixMap w(weight.data(), static_cast<Eigen::Index>(n_out), static_cast<Eigen::Index>(n_in));
  ConstMatrixMap go(d_out.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(n_out));
  g.d_weight.matrix(n_out, n_in).noalias() = go.transpose() * x;
  Eigen::Map<Eigen::RowVectorXd>(g.d_bias.data(), static_cast<Eigen::Index>(n_out)) = go.colwise().sum();
  g.d_input.matrix(rows, n_in).noalias() = go * w;
  return g;
}

Tensor relu(const Tensor& in) {
  Tensor out(in.shape());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
  return out;
}

Tensor relu_backward(const Tensor& pre_activation, const Tensor& d_out) {
  Tensor g(d_out.shape());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = pre_activation[i] > 0.0 ? d_out[i] : 0.0;
  return g;
}

Tensor maps_to_sequence(const Tensor& in) {
  require(in.rank() == 4 && in.dim(2) == 1, "maps_to_sequence: expected [B, maps, 1, M]");
  const std::size_t batch = in.dim(0), maps = in.dim(1), steps = in.dim(3);
  Tensor out({batch, steps, maps});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < maps; ++c)
      for (std::size_t t = 0; t < steps; ++t) out[(b * steps + t) * maps + c] = in[(b * maps + c) * steps + t];
  return out;
}

Tensor sequence_to_maps(const Tensor& in) {
  require(in.rank() == 3, "sequence_to_maps: expected [B, M, maps]");
  const std::size_t batch = in.dim(0), steps = in.dim(1), maps = in.dim(2);
  Tensor out({batch, maps, 1, steps});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < maps; ++c)
      for (std::size_t t = 0; t < steps; ++t) out[(b * maps + c) * steps + t] = in[(b * steps + t) * maps + c];
  return out;
}

// ---------------------------------------------------------------------------

Tensor gru_forward(const Tensor& x, const GruWeights& w, bool reverse, GruCache& cache) {
  require(x.rank() == 3, "gru: expected [B, M, in]");
  const std::size_t batch = x.dim(0), steps = x.dim(1), n_in = x.dim(2);
  const std::size_t hidden = w.w_hh.dim(1);
  require(w.w_ih.shape() == Shape({3 * hidden, n_in}) && w.w_hh.shape() == Shape({3 * hidden, hidden}) &&
              w.b_ih.size() == 3 * hidden && w.b_hh.size() == 3 * hidden,
          "gru: weight shapes do not match input width " + std::to_string(n_in));
  const auto B = static_cast<Eigen::Index>(batch);
  const auto H = static_cast<Eigen::Index>(hidden);
  cache.reverse = reverse;
  cache.x = x;
  cache.h_prev = Tensor({batch, steps, hidden});
  cache.r = Tensor({batch, steps, hidden});
  cache.z = Tensor({batch, steps, hidden});
  cache.n = Tensor({batch, steps, hidden});
  cache.hn = Tensor({batch, steps, hidden});
  Tensor out({batch, steps, hidden});

  ConstMatrixMap wih(w.w_ih.data(), 3 * H, static_cast<Eigen::Index>(n_in));
  ConstMatrixMap whh(w.w_hh.data(), 3 * H, H);
  Eigen::Map<const Eigen::RowVectorXd> bih(w.b_ih.data(), 3 * H);
  Eigen::Map<const Eigen::RowVectorXd> bhh(w.b_hh.data(), 3 * H);
  RowMatrix h = RowMatrix::Zero(B, H);
  RowMatrix gi(B, 3 * H), gh(B, 3 * H);
  const Eigen::OuterStride<> seq_in(static_cast<Eigen::Index>(steps * n_in));
  const Eigen::OuterStride<> seq_h(static_cast<Eigen::Index>(steps * hidden));

  for (std::size_t s = 0; s < steps; ++s) {
    const std::size_t t = reverse ? steps - 1 - s : s;
    ConstStridedMap xt(x.data() + t * n_in, B, static_cast<Eigen::Index>(n_in), seq_in);
    gi.noalias() = xt * wih.transpose();
    gi.rowwise() += bih;
    gh.noalias() = h * whh.transpose();
    gh.rowwise() += bhh;
    StridedMap hp(cache.h_prev.data() + t * hidden, B, H, seq_h);
    StridedMap r(cache.r.data() + t * hidden, B, H, seq_h);
    StridedMap z(cache.z.data() + t * hidden, B, H, seq_h);
    StridedMap n(cache.n.data() + t * hidden, B, H, seq_h);
    StridedMap hn(cache.hn.data() + t * hidden, B, H, seq_h);
    StridedMap ho(out.data() + t * hidden, B, H, seq_h);
    hp = h;
    for (Eigen::Index b = 0; b < B; ++b) {
      for (Eigen::Index j = 0; j < H; ++j) {
        const double rv = sigmoid(gi(b, j) + gh(b, j));
        const double zv = sigmoid(gi(b, H + j) + gh(b, H + j));
        const double hnv = gh(b, 2 * H + j);
        const double nv = std::tanh(gi(b, 2 * H + j) + rv * hnv);
        r(b, j) = rv;
        z(b, j) = zv;
        hn(b, j) = hnv;
        n(b, j) = nv;
        ho(b, j) = (1.0 - zv) * nv + zv * h(b, j);
      }
    }
    h = ho;
  }
  return out;
}

GruGrads gru_backward(const GruCache& cache, const GruWeights& w, const Tensor& d_out) {
  const std::size_t batch = cache.x.dim(0), steps = cache.x.dim(1), n_in = cache.x.dim(2);
  const std::size_t hidden = w.w_hh.dim(1);
  require(d_out.shape() == Shape({batch, steps, hidden}), "gru_backward: d_out shape");
  const auto B = static_cast<Eigen::Index>(batch);
  const auto H = static_cast<Eigen::Index>(hidden);
  GruGrads g{Tensor(cache.x.shape()), Tensor(w.w_ih.shape()), Tensor(w.w_hh.shape()), Tensor(w.b_ih.shape()),
             Tensor(w.b_hh.shape())};
  ConstMatrixMap wih(w.w_ih.data(), 3 * H, static_cast<Eigen::Index>(n_in));
  ConstMatrixMap whh(w.w_hh.data(), 3 * H, H);
  MatrixMap dwih(g.d_w_ih.data(), 3 * H, static_cast<Eigen::Index>(n_in));
  MatrixMap dwhh(g.d_w_hh.data(), 3 * H, H);
  Eigen::Map<Eigen::RowVectorXd> dbih(g.d_b_ih.data(), 3 * H);
  Eigen::Map<Eigen::RowVectorXd> dbhh(g.d_b_hh.data(), 3 * H);
  const Eigen::OuterStride<> seq_in(static_cast<Eigen::Index>(steps * n_in));
  const Eigen::OuterStride<> seq_h(static_cast<Eigen::Index>(steps * hidden));

  RowMatrix dh_next = RowMatrix::Zero(B, H);
  RowMatrix dgi(B, 3 * H), dgh(B, 3 * H);
  for (std::size_t s = steps; s-- > 0;) {
    const std::size_t t = cache.reverse ? steps - 1 - s : s;
    ConstStridedMap xt(cache.x.data() + t * n_in, B, static_cast<Eigen::Index>(n_in), seq_in);
    ConstStridedMap hp(cache.h_prev.data() + t * hidden, B, H, seq_h);
    ConstStridedMap r(cache.r.data() + t * hidden, B, H, seq_h);
    ConstStridedMap z(cache.z.data() + t * hidden, B, H, seq_h);
    ConstStridedMap n(cache.n.data() + t * hidden, B, H, seq_h);
    ConstStridedMap hn(cache.hn.data() + t * hidden, B, H, seq_h);
    ConstStridedMap go(d_out.data() + t * hidden, B, H, seq_h);
    RowMatrix dh_prev(B, H);
    for (Eigen::Index b = 0; b < B; ++b) {
      for (Eigen::Index j = 0; j < H; ++j) {
        const double dh = go(b, j) + dh_next(b, j);
        const double zv = z(b, j), nv = n(b, j), rv = r(b, j);
        const double dn = dh * (1.0 - zv);
        const double dz = dh * (hp(b, j) - nv);
        const double dan = dn * (1.0 - nv * nv);
        const double dr = dan * hn(b, j);
        const double daz = dz * zv * (1.0 - zv);
        const double dar = dr * rv * (1.0 - rv);
        dgi(b, j) = dar;
        dgi(b, H + j) = daz;
        dgi(b, 2 * H + j) = dan;
        dgh(b, j) = dar;
        dgh(b, H + j) = daz;
        dgh(b, 2 * H + j) = dan * rv;
        dh_prev(b, j) = dh * zv;
      }
    }
    dwih.noalias() += dgi.transpose() * xt;
    dbih += dgi.colwise().sum();
    dwhh.noalias() += dgh.transpose() * hp;
    dbhh += dgh.colwise().sum();
    StridedMap dx(g.d_x.data() + t * n_in, B, static_cast<Eigen::Index>(n_in), seq_in);
    dx.noalias() = dgi * wih;
    dh_prev.noalias() += dgh * whh;
    dh_next = dh_prev;
  }
  return g;
}

Tensor concat_features(const Tensor& a, const Tensor& b) {
  require(a.rank() == 3 && a.shape() == b.shape(), "concat_features: shape mismatch");
  const std::size_t rows = a.dim(0) * a.dim(1), h = a.dim(2);
  Tensor out({a.dim(0), a.dim(1), 2 * h});
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < h; ++j) {
      out[i * 2 * h + j] = a[i * h + j];
      out[i * 2 * h + h + j] = b[i * h + j];
    }
  }
  return out;
}

void split_features(const Tensor& ab, Tensor& a, Tensor& b) {
  require(ab.rank() == 3 && ab.dim(2) % 2 == 0, "split_features: odd feature width");
  const std::size_t rows = ab.dim(0) * ab.dim(1), h = ab.dim(2) / 2;
  a = Tensor({ab.dim(0), ab.dim(1), h});
  b = Tensor({ab.dim(0), ab.dim(1), h});
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < h; ++j) {
      a[i * h + j] = ab[i * 2 * h + j];
      b[i * h + j] = ab[i * 2 * h + h + j];
    }
  }
}

}  // namespace nssi::layers
