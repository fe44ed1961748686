#include "bleg/numerics/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "bleg/error.hpp"

namespace bleg::numerics {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

ConstMap view(const Tensor& t) { return ConstMap(t.data().data(), t.rows(), t.cols()); }
MutMap view(Tensor& t) { return MutMap(t.data().data(), t.rows(), t.cols()); }

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + " expects rank-2 operands, got " + t.shape_string());
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " + b.shape_string());
  }
}

void check_offsets(std::span<const std::size_t> offsets, std::size_t rows, const char* op) {
  if (offsets.size() < 2 || offsets.front() != 0 || offsets.back() != rows) {
    throw DimensionError(std::string(op) + ": segment offsets do not cover " + std::to_string(rows) + " rows");
  }
  for (std::size_t k = 1; k < offsets.size(); ++k) {
    if (offsets[k] <= offsets[k - 1]) throw DimensionError(std::string(op) + ": empty or unordered segment");
  }
}

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

}  // namespace

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions differ, " + a.shape_string() + " x " + b.shape_string());
  }
  Tensor out = Tensor::matrix(a.rows(), b.cols());
  view(out).noalias() = view(a) * view(b);
  return out;
}

Tensor transpose(const Tensor& a) {
  require_rank2(a, "transpose");
  Tensor out = Tensor::matrix(a.cols(), a.rows());
  view(out) = view(a).transpose();
  return out;
}

Var matmul(Var a, Var b) {
  Tensor out = matmul(a.value(), b.value());
  return a.tape().record("matmul", std::move(out), {a, b}, [a, b](Tape& tape, const Tensor& g) {
    if (tape.needs_grad(a)) view(tape.grad_of(a)).noalias() += view(g) * view(b.value()).transpose();
    if (tape.needs_grad(b)) view(tape.grad_of(b)).noalias() += view(a.value()).transpose() * view(g);
  });
}

Var transpose(Var a) {
  return a.tape().record("transpose", transpose(a.value()), {a}, [a](Tape& tape, const Tensor& g) {
    view(tape.grad_of(a)) += view(g).transpose();
  });
}

Var add(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_rank2(av, "add");
  require_rank2(bv, "add");
  const bool broadcast = bv.rows() == 1 && av.rows() != 1 && bv.cols() == av.cols();
  if (!broadcast) require_same_shape(av, bv, "add");
  Tensor out = av;
  if (broadcast) {
    view(out).rowwise() += view(bv).row(0);
  } else {
    out += bv;
  }
  return a.tape().record("add", std::move(out), {a, b}, [a, b, broadcast](Tape& tape, const Tensor& g) {
    if (tape.needs_grad(a)) tape.grad_of(a) += g;
    if (tape.needs_grad(b)) {
      if (broadcast) {
        view(tape.grad_of(b)).row(0) += view(g).colwise().sum();
      } else {
        tape.grad_of(b) += g;
      }
    }
  });
}

Var sub(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  view(out) -= view(b.value());
  return a.tape().record("sub", std::move(out), {a, b}, [a, b](Tape& tape, const Tensor& g) {
    if (tape.needs_grad(a)) tape.grad_of(a) += g;
    if (tape.needs_grad(b)) view(tape.grad_of(b)) -= view(g);
  });
}

Var mul(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  view(out).array() *= view(b.value()).array();
  return a.tape().record("mul", std::move(out), {a, b}, [a, b](Tape& tape, const Tensor& g) {
    if (tape.needs_grad(a)) view(tape.grad_of(a)).array() += view(g).array() * view(b.value()).array();
    if (tape.needs_grad(b)) view(tape.grad_of(b)).array() += view(g).array() * view(a.value()).array();
  });
}

Var scale(Var a, double factor) {
  Tensor out = a.value();
  for (auto& v : out.data()) v *= factor;
  return a.tape().record("scale", std::move(out), {a}, [a, factor](Tape& tape, const Tensor& g) {
    auto dst = tape.grad_of(a).data();
    auto src = g.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += factor * src[i];
  });
}

Var gelu(Var a) {
  Tensor out = a.value();
  for (auto& v : out.data()) v = gelu(v);
  return a.tape().record("gelu", std::move(out), {a}, [a](Tape& tape, const Tensor& g) {
    auto dst = tape.grad_of(a).data();
    auto x = a.value().data();
    auto src = g.data();
    for (std::size_t i = 0; i < dst.size(); ++i) {
      const double cdf = 0.5 * (1.0 + std::erf(x[i] * kInvSqrt2));
      const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x[i] * x[i]);
      dst[i] += src[i] * (cdf + x[i] * pdf);
    }
  });
}

Var softmax_rows(Var a) { return masked_softmax_rows(a, nullptr); }

Var masked_softmax_rows(Var a, std::shared_ptr<const std::vector<std::uint8_t>> allowed) {
  const Tensor& x = a.value();
  require_rank2(x, "softmax");
  const std::size_t rows = x.rows();
  const std::size_t cols = x.cols();
  if (allowed && allowed->size() != rows * cols) throw DimensionError("softmax: mask size mismatch");
  Tensor out = Tensor::matrix(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    double max_v = -INFINITY;
    for (std::size_t c = 0; c < cols; ++c) {
      if (!allowed || (*allowed)[r * cols + c]) max_v = std::max(max_v, x(r, c));
    }
    if (max_v == -INFINITY) throw DegenerateInputError("softmax: row " + std::to_string(r) + " is fully masked");
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      if (!allowed || (*allowed)[r * cols + c]) {
        out(r, c) = std::exp(x(r, c) - max_v);
        total += out(r, c);
      }
    }
    for (std::size_t c = 0; c < cols; ++c) out(r, c) /= total;
  }
  Tape& tape = a.tape();
  const std::size_t out_id = tape.size();
  return tape.record("softmax", std::move(out), {a}, [a, out_id](Tape& t, const Tensor& g) {
    const Tensor& y = t.value(Var(&t, out_id));
    Tensor& dx = t.grad_of(a);
    for (std::size_t r = 0; r < y.rows(); ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < y.cols(); ++c) dot += g(r, c) * y(r, c);
      for (std::size_t c = 0; c < y.cols(); ++c) dx(r, c) += y(r, c) * (g(r, c) - dot);
    }
  });
}

Var softmax_cross_entropy(Var logits, std::span<const std::size_t> targets, std::span<const double> row_weights) {
  const Tensor& z = logits.value();
  require_rank2(z, "softmax_cross_entropy");
  const std::size_t rows = z.rows();
  const std::size_t cols = z.cols();
  if (targets.size() != rows || row_weights.size() != rows) {
    throw DimensionError("softmax_cross_entropy: " + std::to_string(rows) + " rows but " +
                         std::to_string(targets.size()) + " targets / " + std::to_string(row_weights.size()) + " weights");
  }
  Tensor probs = Tensor::matrix(rows, cols);
  double loss = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (row_weights[r] == 0.0) continue;
    if (targets[r] >= cols) throw DimensionError("softmax_cross_entropy: target out of range");
    double max_v = -INFINITY;
    for (std::size_t c = 0; c < cols; ++c) max_v = std::max(max_v, z(r, c));
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      probs(r, c) = std::exp(z(r, c) - max_v);
      total += probs(r, c);
    }
    for (std::size_t c = 0; c < cols; ++c) probs(r, c) /= total;
    loss += row_weights[r] * (max_v + std::log(total) - z(r, targets[r]));
  }
  std::vector<std::size_t> tgt(targets.begin(), targets.end());
  std::vector<double> w(row_weights.begin(), row_weights.end());
  return logits.tape().record(
      "softmax_cross_entropy", Tensor::scalar(loss), {logits},
      [logits, probs = std::move(probs), tgt = std::move(tgt), w = std::move(w)](Tape& tape, const Tensor& g) {
        Tensor& dz = tape.grad_of(logits);
        const double scale_g = g.item();
        for (std::size_t r = 0; r < probs.rows(); ++r) {
          if (w[r] == 0.0) continue;
          const double f = scale_g * w[r];
          for (std::size_t c = 0; c < probs.cols(); ++c) dz(r, c) += f * probs(r, c);
          dz(r, tgt[r]) -= f;
        }
      });
}


Var batch_norm(Var x, Var gamma, Var beta, BatchNormBuffers buffers, Mode mode, BatchNormOptions options) {
  const Tensor& xv = x.value();
  require_rank2(xv, "batch_norm");
  const std::size_t n = xv.rows();
  const std::size_t d = xv.cols();
  if (gamma.value().size() != d || beta.value().size() != d) {
    throw DimensionError("batch_norm: affine parameters must have " + std::to_string(d) + " entries");
  }
  std::vector<double> mean(d, 0.0);
  std::vector<double> inv_std(d, 0.0);
  const bool training = mode == Mode::train;
  if (training) {
    if (n < 2) throw DimensionError("batch_norm: training mode needs a batch dimension >= 2");
    std::vector<double> var(d, 0.0);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < d; ++c) mean[c] += xv(r, c);
    for (auto& m : mean) m /= static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < d; ++c) {
        const double diff = xv(r, c) - mean[c];
        var[c] += diff * diff;
      }
    for (std::size_t c = 0; c < d; ++c) {
      var[c] /= static_cast<double>(n);
      inv_std[c] = 1.0 / std::sqrt(var[c] + options.eps);
    }
    if (buffers.running_mean != nullptr && buffers.running_var != nullptr) {
      auto rm = buffers.running_mean->value.data();
      auto rv = buffers.running_var->value.data();
      const double unbias = static_cast<double>(n) / static_cast<double>(n - 1);
      for (std::size_t c = 0; c < d; ++c) {
        rm[c] = (1.0 - options.momentum) * rm[c] + options.momentum * mean[c];
        rv[c] = (1.0 - options.momentum) * rv[c] + options.momentum * var[c] * unbias;
      }
    }
  } else {
    if (buffers.running_mean == nullptr || buffers.running_var == nullptr) {
      throw ContractError("batch_norm: eval mode requires running statistics");
    }
    auto rm = buffers.running_mean->value.data();
    auto rv = buffers.running_var->value.data();
    for (std::size_t c = 0; c < d; ++c) {
      mean[c] = rm[c];
      inv_std[c] = 1.0 / std::sqrt(rv[c] + options.eps);
    }
  }
  Tensor normalized = Tensor::matrix(n, d);
  Tensor out = Tensor::matrix(n, d);
  const auto g = gamma.value().data();
  const auto b = beta.value().data();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) {
      normalized(r, c) = (xv(r, c) - mean[c]) * inv_std[c];
      out(r, c) = g[c] * normalized(r, c) + b[c];
    }
  return x.tape().record(
      "batch_norm", std::move(out), {x, gamma, beta},
      [x, gamma, beta, training, normalized = std::move(normalized), inv_std = std::move(inv_std)](Tape& tape,
                                                                                                   const Tensor& dy) {
        const std::size_t n = normalized.rows();
        const std::size_t d = normalized.cols();
        std::vector<double> sum_dy(d, 0.0);
        std::vector<double> sum_dy_xhat(d, 0.0);
        for (std::size_t r = 0; r < n; ++r)
          for (std::size_t c = 0; c < d; ++c) {
            sum_dy[c] += dy(r, c);
            sum_dy_xhat[c] += dy(r, c) * normalized(r, c);
          }
        if (tape.needs_grad(gamma)) {
          auto dg = tape.grad_of(gamma).data();
          for (std::size_t c = 0; c < d; ++c) dg[c] += sum_dy_xhat[c];
        }
        if (tape.needs_grad(beta)) {
          auto db = tape.grad_of(beta).data();
          for (std::size_t c = 0; c < d; ++c) db[c] += sum_dy[c];
        }
        if (tape.needs_grad(x)) {
          Tensor& dx = tape.grad_of(x);
          const auto g = gamma.value().data();
          const double inv_n = 1.0 / static_cast<double>(n);
          for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < d; ++c) {
              if (training) {
                dx(r, c) += g[c] * inv_std[c] *
                            (dy(r, c) - inv_n * sum_dy[c] - normalized(r, c) * inv_n * sum_dy_xhat[c]);
              } else {
                dx(r, c) += g[c] * inv_std[c] * dy(r, c);
              }
            }
        }
      });
}

Var layer_norm_rows(Var x, Var gamma, Var beta, double eps) {
  const Tensor& xv = x.value();
  require_rank2(xv, "layer_norm");
  const std::size_t n = xv.rows();
  const std::size_t d = xv.cols();
  if (gamma.value().size() != d || beta.value().size() != d) {
    throw DimensionError("layer_norm: affine parameters must have " + std::to_string(d) + " entries");
  }
  Tensor normalized = Tensor::matrix(n, d);
  Tensor out = Tensor::matrix(n, d);
  std::vector<double> inv_std(n);
  const auto g = gamma.value().data();
  const auto b = beta.value().data();
  for (std::size_t r = 0; r < n; ++r) {
    double mean = 0.0;
    for (std::size_t c = 0; c < d; ++c) mean += xv(r, c);
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t c = 0; c < d; ++c) var += (xv(r, c) - mean) * (xv(r, c) - mean);
    var /= static_cast<double>(d);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < d; ++c) {
      normalized(r, c) = (xv(r, c) - mean) * inv_std[r];
      out(r, c) = g[c] * normalized(r, c) + b[c];
    }
  }
  return x.tape().record(
      "layer_norm", std::move(out), {x, gamma, beta},
      [x, gamma, beta, normalized = std::move(normalized), inv_std = std::move(inv_std)](Tape& tape,
                                                                                         const Tensor& dy) {
        const std::size_t n = normalized.rows();
        const std::size_t d = normalized.cols();
        const auto g = gamma.value().data();
        if (tape.needs_grad(gamma) || tape.needs_grad(beta)) {
          Tensor& dg = tape.grad_of(gamma);
          Tensor& db = tape.grad_of(beta);
          for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < d; ++c) {
              dg[c] += dy(r, c) * normalized(r, c);
              db[c] += dy(r, c);
            }
        }
        if (!tape.needs_grad(x)) return;
        Tensor& dx = tape.grad_of(x);
        const double inv_d = 1.0 / static_cast<double>(d);
        for (std::size_t r = 0; r < n; ++r) {
          double sum_h = 0.0;
          double sum_h_xhat = 0.0;
          for (std::size_t c = 0; c < d; ++c) {
            const double h = dy(r, c) * g[c];
            sum_h += h;
            sum_h_xhat += h * normalized(r, c);
          }
          for (std::size_t c = 0; c < d; ++c) {
            const double h = dy(r, c) * g[c];
            dx(r, c) += inv_std[r] * (h - inv_d * sum_h - normalized(r, c) * inv_d * sum_h_xhat);
          }
        }
      });
}

Var dropout(Var x, double p, Rng* rng, Mode mode) {
  if (p < 0.0 || p >= 1.0) throw ParameterError("dropout probability must lie in [0, 1)");
  if (mode == Mode::eval || p == 0.0) return x;
  if (rng == nullptr) throw ContractError("dropout in training mode needs a generator");
  const double keep_scale = 1.0 / (1.0 - p);
  std::vector<double> mask(x.value().size());
  for (auto& m : mask) m = rng->uniform() < p ? 0.0 : keep_scale;
  Tensor out = x.value();
  auto data = out.data();
  for (std::size_t i = 0; i < data.size(); ++i) data[i] *= mask[i];
  return x.tape().record("dropout", std::move(out), {x}, [x, mask = std::move(mask)](Tape& tape, const Tensor& g) {
    auto dst = tape.grad_of(x).data();
    auto src = g.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i] * mask[i];
  });
}

Var l2_normalize_rows(Var x) {
  const Tensor& xv = x.value();
  require_rank2(xv, "l2_normalize");
  const std::size_t n = xv.rows();
  const std::size_t d = xv.cols();
  std::vector<double> norms(n);
  Tensor out = Tensor::matrix(n, d);
  for (std::size_t r = 0; r < n; ++r) {
    double sq = 0.0;
    for (std::size_t c = 0; c < d; ++c) sq += xv(r, c) * xv(r, c);
    if (sq == 0.0) throw DegenerateInputError("l2_normalize: row " + std::to_string(r) + " is all zero");
    norms[r] = std::sqrt(sq);
    for (std::size_t c = 0; c < d; ++c) out(r, c) = xv(r, c) / norms[r];
  }
  Tape& tape = x.tape();
  const std::size_t out_id = tape.size();
  return tape.record("l2_normalize", std::move(out), {x}, [x, out_id, norms = std::move(norms)](Tape& t, const Tensor& g) {
    const Tensor& y = t.value(Var(&t, out_id));
    Tensor& dx = t.grad_of(x);
    for (std::size_t r = 0; r < y.rows(); ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < y.cols(); ++c) dot += y(r, c) * g(r, c);
      for (std::size_t c = 0; c < y.cols(); ++c) dx(r, c) += (g(r, c) - y(r, c) * dot) / norms[r];
    }
  });
}

Var mean_rows(Var x) {
  const std::size_t offsets[] = {0, x.value().rows()};
  return segment_mean_rows(x, offsets);
}

Var segment_mean_rows(Var x, std::span<const std::size_t> offsets) {
  const Tensor& xv = x.value();
  require_rank2(xv, "segment_mean");
  check_offsets(offsets, xv.rows(), "segment_mean");
  const std::size_t segments = offsets.size() - 1;
  const std::size_t d = xv.cols();
  Tensor out = Tensor::matrix(segments, d);
  for (std::size_t k = 0; k < segments; ++k) {
    const double inv = 1.0 / static_cast<double>(offsets[k + 1] - offsets[k]);
    for (std::size_t r = offsets[k]; r < offsets[k + 1]; ++r)
      for (std::size_t c = 0; c < d; ++c) out(k, c) += xv(r, c);
    for (std::size_t c = 0; c < d; ++c) out(k, c) *= inv;
  }
  std::vector<std::size_t> offs(offsets.begin(), offsets.end());
  return x.tape().record("segment_mean", std::move(out), {x}, [x, offs = std::move(offs)](Tape& tape, const Tensor& g) {
    Tensor& dx = tape.grad_of(x);
    for (std::size_t k = 0; k + 1 < offs.size(); ++k) {
      const double inv = 1.0 / static_cast<double>(offs[k + 1] - offs[k]);
      for (std::size_t r = offs[k]; r < offs[k + 1]; ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) dx(r, c) += g(k, c) * inv;
    }
  });
}

Var sum_all(Var x) {
  double total = 0.0;
  for (double v : x.value().data()) total += v;
  return x.tape().record("sum", Tensor::scalar(total), {x}, [x](Tape& tape, const Tensor& g) {
    const double s = g.item();
    for (auto& v : tape.grad_of(x).data()) v += s;
  });
}

Var mean_all(Var x) { return scale(sum_all(x), 1.0 / static_cast<double>(x.value().size())); }

Var sum_squares(Var x) {
  double total = 0.0;
  for (double v : x.value().data()) total += v * v;
  return x.tape().record("sum_squares", Tensor::scalar(total), {x}, [x](Tape& tape, const Tensor& g) {
    const double s = 2.0 * g.item();
    auto dst = tape.grad_of(x).data();
    auto src = x.value().data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += s * src[i];
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_rows: nothing to concatenate");
  const std::size_t d = parts[0].value().cols();
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_rank2(p.value(), "concat_rows");
    if (p.value().cols() != d) throw DimensionError("concat_rows: column counts differ");
    total += p.value().rows();
  }
  Tensor out = Tensor::matrix(total, d);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const auto src = p.value().data();
    std::copy(src.begin(), src.end(), out.data().begin() + static_cast<std::ptrdiff_t>(offset * d));
    offset += p.value().rows();
  }
  std::vector<Var> parents(parts.begin(), parts.end());
  return parts[0].tape().record("concat_rows", std::move(out), parents, [parents](Tape& tape, const Tensor& g) {
    std::size_t offset = 0;
    const std::size_t d = g.cols();
    for (const auto& p : parents) {
      const std::size_t count = p.value().size();
      if (tape.needs_grad(p)) {
        auto dst = tape.grad_of(p).data();
        for (std::size_t i = 0; i < count; ++i) dst[i] += g.data()[offset * d + i];
      }
      offset += p.value().rows();
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_cols: nothing to concatenate");
  const std::size_t n = parts[0].value().rows();
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_rank2(p.value(), "concat_cols");
    if (p.value().rows() != n) throw DimensionError("concat_cols: row counts differ");
    total += p.value().cols();
  }
  Tensor out = Tensor::matrix(n, total);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const Tensor& v = p.value();
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < v.cols(); ++c) out(r, offset + c) = v(r, c);
    offset += v.cols();
  }
  std::vector<Var> parents(parts.begin(), parts.end());
  return parts[0].tape().record("concat_cols", std::move(out), parents, [parents](Tape& tape, const Tensor& g) {
    std::size_t offset = 0;
    for (const auto& p : parents) {
      const std::size_t w = p.value().cols();
      if (tape.needs_grad(p)) {
        Tensor& dst = tape.grad_of(p);
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < w; ++c) dst(r, c) += g(r, offset + c);
      }
      offset += w;
    }
  });
}

Var slice_rows(Var x, std::size_t begin, std::size_t count) {
  const Tensor& xv = x.value();
  require_rank2(xv, "slice_rows");
  if (count == 0 || begin + count > xv.rows()) throw DimensionError("slice_rows: range out of bounds");
  const std::size_t d = xv.cols();
  std::vector<double> data(xv.data().begin() + static_cast<std::ptrdiff_t>(begin * d),
                           xv.data().begin() + static_cast<std::ptrdiff_t>((begin + count) * d));
  return x.tape().record("slice_rows", Tensor({count, d}, std::move(data)), {x},
                         [x, begin](Tape& tape, const Tensor& g) {
                           auto dst = tape.grad_of(x).data();
                           const std::size_t off = begin * g.cols();
                           for (std::size_t i = 0; i < g.size(); ++i) dst[off + i] += g.data()[i];
                         });
}

Var slice_cols(Var x, std::size_t begin, std::size_t count) {
  const Tensor& xv = x.value();
  require_rank2(xv, "slice_cols");
  if (count == 0 || begin + count > xv.cols()) throw DimensionError("slice_cols: range out of bounds");
  Tensor out = Tensor::matrix(xv.rows(), count);
  for (std::size_t r = 0; r < xv.rows(); ++r)
    for (std::size_t c = 0; c < count; ++c) out(r, c) = xv(r, begin + c);
  return x.tape().record("slice_cols", std::move(out), {x}, [x, begin](Tape& tape, const Tensor& g) {
    Tensor& dst = tape.grad_of(x);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < g.cols(); ++c) dst(r, begin + c) += g(r, c);
  });
}

Var gather_rows(Var table, std::span<const std::size_t> ids) {
  const Tensor& tv = table.value();
  require_rank2(tv, "gather_rows");
  if (ids.empty()) throw DimensionError("gather_rows: no ids");
  const std::size_t d = tv.cols();
  Tensor out = Tensor::matrix(ids.size(), d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= tv.rows()) throw DimensionError("gather_rows: id " + std::to_string(ids[i]) + " out of range");
    const auto src = tv.row_span(ids[i]);
    std::copy(src.begin(), src.end(), out.row_span(i).begin());
  }
  std::vector<std::size_t> idx(ids.begin(), ids.end());
  return table.tape().record("gather_rows", std::move(out), {table}, [table, idx = std::move(idx)](Tape& tape, const Tensor& g) {
    Tensor& dst = tape.grad_of(table);
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t c = 0; c < g.cols(); ++c) dst(idx[i], c) += g(i, c);
  });
}

Var block_propagate(Var x, std::shared_ptr<const std::vector<Tensor>> blocks, std::span<const std::size_t> offsets) {
  const Tensor& xv = x.value();
  require_rank2(xv, "block_propagate");
  check_offsets(offsets, xv.rows(), "block_propagate");
  if (!blocks || blocks->size() + 1 != offsets.size()) throw DimensionError("block_propagate: block count mismatch");
  const std::size_t d = xv.cols();
  Tensor out = Tensor::matrix(xv.rows(), d);
  for (std::size_t k = 0; k < blocks->size(); ++k) {
    const std::size_t n = offsets[k + 1] - offsets[k];
    const Tensor& b = (*blocks)[k];
    if (b.rows() != n || b.cols() != n) throw DimensionError("block_propagate: block " + std::to_string(k) + " has wrong size");
    ConstMap xs(xv.data().data() + offsets[k] * d, static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    MutMap ys(out.data().data() + offsets[k] * d, static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    ys.noalias() = view(b) * xs;
  }
  std::vector<std::size_t> offs(offsets.begin(), offsets.end());
  return x.tape().record("block_propagate", std::move(out), {x},
                         [x, blocks, offs = std::move(offs)](Tape& tape, const Tensor& g) {
                           Tensor& dx = tape.grad_of(x);
                           const std::size_t d = g.cols();
                           for (std::size_t k = 0; k < blocks->size(); ++k) {
                             const auto n = static_cast<Eigen::Index>(offs[k + 1] - offs[k]);
                             ConstMap gs(g.data().data() + offs[k] * d, n, static_cast<Eigen::Index>(d));
                             MutMap dxs(dx.data().data() + offs[k] * d, n, static_cast<Eigen::Index>(d));
                             dxs.noalias() += view((*blocks)[k]).transpose() * gs;
                           }
                         });
}

}  // namespace bleg::numerics
