#include "rldn/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "rldn/errors.hpp"

namespace rldn::ops {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

using BackwardFn = std::function<void(detail::Node&)>;

// Wraps a computed value into a tensor; attaches history only if needed.
Tensor make_result(Shape shape, std::vector<double> values,
                   std::vector<std::shared_ptr<detail::Node>> parents, BackwardFn fn) {
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  if (grad_enabled()) {
    bool any = std::any_of(parents.begin(), parents.end(),
                           [](const auto& p) { return p && p->requires_grad; });
    if (any) {
      node->requires_grad = true;
      node->parents = std::move(parents);
      node->backward_fn = std::move(fn);
    }
  }
  return Tensor::from_node(std::move(node));
}

// Gradient buffer of parent i, or nullptr if it does not take gradients.
double* grad_of(detail::Node& self, std::size_t i) {
  detail::Node& p = *self.parents[i];
  return p.requires_grad ? p.ensure_grad().data() : nullptr;
}

void require_defined(const Tensor& t, const char* what) {
  if (!t.defined()) throw UsageError(std::string(what) + ": undefined tensor");
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  require_defined(a, what);
  require_defined(b, what);
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(what) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
}

template <typename F, typename G>
Tensor unary(const Tensor& a, const char* what, F forward, G derivative) {
  require_defined(a, what);
  const auto& x = a.values();
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = forward(x[i]);
  return make_result(a.shape(), std::move(y), {a.node()},
                     [derivative](detail::Node& self) {
                       double* gx = grad_of(self, 0);
                       if (!gx) return;
                       const auto& x = self.parents[0]->data;
                       for (std::size_t i = 0; i < x.size(); ++i) {
                         gx[i] += self.grad[i] * derivative(x[i], self.data[i]);
                       }
                     });
}

struct ConvGeometry {
  std::size_t channels, height, width;  // image side
  std::size_t kernel, stride, padding;
  std::size_t out_h, out_w;             // patch grid side
};

// [C, H, W] -> [C*k*k, out_h*out_w]
void im2col(const double* image, const ConvGeometry& g, double* col) {
  const std::size_t k = g.kernel;
  const std::size_t cols = g.out_h * g.out_w;
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        double* row = col + ((c * k + ki) * k + kj) * cols;
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const long ih = static_cast<long>(oh * g.stride + ki) - static_cast<long>(g.padding);
          double* dst = row + oh * g.out_w;
          if (ih < 0 || ih >= static_cast<long>(g.height)) {
            std::fill(dst, dst + g.out_w, 0.0);
            continue;
          }
          const double* src = image + (c * g.height + ih) * g.width;
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const long iw = static_cast<long>(ow * g.stride + kj) - static_cast<long>(g.padding);
            dst[ow] = (iw < 0 || iw >= static_cast<long>(g.width)) ? 0.0 : src[iw];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: accumulates patches back into the image.
void col2im(const double* col, const ConvGeometry& g, double* image) {
  const std::size_t k = g.kernel;
  const std::size_t cols = g.out_h * g.out_w;
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        const double* row = col + ((c * k + ki) * k + kj) * cols;
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const long ih = static_cast<long>(oh * g.stride + ki) - static_cast<long>(g.padding);
          if (ih < 0 || ih >= static_cast<long>(g.height)) continue;
          double* dst = image + (c * g.height + ih) * g.width;
          const double* src = row + oh * g.out_w;
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const long iw = static_cast<long>(ow * g.stride + kj) - static_cast<long>(g.padding);
            if (iw >= 0 && iw < static_cast<long>(g.width)) dst[iw] += src[ow];
          }
        }
      }
    }
  }
}

void check_conv_args(int stride, int padding, const char* what) {
  if (stride <= 0) throw ArgumentError(std::string(what) + ": stride must be positive");
  if (padding < 0) throw ArgumentError(std::string(what) + ": padding must be nonnegative");
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> y(a.numel());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a[i] + b[i];
  return make_result(a.shape(), std::move(y), {a.node(), b.node()}, [](detail::Node& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      if (double* g = grad_of(self, p)) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
      }
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> y(a.numel());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a[i] - b[i];
  return make_result(a.shape(), std::move(y), {a.node(), b.node()}, [](detail::Node& self) {
    if (double* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
    if (double* g = grad_of(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> y(a.numel());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a[i] * b[i];
  return make_result(a.shape(), std::move(y), {a.node(), b.node()}, [](detail::Node& self) {
    const auto& av = self.parents[0]->data;
    const auto& bv = self.parents[1]->data;
    if (double* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * bv[i];
    }
    if (double* g = grad_of(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * av[i];
    }
  });
}

Tensor minimum(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "minimum");
  std::vector<double> y(a.numel());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::min(a[i], b[i]);
  return make_result(a.shape(), std::move(y), {a.node(), b.node()}, [](detail::Node& self) {
    const auto& av = self.parents[0]->data;
    const auto& bv = self.parents[1]->data;
    double* ga = grad_of(self, 0);
    double* gb = grad_of(self, 1);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      // ties route to the first argument
      if (av[i] <= bv[i]) {
        if (ga) ga[i] += self.grad[i];
      } else if (gb) {
        gb[i] += self.grad[i];
      }
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  return unary(
      a, "scale", [factor](double x) { return x * factor; },
      [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double offset) {
  return unary(
      a, "add_scalar", [offset](double x) { return x + offset; },
      [](double, double) { return 1.0; });
}

Tensor exp(const Tensor& a) {
  return unary(
      a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  return unary(
      a, "log", [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor square(const Tensor& a) {
  return unary(
      a, "square", [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor relu(const Tensor& a) {
  return unary(
      a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  if (!(lo <= hi)) throw ArgumentError("clamp: lo must not exceed hi");
  return unary(
      a, "clamp",
      [lo, hi](double x) {
        if (!(x >= lo)) return lo;  // also catches NaN
        return x > hi ? hi : x;
      },
      [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Tensor sum(const Tensor& a) {
  require_defined(a, "sum");
  double total = 0.0;
  for (double v : a.data()) total += v;
  return make_result({1}, {total}, {a.node()}, [](detail::Node& self) {
    if (double* g = grad_of(self, 0)) {
      const std::size_t n = self.parents[0]->data.size();
      for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[0];
    }
  });
}

Tensor mean(const Tensor& a) {
  require_defined(a, "mean");
  double total = 0.0;
  for (double v : a.data()) total += v;
  const double n = static_cast<double>(a.numel());
  return make_result({1}, {total / n}, {a.node()}, [n](detail::Node& self) {
    if (double* g = grad_of(self, 0)) {
      const double share = self.grad[0] / n;
      for (std::size_t i = 0; i < self.parents[0]->data.size(); ++i) g[i] += share;
    }
  });
}

Tensor sum_rows(const Tensor& a) {
  require_defined(a, "sum_rows");
  if (a.dim() != 2) throw DimensionError("sum_rows: expected [N, M], got " + shape_str(a.shape()));
  const std::size_t rows = a.size(0), cols = a.size(1);
  std::vector<double> y(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) y[r] += a[r * cols + c];
  }
  return make_result({rows}, std::move(y), {a.node()}, [rows, cols](detail::Node& self) {
    if (double* g = grad_of(self, 0)) {
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) g[r * cols + c] += self.grad[r];
      }
    }
  });
}

Tensor gather_rows(const Tensor& a, std::span<const int> index) {
  require_defined(a, "gather_rows");
  if (a.dim() != 2 || a.size(0) != index.size()) {
    throw DimensionError("gather_rows: expected [N, M] with N indices, got " + shape_str(a.shape()));
  }
  const std::size_t rows = a.size(0), cols = a.size(1);
  std::vector<std::size_t> picks(rows);
  std::vector<double> y(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    if (index[r] < 0 || static_cast<std::size_t>(index[r]) >= cols) {
      throw ArgumentError("gather_rows: index out of range");
    }
    picks[r] = r * cols + static_cast<std::size_t>(index[r]);
    y[r] = a[picks[r]];
  }
  return make_result({rows}, std::move(y), {a.node()}, [picks](detail::Node& self) {
    if (double* g = grad_of(self, 0)) {
      for (std::size_t r = 0; r < picks.size(); ++r) g[picks[r]] += self.grad[r];
    }
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  require_defined(a, "reshape");
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape));
  }
  return make_result(std::move(shape), a.values(), {a.node()}, [](detail::Node& self) {
    if (double* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_defined(x, "linear");
  require_defined(weight, "linear");
  require_defined(bias, "linear");
  if (weight.dim() != 2 || bias.dim() != 1 || bias.size(0) != weight.size(0)) {
    throw DimensionError("linear: weight " + shape_str(weight.shape()) + " / bias " +
                         shape_str(bias.shape()));
  }
  const std::size_t out = weight.size(0), in = weight.size(1);
  const bool batched = x.dim() == 2;
  if (!(x.dim() == 1 || batched) || x.shape().back() != in) {
    throw DimensionError("linear: input " + shape_str(x.shape()) + " vs weight " +
                         shape_str(weight.shape()));
  }
  const std::size_t rows = batched ? x.size(0) : 1;

  std::vector<double> y(rows * out);
  {
    ConstMatMap xm(x.data().data(), rows, in);
    ConstMatMap wm(weight.data().data(), out, in);
    MatMap ym(y.data(), rows, out);
    // Row by row so a sample's output does not depend on its batch.
    for (std::size_t r = 0; r < rows; ++r) {
      ym.row(r).noalias() = (wm * xm.row(r).transpose()).transpose();
      for (std::size_t o = 0; o < out; ++o) ym(r, o) += bias[o];
    }
  }
  Shape shape = batched ? Shape{rows, out} : Shape{out};
  return make_result(std::move(shape), std::move(y), {x.node(), weight.node(), bias.node()},
                     [rows, in, out](detail::Node& self) {
                       ConstMatMap gy(self.grad.data(), rows, out);
                       if (double* gx = grad_of(self, 0)) {
                         ConstMatMap wm(self.parents[1]->data.data(), out, in);
                         MatMap(gx, rows, in).noalias() += gy * wm;
                       }
                       if (double* gw = grad_of(self, 1)) {
                         ConstMatMap xm(self.parents[0]->data.data(), rows, in);
                         MatMap(gw, out, in).noalias() += gy.transpose() * xm;
                       }
                       if (double* gb = grad_of(self, 2)) {
                         for (std::size_t r = 0; r < rows; ++r) {
                           for (std::size_t o = 0; o < out; ++o) gb[o] += gy(r, o);
                         }
                       }
                     });
}

namespace {

std::pair<std::size_t, std::size_t> row_layout(const Tensor& t, const char* what) {
  require_defined(t, what);
  if (t.dim() == 1) return {1, t.size(0)};
  if (t.dim() == 2) return {t.size(0), t.size(1)};
  throw DimensionError(std::string(what) + ": expected [n] or [N, n], got " + shape_str(t.shape()));
}

}  // namespace

Tensor log_softmax(const Tensor& logits) {
  const auto [rows, cols] = row_layout(logits, "log_softmax");
  std::vector<double> y(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = logits.data().data() + r * cols;
    const double top = *std::max_element(x, x + cols);
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) z += std::exp(x[c] - top);
    const double log_z = top + std::log(z);
    for (std::size_t c = 0; c < cols; ++c) y[r * cols + c] = x[c] - log_z;
  }
  return make_result(logits.shape(), std::move(y), {logits.node()},
                     [rows, cols](detail::Node& self) {
                       double* g = grad_of(self, 0);
                       if (!g) return;
                       for (std::size_t r = 0; r < rows; ++r) {
                         const double* gy = self.grad.data() + r * cols;
                         const double* ly = self.data.data() + r * cols;
                         double total = 0.0;
                         for (std::size_t c = 0; c < cols; ++c) total += gy[c];
                         for (std::size_t c = 0; c < cols; ++c) {
                           g[r * cols + c] += gy[c] - std::exp(ly[c]) * total;
                         }
                       }
                     });
}

Tensor softmax(const Tensor& logits) {
  const auto [rows, cols] = row_layout(logits, "softmax");
  constexpr double kFloor = std::numeric_limits<double>::min();
  std::vector<double> y(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = logits.data().data() + r * cols;
    double* p = y.data() + r * cols;
    const double top = *std::max_element(x, x + cols);
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) z += (p[c] = std::exp(x[c] - top));
    for (std::size_t c = 0; c < cols; ++c) p[c] = std::max(p[c] / z, kFloor);
  }
  return make_result(logits.shape(), std::move(y), {logits.node()},
                     [rows, cols](detail::Node& self) {
                       double* g = grad_of(self, 0);
                       if (!g) return;
                       for (std::size_t r = 0; r < rows; ++r) {
                         const double* gy = self.grad.data() + r * cols;
                         const double* p = self.data.data() + r * cols;
                         double dot = 0.0;
                         for (std::size_t c = 0; c < cols; ++c) dot += gy[c] * p[c];
                         for (std::size_t c = 0; c < cols; ++c) {
                           g[r * cols + c] += p[c] * (gy[c] - dot);
                         }
                       }
                     });
}

Tensor mse_loss(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mse_loss");
  const std::size_t n = a.numel();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a[i] - b[i];
    total += d * d;
  }
  return make_result({1}, {total / static_cast<double>(n)}, {a.node(), b.node()},
                     [n](detail::Node& self) {
                       const auto& av = self.parents[0]->data;
                       const auto& bv = self.parents[1]->data;
                       const double k = 2.0 * self.grad[0] / static_cast<double>(n);
                       double* ga = grad_of(self, 0);
                       double* gb = grad_of(self, 1);
                       for (std::size_t i = 0; i < n; ++i) {
                         const double d = k * (av[i] - bv[i]);
                         if (ga) ga[i] += d;
                         if (gb) gb[i] -= d;
                       }
                     });
}

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride,
              int padding) {
  check_conv_args(stride, padding, "conv2d");
  require_defined(input, "conv2d");
  require_defined(weight, "conv2d");
  require_defined(bias, "conv2d");
  if (input.dim() != 3 || weight.dim() != 4 || bias.dim() != 1) {
    throw DimensionError("conv2d: expected input [C,H,W], weight [O,C,k,k], bias [O]");
  }
  const std::size_t c_in = input.size(0), h = input.size(1), w = input.size(2);
  const std::size_t c_out = weight.size(0), k = weight.size(2);
  if (weight.size(1) != c_in || weight.size(3) != k || bias.size(0) != c_out) {
    throw DimensionError("conv2d: input " + shape_str(input.shape()) + ", weight " +
                         shape_str(weight.shape()) + ", bias " + shape_str(bias.shape()));
  }
  if (h + 2 * static_cast<std::size_t>(padding) < k || w + 2 * static_cast<std::size_t>(padding) < k) {
    throw DimensionError("conv2d: kernel larger than padded input");
  }
  ConvGeometry g{c_in, h, w, k, static_cast<std::size_t>(stride), static_cast<std::size_t>(padding),
                 0, 0};
  g.out_h = (h + 2 * g.padding - k) / g.stride + 1;
  g.out_w = (w + 2 * g.padding - k) / g.stride + 1;
  const std::size_t patch = c_in * k * k, cols = g.out_h * g.out_w;

  auto col = std::make_shared<std::vector<double>>(patch * cols);
  im2col(input.data().data(), g, col->data());

  std::vector<double> y(c_out * cols);
  {
    MatMap ym(y.data(), c_out, cols);
    ym.noalias() = ConstMatMap(weight.data().data(), c_out, patch) * ConstMatMap(col->data(), patch, cols);
    for (std::size_t o = 0; o < c_out; ++o) ym.row(o).array() += bias[o];
  }
  return make_result({c_out, g.out_h, g.out_w}, std::move(y),
                     {input.node(), weight.node(), bias.node()},
                     [g, col, c_out, patch, cols](detail::Node& self) {
                       ConstMatMap gy(self.grad.data(), c_out, cols);
                       if (double* gx = grad_of(self, 0)) {
                         RowMat dcol = ConstMatMap(self.parents[1]->data.data(), c_out, patch).transpose() * gy;
                         col2im(dcol.data(), g, gx);
                       }
                       if (double* gw = grad_of(self, 1)) {
                         MatMap(gw, c_out, patch).noalias() += gy * ConstMatMap(col->data(), patch, cols).transpose();
                       }
                       if (double* gb = grad_of(self, 2)) {
                         // Plain loop: Eigen's vectorized sum peels by runtime pointer
                         // alignment, which would make the rounding depend on the heap.
                         for (std::size_t o = 0; o < c_out; ++o) {
                           const double* row = self.grad.data() + o * cols;
                           double s = 0.0;
                           for (std::size_t j = 0; j < cols; ++j) s += row[j];
                           gb[o] += s;
                         }
                       }
                     });
}

Tensor conv_transpose2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride,
                        int padding, int output_padding) {
  check_conv_args(stride, padding, "conv_transpose2d");
  if (output_padding < 0 || output_padding >= stride) {
    throw ArgumentError("conv_transpose2d: output_padding must lie in [0, stride)");
  }
  require_defined(input, "conv_transpose2d");
  require_defined(weight, "conv_transpose2d");
  require_defined(bias, "conv_transpose2d");
  if (input.dim() != 3 || weight.dim() != 4 || bias.dim() != 1) {
    throw DimensionError("conv_transpose2d: expected input [C,H,W], weight [C,O,k,k], bias [O]");
  }
  const std::size_t c_in = input.size(0), h = input.size(1), w = input.size(2);
  const std::size_t c_out = weight.size(1), k = weight.size(2);
  if (weight.size(0) != c_in || weight.size(3) != k || bias.size(0) != c_out) {
    throw DimensionError("conv_transpose2d: input " + shape_str(input.shape()) + ", weight " +
                         shape_str(weight.shape()) + ", bias " + shape_str(bias.shape()));
  }
  const long out_h = static_cast<long>((h - 1) * stride + k + output_padding) - 2L * padding;
  const long out_w = static_cast<long>((w - 1) * stride + k + output_padding) - 2L * padding;
  if (out_h <= 0 || out_w <= 0) throw DimensionError("conv_transpose2d: empty output");

  // The output plays the image role of an ordinary convolution whose patch
  // grid is the input.
  ConvGeometry g{c_out, static_cast<std::size_t>(out_h), static_cast<std::size_t>(out_w), k,
                 static_cast<std::size_t>(stride), static_cast<std::size_t>(padding), h, w};
  const std::size_t patch = c_out * k * k, cols = h * w;

  std::vector<double> y(c_out * g.height * g.width, 0.0);
  {
    RowMat col = ConstMatMap(weight.data().data(), c_in, patch).transpose() *
                 ConstMatMap(input.data().data(), c_in, cols);
    col2im(col.data(), g, y.data());
    const std::size_t plane = g.height * g.width;
    for (std::size_t o = 0; o < c_out; ++o) {
      for (std::size_t i = 0; i < plane; ++i) y[o * plane + i] += bias[o];
    }
  }
  return make_result({c_out, g.height, g.width}, std::move(y),
                     {input.node(), weight.node(), bias.node()},
                     [g, c_in, c_out, patch, cols](detail::Node& self) {
                       std::vector<double> dcol(patch * cols);
                       im2col(self.grad.data(), g, dcol.data());
                       ConstMatMap dcm(dcol.data(), patch, cols);
                       if (double* gx = grad_of(self, 0)) {
                         MatMap(gx, c_in, cols).noalias() +=
                             ConstMatMap(self.parents[1]->data.data(), c_in, patch) * dcm;
                       }
                       if (double* gw = grad_of(self, 1)) {
                         MatMap(gw, c_in, patch).noalias() +=
                             ConstMatMap(self.parents[0]->data.data(), c_in, cols) * dcm.transpose();
                       }
                       if (double* gb = grad_of(self, 2)) {
                         const std::size_t plane = g.height * g.width;
                         for (std::size_t o = 0; o < c_out; ++o) {
                           double s = 0.0;
                           for (std::size_t i = 0; i < plane; ++i) s += self.grad[o * plane + i];
                           gb[o] += s;
                         }
                       }
                     });
}

BatchNormStats BatchNormStats::fresh(std::size_t channels) {
  return BatchNormStats{Tensor::zeros({channels}), Tensor::full({channels}, 1.0), Tensor::zeros({1})};
}

Tensor batchnorm2d(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                   BatchNormStats& stats, NormMode mode) {
  require_defined(input, "batchnorm2d");
  require_defined(gamma, "batchnorm2d");
  require_defined(beta, "batchnorm2d");
  if (input.dim() != 3) throw DimensionError("batchnorm2d: expected [C,H,W], got " + shape_str(input.shape()));
  const std::size_t channels = input.size(0);
  const std::size_t plane = input.size(1) * input.size(2);
  if (gamma.shape() != Shape{channels} || beta.shape() != Shape{channels}) {
    throw DimensionError("batchnorm2d: gamma/beta must be [" + std::to_string(channels) + "]");
  }
  if (!stats.running_mean.defined() || !stats.running_var.defined() ||
      stats.running_mean.shape() != Shape{channels} || stats.running_var.shape() != Shape{channels}) {
    throw UsageError("batchnorm2d: running statistics are not populated for " +
                     std::to_string(channels) + " channels");
  }

  const double eps = stats.eps;
  std::vector<double> xhat(input.numel());
  std::vector<double> inv_std(channels);
  std::vector<double> y(input.numel());
  const double* x = input.data().data();
  if (mode == NormMode::kTrain) {
    auto rm = stats.running_mean.mutable_data();
    auto rv = stats.running_var.mutable_data();
    double momentum = stats.momentum;
    if (stats.batches_tracked.defined()) {
      double& count = stats.batches_tracked.mutable_data()[0];
      momentum = std::max(momentum, 1.0 / (count + 1.0));
      count += 1.0;
    }
    const double n = static_cast<double>(plane);
    for (std::size_t c = 0; c < channels; ++c) {
      const double* xc = x + c * plane;
      double mu = 0.0;
      for (std::size_t i = 0; i < plane; ++i) mu += xc[i];
      mu /= n;
      double var = 0.0;
      for (std::size_t i = 0; i < plane; ++i) var += (xc[i] - mu) * (xc[i] - mu);
      var /= n;
      inv_std[c] = 1.0 / std::sqrt(var + eps);
      for (std::size_t i = 0; i < plane; ++i) xhat[c * plane + i] = (xc[i] - mu) * inv_std[c];
      const double unbiased = plane > 1 ? var * n / (n - 1.0) : var;
      rm[c] = (1.0 - momentum) * rm[c] + momentum * mu;
      rv[c] = (1.0 - momentum) * rv[c] + momentum * unbiased;
    }
  } else {
    for (std::size_t c = 0; c < channels; ++c) {
      inv_std[c] = 1.0 / std::sqrt(stats.running_var[c] + eps);
      const double mu = stats.running_mean[c];
      for (std::size_t i = 0; i < plane; ++i) {
        xhat[c * plane + i] = (x[c * plane + i] - mu) * inv_std[c];
      }
    }
  }
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t i = 0; i < plane; ++i) {
      y[c * plane + i] = gamma[c] * xhat[c * plane + i] + beta[c];
    }
  }

  const bool train = mode == NormMode::kTrain;
  return make_result(
      input.shape(), std::move(y), {input.node(), gamma.node(), beta.node()},
      [xhat = std::move(xhat), inv_std = std::move(inv_std), channels, plane,
       train](detail::Node& self) {
        const auto& gamma_v = self.parents[1]->data;
        double* gx = grad_of(self, 0);
        double* gg = grad_of(self, 1);
        double* gb = grad_of(self, 2);
        const double n = static_cast<double>(plane);
        for (std::size_t c = 0; c < channels; ++c) {
          const double* dy = self.grad.data() + c * plane;
          const double* xh = xhat.data() + c * plane;
          double sum_dy = 0.0, sum_dy_xh = 0.0;
          for (std::size_t i = 0; i < plane; ++i) {
            sum_dy += dy[i];
            sum_dy_xh += dy[i] * xh[i];
          }
          if (gg) gg[c] += sum_dy_xh;
          if (gb) gb[c] += sum_dy;
          if (!gx) continue;
          double* dx = gx + c * plane;
          const double k = gamma_v[c] * inv_std[c];
          if (train) {
            for (std::size_t i = 0; i < plane; ++i) {
              dx[i] += k * (dy[i] - sum_dy / n - xh[i] * sum_dy_xh / n);
            }
          } else {
            for (std::size_t i = 0; i < plane; ++i) dx[i] += k * dy[i];
          }
        }
      });
}

}  // namespace rldn::ops
