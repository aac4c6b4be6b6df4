#include <algorithm>
#include <cmath>
#include <numbers>

#include "la2/tensor.hpp"
#include "tensor_internal.hpp"

namespace la2 {

using detail::accumulate;
using detail::make_result;
using detail::Node;

namespace {

using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

ConstMap as_matrix(std::span<const double> v, std::size_t rows, std::size_t cols) {
  return ConstMap(v.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

std::size_t normalize_axis(int axis, std::size_t rank, const char* op) {
  const int r = static_cast<int>(rank);
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) + " invalid for rank " +
                     std::to_string(rank));
  }
  return static_cast<std::size_t>(a);
}

// Maps a flat index of the broadcast output to a flat index of one operand.
struct IndexFn {
  enum class Kind { identity, scalar, modulo, divide, table } kind = Kind::identity;
  std::size_t n = 1;
  std::vector<std::size_t> table;

  std::size_t operator()(std::size_t i) const {
    switch (kind) {
      case Kind::identity: return i;
      case Kind::scalar: return 0;
      case Kind::modulo: return i % n;
      case Kind::divide: return i / n;
      case Kind::table: return table[i];
    }
    return i;
  }
};

bool broadcasts_into(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  const std::size_t off = big.size() - small.size();
  for (std::size_t i = 0; i < small.size(); ++i) {
    if (small[i] != big[off + i] && small[i] != 1) return false;
  }
  return true;
}

IndexFn make_index(const Shape& small, const Shape& big) {
  IndexFn fn;
  if (small == big) return fn;
  if (numel(small) == 1) {
    fn.kind = IndexFn::Kind::scalar;
    return fn;
  }
  // Drop leading ones of the small shape; they do not affect indexing.
  Shape s(small.begin() + static_cast<std::ptrdiff_t>(
                              std::find_if(small.begin(), small.end(), [](std::size_t d) { return d != 1; }) -
                              small.begin()),
          small.end());
  const std::size_t off = big.size() - s.size();
  if (std::equal(s.begin(), s.end(), big.begin() + static_cast<std::ptrdiff_t>(off))) {
    fn.kind = IndexFn::Kind::modulo;
    fn.n = numel(s);
    return fn;
  }
  // Prefix of big followed only by ones: [M, 1] into [M, d].
  std::size_t lead = 0;
  while (lead < small.size() && small[lead] == big[lead] && small.size() == big.size()) ++lead;
  if (small.size() == big.size() &&
      std::all_of(small.begin() + static_cast<std::ptrdiff_t>(lead), small.end(),
                  [](std::size_t d) { return d == 1; })) {
    fn.kind = IndexFn::Kind::divide;
    fn.n = numel(Shape(big.begin() + static_cast<std::ptrdiff_t>(lead), big.end()));
    return fn;
  }
  // General case: odometer over the output shape.
  Shape padded(big.size() - small.size(), 1);
  padded.insert(padded.end(), small.begin(), small.end());
  std::vector<std::size_t> stride(big.size(), 0);
  std::size_t acc = 1;
  for (std::size_t i = big.size(); i-- > 0;) {
    stride[i] = padded[i] == 1 ? 0 : acc;
    acc *= padded[i];
  }
  const std::size_t total = numel(big);
  fn.kind = IndexFn::Kind::table;
  fn.table.resize(total);
  std::vector<std::size_t> counter(big.size(), 0);
  std::size_t cur = 0;
  for (std::size_t i = 0; i < total; ++i) {
    fn.table[i] = cur;
    for (std::size_t ax = big.size(); ax-- > 0;) {
      ++counter[ax];
      cur += stride[ax];
      if (counter[ax] < big[ax]) break;
      cur -= stride[ax] * counter[ax];
      counter[ax] = 0;
    }
  }
  return fn;
}

struct Broadcast {
  Shape out;
  IndexFn a;
  IndexFn b;
};

Broadcast broadcast(const char* op, const Shape& sa, const Shape& sb) {
  Broadcast bc;
  if (broadcasts_into(sb, sa)) {
    bc.out = sa;
  } else if (broadcasts_into(sa, sb)) {
    bc.out = sb;
  } else {
    throw ShapeError(std::string(op) + ": incompatible shapes " + to_string(sa) + " and " + to_string(sb));
  }
  bc.a = make_index(sa, bc.out);
  bc.b = make_index(sb, bc.out);
  return bc;
}

// f(a, b) forward; da(a, b, y) and db(a, b, y) are partial derivatives.
template <class F, class DA, class DB>
Tensor binary(const char* op, const Tensor& a, const Tensor& b, F f, DA da, DB db) {
  auto bc = std::make_shared<Broadcast>(broadcast(op, a.shape(), b.shape()));
  const std::size_t n = numel(bc->out);
  const auto av = a.data();
  const auto bv = b.data();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = f(av[bc->a(i)], bv[bc->b(i)]);
  return make_result(op, bc->out, std::move(out), {a, b}, [bc, da, db](Node& self) {
    Node& na = *self.inputs[0];
    Node& nb = *self.inputs[1];
    const std::size_t n = self.value.size();
    if (na.requires_grad) {
      auto& ga = na.grad_buffer();
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t ia = bc->a(i);
        ga[ia] += self.grad[i] * da(na.value[ia], nb.value[bc->b(i)], self.value[i]);
      }
    }
    if (nb.requires_grad) {
      auto& gb = nb.grad_buffer();
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t ib = bc->b(i);
        gb[ib] += self.grad[i] * db(na.value[bc->a(i)], nb.value[ib], self.value[i]);
      }
    }
  });
}

// f(x) forward; df(x, y) derivative.
template <class F, class DF>
Tensor unary(const char* op, const Tensor& a, F f, DF df) {
  const auto av = a.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
  return make_result(op, a.shape(), std::move(out), {a}, [df](Node& self) {
    Node& in = *self.inputs[0];
    auto& g = in.grad_buffer();
    for (std::size_t i = 0; i < self.value.size(); ++i) g[i] += self.grad[i] * df(in.value[i], self.value[i]);
  });
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

struct AxisSplit {
  std::size_t outer, len, inner;
};

AxisSplit split_axis(const Shape& s, std::size_t axis) {
  AxisSplit sp{1, s[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) sp.outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) sp.inner *= s[i];
  return sp;
}

Shape reduced_shape(const Shape& s, std::size_t axis, bool keepdim) {
  Shape out = s;
  if (keepdim) {
    out[axis] = 1;
  } else {
    out.erase(out.begin() + static_cast<std::ptrdiff_t>(axis));
    if (out.empty()) out.push_back(1);
  }
  return out;
}

Tensor reduce_axis(const char* op, const Tensor& a, int axis, bool keepdim, double factor) {
  if (a.rank() == 0) throw ShapeError(std::string(op) + ": empty shape");
  const std::size_t ax = normalize_axis(axis, a.rank(), op);
  const AxisSplit sp = split_axis(a.shape(), ax);
  const auto av = a.data();
  std::vector<double> out(sp.outer * sp.inner, 0.0);
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t l = 0; l < sp.len; ++l) {
      const double* src = av.data() + (o * sp.len + l) * sp.inner;
      double* dst = out.data() + o * sp.inner;
      for (std::size_t i = 0; i < sp.inner; ++i) dst[i] += src[i];
    }
  }
  if (factor != 1.0) {
    for (double& v : out) v *= factor;
  }
  return make_result(op, reduced_shape(a.shape(), ax, keepdim), std::move(out), {a}, [sp, factor](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t o = 0; o < sp.outer; ++o) {
      for (std::size_t l = 0; l < sp.len; ++l) {
        double* dst = g.data() + (o * sp.len + l) * sp.inner;
        const double* src = self.grad.data() + o * sp.inner;
        for (std::size_t i = 0; i < sp.inner; ++i) dst[i] += factor * src[i];
      }
    }
  });
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 1 || b.rank() != 2) {
    throw ShapeError("matmul: expected [..., k] x [k, n], got " + to_string(a.shape()) + " x " +
                     to_string(b.shape()));
  }
  const std::size_t k = a.shape().back();
  if (k != b.shape()[0]) {
    throw ShapeError("matmul: inner dimensions differ, " + to_string(a.shape()) + " x " + to_string(b.shape()));
  }
  const std::size_t n = b.shape()[1];
  const std::size_t rows = k == 0 ? 0 : a.numel() / k;
  Shape out_shape = a.shape();
  out_shape.back() = n;
  std::vector<double> out(rows * n);
  MutMap(out.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(n)).noalias() =
      as_matrix(a.data(), rows, k) * as_matrix(b.data(), k, n);
  return make_result("matmul", std::move(out_shape), std::move(out), {a, b}, [rows, k, n](Node& self) {
    Node& na = *self.inputs[0];
    Node& nb = *self.inputs[1];
    const ConstMap g = as_matrix(self.grad, rows, n);
    if (na.requires_grad) {
      MutMap(na.grad_buffer().data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(k)).noalias() +=
          g * as_matrix(nb.value, k, n).transpose();
    }
    if (nb.requires_grad) {
      MutMap(nb.grad_buffer().data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(n)).noalias() +=
          as_matrix(na.value, rows, k).transpose() * g;
    }
  });
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw ShapeError("transpose: expected a 2-D tensor, got " + to_string(a.shape()));
  const std::size_t r = a.shape()[0];
  const std::size_t c = a.shape()[1];
  std::vector<double> out(r * c);
  MutMap(out.data(), static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(r)) =
      as_matrix(a.data(), r, c).transpose();
  return make_result("transpose", {c, r}, std::move(out), {a}, [r, c](Node& self) {
    MutMap(self.inputs[0]->grad_buffer().data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) +=
        as_matrix(self.grad, c, r).transpose();
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.numel()) {
    throw ShapeError("reshape: cannot view " + to_string(a.shape()) + " as " + to_string(shape));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  return make_result("reshape", std::move(shape), std::move(out), {a},
                     [](Node& self) { accumulate(*self.inputs[0], self.grad); });
}

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; }, [](double, double, double) { return 1.0; },
      [](double, double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; }, [](double, double, double) { return 1.0; },
      [](double, double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y, double) { return y; },
      [](double x, double, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary(
      "div", a, b, [](double x, double y) { return x / y; }, [](double, double y, double) { return 1.0 / y; },
      [](double, double y, double out) { return -out / y; });
}

Tensor scale(const Tensor& a, double factor) {
  return unary(
      "scale", a, [factor](double x) { return factor * x; }, [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double value) {
  return unary(
      "add_scalar", a, [value](double x) { return x + value; }, [](double, double) { return 1.0; });
}

Tensor neg(const Tensor& a) {
  return unary(
      "neg", a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Tensor abs(const Tensor& a) {
  return unary(
      "abs", a, [](double x) { return std::abs(x); },
      [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

Tensor sqrt(const Tensor& a) {
  return unary(
      "sqrt", a,
      [](double x) {
        if (x < 0) throw NumericError("sqrt: negative input");
        return std::sqrt(x);
      },
      [](double, double y) { return y > 0 ? 0.5 / y : 0.0; });
}

Tensor sigmoid(const Tensor& a) {
  return unary("sigmoid", a, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Tensor gelu(const Tensor& a) {
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  const double inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
  return unary(
      "gelu", a, [](double x) { return 0.5 * x * (1.0 + std::erf(x * inv_sqrt2)); },
      [inv_sqrt_2pi](double x, double) {
        const double cdf = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
        return cdf + x * inv_sqrt_2pi * std::exp(-0.5 * x * x);
      });
}

Tensor safe_denominator(const Tensor& a, double tol) {
  return unary(
      "safe_denominator", a, [tol](double x) { return std::abs(x) < tol ? 1.0 : x; },
      [tol](double x, double) { return std::abs(x) < tol ? 0.0 : 1.0; });
}

Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (double v : a.data()) total += v;
  return make_result("sum", {1}, {total}, {a}, [](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (double& v : g) v += self.grad[0];
  });
}

Tensor sum(const Tensor& a, int axis, bool keepdim) { return reduce_axis("sum_axis", a, axis, keepdim, 1.0); }

Tensor mean(const Tensor& a) {
  if (a.numel() == 0) throw ShapeError("mean: empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor mean(const Tensor& a, int axis, bool keepdim) {
  const std::size_t len = a.dim(axis);
  if (len == 0) throw ShapeError("mean: empty axis");
  return reduce_axis("mean_axis", a, axis, keepdim, 1.0 / static_cast<double>(len));
}

Tensor l1_lastdim(const Tensor& a) {
  if (a.rank() == 0) throw ShapeError("l1_lastdim: empty shape");
  const std::size_t c = a.shape().back();
  const std::size_t rows = c == 0 ? 0 : a.numel() / c;
  const auto av = a.data();
  std::vector<double> out(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < c; ++j) out[r] += std::abs(av[r * c + j]);
  }
  Shape shape = a.shape();
  shape.back() = 1;
  return make_result("l1_lastdim", std::move(shape), std::move(out), {a}, [c, rows](Node& self) {
    Node& in = *self.inputs[0];
    auto& g = in.grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < c; ++j) {
        const double x = in.value[r * c + j];
        g[r * c + j] += self.grad[r] * (x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0));
      }
    }
  });
}

Tensor l2_lastdim(const Tensor& a) {
  if (a.rank() == 0) throw ShapeError("l2_lastdim: empty shape");
  const std::size_t c = a.shape().back();
  const std::size_t rows = c == 0 ? 0 : a.numel() / c;
  const auto av = a.data();
  std::vector<double> out(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += av[r * c + j] * av[r * c + j];
    out[r] = std::sqrt(s);
  }
  Shape shape = a.shape();
  shape.back() = 1;
  return make_result("l2_lastdim", std::move(shape), std::move(out), {a}, [c, rows](Node& self) {
    Node& in = *self.inputs[0];
    auto& g = in.grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      if (self.value[r] == 0.0) continue;
      const double f = self.grad[r] / self.value[r];
      for (std::size_t j = 0; j < c; ++j) g[r * c + j] += f * in.value[r * c + j];
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (x.rank() == 0 || x.shape().back() == 0) throw ShapeError("layer_norm: last axis must be non-empty");
  if (!(eps > 0)) throw std::invalid_argument("layer_norm: eps must be positive");
  const std::size_t c = x.shape().back();
  if (gamma.shape() != Shape{c} || beta.shape() != Shape{c}) {
    throw ShapeError("layer_norm: gamma/beta must have shape [" + std::to_string(c) + "]");
  }
  const std::size_t rows = x.numel() / c;
  const auto xv = x.data();
  const auto gv = gamma.data();
  const auto bv = beta.data();
  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  auto rstd = std::make_shared<std::vector<double>>(rows);
  std::vector<double> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.data() + r * c;
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += row[j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(c);
    const double rs = 1.0 / std::sqrt(var + eps);
    (*rstd)[r] = rs;
    for (std::size_t j = 0; j < c; ++j) {
      const double h = (row[j] - mu) * rs;
      (*xhat)[r * c + j] = h;
      out[r * c + j] = gv[j] * h + bv[j];
    }
  }
  return make_result("layer_norm", x.shape(), std::move(out), {x, gamma, beta}, [c, rows, xhat, rstd](Node& self) {
    Node& nx = *self.inputs[0];
    Node& ng = *self.inputs[1];
    Node& nb = *self.inputs[2];
    const auto& h = *xhat;
    if (ng.requires_grad) {
      auto& gg = ng.grad_buffer();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < c; ++j) gg[j] += self.grad[r * c + j] * h[r * c + j];
    }
    if (nb.requires_grad) {
      auto& gb = nb.grad_buffer();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < c; ++j) gb[j] += self.grad[r * c + j];
    }
    if (nx.requires_grad) {
      auto& gx = nx.grad_buffer();
      const double inv_c = 1.0 / static_cast<double>(c);
      for (std::size_t r = 0; r < rows; ++r) {
        double mean_d = 0.0;
        double mean_dh = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
          const double d = self.grad[r * c + j] * ng.value[j];
          mean_d += d;
          mean_dh += d * h[r * c + j];
        }
        mean_d *= inv_c;
        mean_dh *= inv_c;
        for (std::size_t j = 0; j < c; ++j) {
          const double d = self.grad[r * c + j] * ng.value[j];
          gx[r * c + j] += (*rstd)[r] * (d - mean_d - h[r * c + j] * mean_dh);
        }
      }
    }
  });
}

Tensor softmax_lastdim(const Tensor& x) {
  if (x.rank() == 0 || x.shape().back() == 0) throw ShapeError("softmax_lastdim: last axis must be non-empty");
  const std::size_t k = x.shape().back();
  const std::size_t rows = x.numel() / k;
  const auto xv = x.data();
  std::vector<double> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.data() + r * k;
    const double mx = *std::max_element(row, row + k);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      out[r * k + j] = std::exp(row[j] - mx);
      z += out[r * k + j];
    }
    for (std::size_t j = 0; j < k; ++j) out[r * k + j] /= z;
  }
  return make_result("softmax_lastdim", x.shape(), std::move(out), {x}, [k, rows](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t j = 0; j < k; ++j) dot += self.grad[r * k + j] * self.value[r * k + j];
      for (std::size_t j = 0; j < k; ++j) g[r * k + j] += self.value[r * k + j] * (self.grad[r * k + j] - dot);
    }
  });
}

Tensor concat_lastdim(const Tensor& a, const Tensor& b) {
  if (a.rank() == 0 || a.rank() != b.rank() ||
      !std::equal(a.shape().begin(), a.shape().end() - 1, b.shape().begin())) {
    throw ShapeError("concat_lastdim: leading dimensions differ, " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
  const std::size_t da = a.shape().back();
  const std::size_t db = b.shape().back();
  const std::size_t rows = a.numel() / std::max<std::size_t>(da, 1);
  const std::size_t rows_b = b.numel() / std::max<std::size_t>(db, 1);
  const std::size_t n_rows = da ? rows : rows_b;
  Shape shape = a.shape();
  shape.back() = da + db;
  std::vector<double> out(n_rows * (da + db));
  const auto av = a.data();
  const auto bv = b.data();
  for (std::size_t r = 0; r < n_rows; ++r) {
    std::copy_n(av.data() + r * da, da, out.data() + r * (da + db));
    std::copy_n(bv.data() + r * db, db, out.data() + r * (da + db) + da);
  }
  return make_result("concat_lastdim", std::move(shape), std::move(out), {a, b}, [da, db, n_rows](Node& self) {
    Node& na = *self.inputs[0];
    Node& nb = *self.inputs[1];
    const std::size_t w = da + db;
    if (na.requires_grad) {
      auto& g = na.grad_buffer();
      for (std::size_t r = 0; r < n_rows; ++r)
        for (std::size_t j = 0; j < da; ++j) g[r * da + j] += self.grad[r * w + j];
    }
    if (nb.requires_grad) {
      auto& g = nb.grad_buffer();
      for (std::size_t r = 0; r < n_rows; ++r)
        for (std::size_t j = 0; j < db; ++j) g[r * db + j] += self.grad[r * w + da + j];
    }
  });
}

Tensor slice_lastdim(const Tensor& a, std::size_t start, std::size_t length) {
  if (a.rank() == 0 || start + length > a.shape().back()) {
    throw ShapeError("slice_lastdim: range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                     ") exceeds " + to_string(a.shape()));
  }
  const std::size_t c = a.shape().back();
  const std::size_t rows = c == 0 ? 0 : a.numel() / c;
  Shape shape = a.shape();
  shape.back() = length;
  std::vector<double> out(rows * length);
  const auto av = a.data();
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(av.data() + r * c + start, length, out.data() + r * length);
  return make_result("slice_lastdim", std::move(shape), std::move(out), {a}, [c, rows, start, length](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < length; ++j) g[r * c + start + j] += self.grad[r * length + j];
  });
}

Tensor gather_rows(const Tensor& h, const IndexMatrix& idx) {
  if (h.rank() != 2) throw ShapeError("gather_rows: expected [M, C] source, got " + to_string(h.shape()));
  const std::size_t m = h.shape()[0];
  const std::size_t c = h.shape()[1];
  const std::size_t rows = static_cast<std::size_t>(idx.rows());
  const std::size_t k = static_cast<std::size_t>(idx.cols());
  for (Eigen::Index i = 0; i < idx.size(); ++i) {
    const std::int64_t v = idx.data()[i];
    if (v < 0 || static_cast<std::size_t>(v) >= m) {
      throw std::out_of_range("gather_rows: index " + std::to_string(v) + " outside [0, " + std::to_string(m) + ")");
    }
  }
  auto index = std::make_shared<std::vector<std::size_t>>(idx.data(), idx.data() + idx.size());
  std::vector<double> out(rows * k * c);
  const auto hv = h.data();
  for (std::size_t i = 0; i < rows * k; ++i) std::copy_n(hv.data() + (*index)[i] * c, c, out.data() + i * c);
  return make_result("gather_rows", {rows, k, c}, std::move(out), {h}, [index, c](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < index->size(); ++i) {
      double* dst = g.data() + (*index)[i] * c;
      const double* src = self.grad.data() + i * c;
      for (std::size_t j = 0; j < c; ++j) dst[j] += src[j];
    }
  });
}

}  // namespace la2
