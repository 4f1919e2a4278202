#include "lsinet/autodiff/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <limits>
#include <string>
#include <utility>

#include "lsinet/errors.hpp"

namespace lsinet::ad {
namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> data, const char* op,
                      std::initializer_list<const Tensor<T>*> inputs,
                      std::function<void(Node<T>&)> backward) {
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->op = op;
  bool any = false;
  for (const Tensor<T>* input : inputs) any = any || input->requires_grad();
  if (any && grad_enabled()) {
    node->requires_grad = true;
    for (const Tensor<T>* input : inputs) node->parents.push_back(input->node());
    node->backward = std::move(backward);
  }
  return Tensor<T>(std::move(node));
}

template <typename T>
void require_defined(const Tensor<T>& x, const char* op) {
  if (!x.defined()) throw ContractError(std::string(op) + ": undefined tensor operand");
}

std::string pair_message(const char* op, const Shape& a, const Shape& b) {
  return std::string(op) + ": incompatible shapes " + shape_to_string(a) + " and " +
         shape_to_string(b);
}

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() >= big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

// How the two operands of a binary elementwise op line up. The "small"
// operand repeats every `period` elements of the output.
struct Pairing {
  Shape out_shape;
  bool a_full;
  bool b_full;
  std::size_t period;
};

Pairing pair_shapes(const char* op, const Shape& a, const Shape& b) {
  const std::size_t na = shape_numel(a);
  const std::size_t nb = shape_numel(b);
  if (a == b) return {a, true, true, na};
  if (nb == 1) return {a, true, false, 1};
  if (na == 1) return {b, false, true, 1};
  if (is_suffix(b, a)) return {a, true, false, nb};
  if (is_suffix(a, b)) return {b, false, true, na};
  throw ShapeError(pair_message(op, a, b));
}

// Iterates output index i together with the operand indices.
template <typename F>
void for_each_pair(const Pairing& p, std::size_t out_n, F&& f) {
  const std::size_t reps = out_n / p.period;
  std::size_t i = 0;
  for (std::size_t r = 0; r < reps; ++r) {
    for (std::size_t j = 0; j < p.period; ++j, ++i) {
      f(i, p.a_full ? i : j, p.b_full ? i : j);
    }
  }
}

template <typename T, typename Fwd, typename GradA, typename GradB>
Tensor<T> binary(const char* op, const Tensor<T>& a, const Tensor<T>& b, Fwd fwd,
                 GradA grad_a, GradB grad_b) {
  require_defined(a, op);
  require_defined(b, op);
  Pairing p = pair_shapes(op, a.shape(), b.shape());
  const std::size_t out_n = shape_numel(p.out_shape);
  std::vector<T> out(out_n);
  auto ad = a.data();
  auto bd = b.data();
  for_each_pair(p, out_n, [&](std::size_t i, std::size_t ia, std::size_t ib) {
    out[i] = fwd(ad[ia], bd[ib]);
  });
  Shape shape = p.out_shape;
  return make_result<T>(
      std::move(shape), std::move(out), op, {&a, &b},
      [p, out_n, grad_a, grad_b](Node<T>& self) {
        Node<T>& na = *self.parents[0];
        Node<T>& nb = *self.parents[1];
        const auto& g = self.grad;
        if (na.requires_grad) {
          auto& ga = na.grad_buffer();
          for_each_pair(p, out_n, [&](std::size_t i, std::size_t ia, std::size_t ib) {
            ga[ia] += grad_a(g[i], na.data[ia], nb.data[ib]);
          });
        }
        if (nb.requires_grad) {
          auto& gb = nb.grad_buffer();
          for_each_pair(p, out_n, [&](std::size_t i, std::size_t ia, std::size_t ib) {
            gb[ib] += grad_b(g[i], na.data[ia], nb.data[ib]);
          });
        }
      });
}

// Unary op whose derivative is expressed through input x and output y.
template <typename T, typename Fwd, typename Deriv>
Tensor<T> unary(const char* op, const Tensor<T>& x, Fwd fwd, Deriv deriv) {
  require_defined(x, op);
  auto xd = x.data();
  std::vector<T> out(xd.size());
  for (std::size_t i = 0; i < xd.size(); ++i) out[i] = fwd(xd[i]);
  return make_result<T>(x.shape(), std::move(out), op, {&x}, [deriv](Node<T>& self) {
    Node<T>& nx = *self.parents[0];
    auto& gx = nx.grad_buffer();
    for (std::size_t i = 0; i < gx.size(); ++i) {
      gx[i] += self.grad[i] * deriv(nx.data[i], self.data[i]);
    }
  });
}

// outer x len x inner decomposition around one axis.
struct AxisSplit {
  std::size_t outer = 1;
  std::size_t len = 1;
  std::size_t inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis, const char* op) {
  if (axis >= shape.size()) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) +
                     " out of range for shape " + shape_to_string(shape));
  }
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.len = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace

// ---------------------------------------------------------------- matmul

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_defined(a, "matmul");
  require_defined(b, "matmul");
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() < 2 || sb.size() < 2 || sa[sa.size() - 1] != sb[sb.size() - 2]) {
    throw ShapeError(pair_message("matmul", sa, sb));
  }
  const Shape batch_a(sa.begin(), sa.end() - 2);
  const Shape batch_b(sb.begin(), sb.end() - 2);
  if (!batch_a.empty() && !batch_b.empty() && batch_a != batch_b) {
    throw ShapeError(pair_message("matmul", sa, sb));
  }
  const std::size_t p = sa[sa.size() - 2];
  const std::size_t q = sa[sa.size() - 1];
  const std::size_t r = sb[sb.size() - 1];
  const Shape& batch = batch_a.empty() ? batch_b : batch_a;
  const std::size_t nbatch = shape_numel(batch);
  const bool a_batched = !batch_a.empty();
  const bool b_batched = !batch_b.empty();

  Shape out_shape = batch;
  out_shape.push_back(p);
  out_shape.push_back(r);
  std::vector<T> out(nbatch * p * r);

  const T* ad = a.data().data();
  const T* bd = b.data().data();
  if (!b_batched) {
    // Stack every batch of `a` into one tall matrix.
    const std::size_t rows = a_batched ? nbatch * p : p;
    MatMap<T>(out.data(), rows, r).noalias() =
        ConstMatMap<T>(ad, rows, q) * ConstMatMap<T>(bd, q, r);
  } else {
    for (std::size_t i = 0; i < nbatch; ++i) {
      const T* ai = ad + (a_batched ? i * p * q : 0);
      MatMap<T>(out.data() + i * p * r, p, r).noalias() =
          ConstMatMap<T>(ai, p, q) * ConstMatMap<T>(bd + i * q * r, q, r);
    }
  }

  return make_result<T>(
      std::move(out_shape), std::move(out), "matmul", {&a, &b},
      [=](Node<T>& self) {
        Node<T>& na = *self.parents[0];
        Node<T>& nb = *self.parents[1];
        const T* g = self.grad.data();
        if (!b_batched) {
          const std::size_t rows = a_batched ? nbatch * p : p;
          ConstMatMap<T> G(g, rows, r);
          if (na.requires_grad) {
            MatMap<T>(na.grad_buffer().data(), rows, q).noalias() +=
                G * ConstMatMap<T>(nb.data.data(), q, r).transpose();
          }
          if (nb.requires_grad) {
            MatMap<T>(nb.grad_buffer().data(), q, r).noalias() +=
                ConstMatMap<T>(na.data.data(), rows, q).transpose() * G;
          }
          return;
        }
        T* ga = na.requires_grad ? na.grad_buffer().data() : nullptr;
        T* gb = nb.requires_grad ? nb.grad_buffer().data() : nullptr;
        for (std::size_t i = 0; i < nbatch; ++i) {
          ConstMatMap<T> G(g + i * p * r, p, r);
          const std::size_t a_off = a_batched ? i * p * q : 0;
          if (ga) {
            MatMap<T>(ga + a_off, p, q).noalias() +=
                G * ConstMatMap<T>(nb.data.data() + i * q * r, q, r).transpose();
          }
          if (gb) {
            MatMap<T>(gb + i * q * r, q, r).noalias() +=
                ConstMatMap<T>(na.data.data() + a_off, p, q).transpose() * G;
          }
        }
      });
}

// ----------------------------------------------------------- elementwise

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary<T>(
      "add", a, b, [](T x, T y) { return x + y; }, [](T g, T, T) { return g; },
      [](T g, T, T) { return g; });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary<T>(
      "sub", a, b, [](T x, T y) { return x - y; }, [](T g, T, T) { return g; },
      [](T g, T, T) { return -g; });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary<T>(
      "mul", a, b, [](T x, T y) { return x * y; }, [](T g, T, T y) { return g * y; },
      [](T g, T x, T) { return g * x; });
}

template <typename T>
Tensor<T> neg(const Tensor<T>& x) {
  return unary<T>(
      "neg", x, [](T v) { return -v; }, [](T, T) { return T(-1); });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  return unary<T>(
      "scale", x, [factor](T v) { return v * factor; },
      [factor](T, T) { return factor; });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T offset) {
  return unary<T>(
      "add_scalar", x, [offset](T v) { return v + offset; }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  return unary<T>(
      "relu", x, [](T v) { return v > T(0) ? v : T(0); },
      [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> exp(const Tensor<T>& x) {
  return unary<T>(
      "exp", x, [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <typename T>
Tensor<T> log(const Tensor<T>& x) {
  require_defined(x, "log");
  auto xd = x.data();
  for (std::size_t i = 0; i < xd.size(); ++i) {
    if (!(xd[i] > T(0))) {
      throw DomainError("log of non-positive value " + std::to_string(xd[i]) +
                            " at index " + std::to_string(i),
                        i);
    }
  }
  return unary<T>(
      "log", x, [](T v) { return std::log(v); }, [](T v, T) { return T(1) / v; });
}

template <typename T>
Tensor<T> clamp(const Tensor<T>& x, T lo, T hi) {
  return unary<T>(
      "clamp", x, [lo, hi](T v) { return std::clamp(v, lo, hi); },
      [lo, hi](T v, T) { return (v >= lo && v <= hi) ? T(1) : T(0); });
}

// --------------------------------------------------------------- softmax

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis) {
  require_defined(x, "softmax");
  const AxisSplit s = split_at(x.shape(), axis, "softmax");
  auto xd = x.data();
  std::vector<T> out(xd.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.len * s.inner + i;
      T peak = -std::numeric_limits<T>::infinity();
      for (std::size_t k = 0; k < s.len; ++k) peak = std::max(peak, xd[base + k * s.inner]);
      T total = 0;
      for (std::size_t k = 0; k < s.len; ++k) {
        const T e = std::exp(xd[base + k * s.inner] - peak);
        out[base + k * s.inner] = e;
        total += e;
      }
      for (std::size_t k = 0; k < s.len; ++k) out[base + k * s.inner] /= total;
    }
  }
  return make_result<T>(x.shape(), std::move(out), "softmax", {&x}, [s](Node<T>& self) {
    auto& gx = self.parents[0]->grad_buffer();
    const auto& y = self.data;
    const auto& g = self.grad;
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t i = 0; i < s.inner; ++i) {
        const std::size_t base = o * s.len * s.inner + i;
        T dot = 0;
        for (std::size_t k = 0; k < s.len; ++k) {
          dot += g[base + k * s.inner] * y[base + k * s.inner];
        }
        for (std::size_t k = 0; k < s.len; ++k) {
          const std::size_t idx = base + k * s.inner;
          gx[idx] += y[idx] * (g[idx] - dot);
        }
      }
    }
  });
}

// ------------------------------------------------------------ reductions

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  require_defined(x, "sum");
  T total = 0;
  for (T v : x.data()) total += v;
  return make_result<T>({}, {total}, "sum", {&x}, [](Node<T>& self) {
    auto& gx = self.parents[0]->grad_buffer();
    const T g = self.grad[0];
    for (auto& v : gx) v += g;
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x, std::size_t axis) {
  require_defined(x, "sum");
  const AxisSplit s = split_at(x.shape(), axis, "sum");
  Shape out_shape = x.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  std::vector<T> out(s.outer * s.inner, T(0));
  auto xd = x.data();
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t k = 0; k < s.len; ++k)
      for (std::size_t i = 0; i < s.inner; ++i)
        out[o * s.inner + i] += xd[(o * s.len + k) * s.inner + i];
  return make_result<T>(std::move(out_shape), std::move(out), "sum_axis", {&x},
                        [s](Node<T>& self) {
                          auto& gx = self.parents[0]->grad_buffer();
                          for (std::size_t o = 0; o < s.outer; ++o)
                            for (std::size_t k = 0; k < s.len; ++k)
                              for (std::size_t i = 0; i < s.inner; ++i)
                                gx[(o * s.len + k) * s.inner + i] +=
                                    self.grad[o * s.inner + i];
                        });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  if (x.numel() == 0) throw ShapeError("mean of an empty tensor");
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x, std::size_t axis) {
  const std::size_t len = x.dim(axis);
  if (len == 0) throw ShapeError("mean over an empty axis");
  return scale(sum(x, axis), T(1) / static_cast<T>(len));
}

// ------------------------------------------------------- shape-changing

template <typename T>
Tensor<T> concat(std::span<const Tensor<T>> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  for (const auto& part : parts) require_defined(part, "concat");
  const Shape& first = parts[0].shape();
  split_at(first, axis, "concat");
  std::vector<std::size_t> lens;
  std::size_t total_len = 0;
  for (const auto& part : parts) {
    const Shape& s = part.shape();
    bool ok = s.size() == first.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d) ok = d == axis || s[d] == first[d];
    if (!ok) throw ShapeError(pair_message("concat", first, s));
    lens.push_back(s[axis]);
    total_len += s[axis];
  }
  Shape out_shape = first;
  out_shape[axis] = total_len;
  const AxisSplit s = split_at(out_shape, axis, "concat");
  std::vector<T> out(shape_numel(out_shape));
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    auto pd = parts[p].data();
    const std::size_t chunk = lens[p] * s.inner;
    for (std::size_t o = 0; o < s.outer; ++o) {
      std::copy_n(pd.begin() + o * chunk, chunk,
                  out.begin() + (o * s.len * s.inner + offset * s.inner));
    }
    offset += lens[p];
  }

  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(out_shape);
  node->data = std::move(out);
  node->op = "concat";
  bool any = false;
  for (const auto& part : parts) any = any || part.requires_grad();
  if (any) {
    node->requires_grad = true;
    for (const auto& part : parts) node->parents.push_back(part.node());
    node->backward = [s, lens](Node<T>& self) {
      std::size_t offset = 0;
      for (std::size_t p = 0; p < lens.size(); ++p) {
        Node<T>& np = *self.parents[p];
        const std::size_t chunk = lens[p] * s.inner;
        if (np.requires_grad) {
          auto& gp = np.grad_buffer();
          for (std::size_t o = 0; o < s.outer; ++o) {
            const T* src = self.grad.data() + o * s.len * s.inner + offset * s.inner;
            T* dst = gp.data() + o * chunk;
            for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
          }
        }
        offset += lens[p];
      }
    };
  }
  return Tensor<T>(std::move(node));
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  require_defined(x, "reshape");
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError(pair_message("reshape", x.shape(), shape));
  }
  std::vector<T> out(x.data().begin(), x.data().end());
  return make_result<T>(std::move(shape), std::move(out), "reshape", {&x},
                        [](Node<T>& self) {
                          auto& gx = self.parents[0]->grad_buffer();
                          for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i];
                        });
}

template <typename T>
Tensor<T> flatten(const Tensor<T>& x, std::size_t start_axis) {
  require_defined(x, "flatten");
  if (start_axis >= x.rank() && !(start_axis == 0 && x.rank() == 0)) {
    throw ShapeError("flatten: start axis " + std::to_string(start_axis) +
                     " out of range for shape " + shape_to_string(x.shape()));
  }
  Shape shape(x.shape().begin(), x.shape().begin() + static_cast<std::ptrdiff_t>(start_axis));
  std::size_t tail = 1;
  for (std::size_t d = start_axis; d < x.rank(); ++d) tail *= x.shape()[d];
  shape.push_back(tail);
  return reshape(x, std::move(shape));
}

namespace {

// Maps each output flat index of an axis swap to its source flat index.
std::vector<std::size_t> swap_axes_index(const Shape& in_shape, std::size_t a,
                                         std::size_t b) {
  const std::size_t rank = in_shape.size();
  Shape out_shape = in_shape;
  std::swap(out_shape[a], out_shape[b]);
  std::vector<std::size_t> in_strides(rank, 1);
  for (std::size_t d = rank; d-- > 1;) in_strides[d - 1] = in_strides[d] * in_shape[d];
  std::vector<std::size_t> stride_for_out(in_strides);
  std::swap(stride_for_out[a], stride_for_out[b]);

  const std::size_t n = shape_numel(in_shape);
  std::vector<std::size_t> index(n);
  std::vector<std::size_t> counter(rank, 0);
  std::size_t src = 0;
  for (std::size_t i = 0; i < n; ++i) {
    index[i] = src;
    for (std::size_t d = rank; d-- > 0;) {
      ++counter[d];
      src += stride_for_out[d];
      if (counter[d] < out_shape[d]) break;
      src -= stride_for_out[d] * counter[d];
      counter[d] = 0;
    }
  }
  return index;
}

template <typename T>
void transpose_last_two(const T* src, T* dst, std::size_t batch, std::size_t rows,
                        std::size_t cols, bool accumulate) {
  // src is [batch, rows, cols], dst is [batch, cols, rows].
  for (std::size_t b = 0; b < batch; ++b) {
    const T* s = src + b * rows * cols;
    T* d = dst + b * rows * cols;
    if (accumulate) {
      MatMap<T>(d, cols, rows) += ConstMatMap<T>(s, rows, cols).transpose();
    } else {
      MatMap<T>(d, cols, rows) = ConstMatMap<T>(s, rows, cols).transpose();
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> transpose(const Tensor<T>& x, std::size_t axis_a, std::size_t axis_b) {
  require_defined(x, "transpose");
  const std::size_t rank = x.rank();
  if (axis_a >= rank || axis_b >= rank) {
    throw ShapeError("transpose: axes out of range for shape " +
                     shape_to_string(x.shape()));
  }
  if (axis_a > axis_b) std::swap(axis_a, axis_b);
  Shape out_shape = x.shape();
  std::swap(out_shape[axis_a], out_shape[axis_b]);
  std::vector<T> out(x.numel());
  if (axis_a == axis_b) {
    std::copy(x.data().begin(), x.data().end(), out.begin());
    return make_result<T>(std::move(out_shape), std::move(out), "transpose", {&x},
                          [](Node<T>& self) {
                            auto& gx = self.parents[0]->grad_buffer();
                            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i];
                          });
  }
  if (axis_a + 2 == rank && axis_b + 1 == rank) {
    const std::size_t rows = x.shape()[rank - 2];
    const std::size_t cols = x.shape()[rank - 1];
    const std::size_t batch = rows * cols == 0 ? 0 : x.numel() / (rows * cols);
    transpose_last_two(x.data().data(), out.data(), batch, rows, cols, false);
    return make_result<T>(std::move(out_shape), std::move(out), "transpose", {&x},
                          [batch, rows, cols](Node<T>& self) {
                            auto& gx = self.parents[0]->grad_buffer();
                            transpose_last_two(self.grad.data(), gx.data(), batch, cols,
                                               rows, true);
                          });
  }
  auto index = std::make_shared<std::vector<std::size_t>>(
      swap_axes_index(x.shape(), axis_a, axis_b));
  auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xd[(*index)[i]];
  return make_result<T>(std::move(out_shape), std::move(out), "transpose", {&x},
                        [index](Node<T>& self) {
                          auto& gx = self.parents[0]->grad_buffer();
                          for (std::size_t i = 0; i < index->size(); ++i)
                            gx[(*index)[i]] += self.grad[i];
                        });
}

template <typename T>
Tensor<T> slice(const Tensor<T>& x, std::size_t axis, std::size_t start,
                std::size_t length) {
  require_defined(x, "slice");
  const AxisSplit s = split_at(x.shape(), axis, "slice");
  if (start + length > s.len) {
    throw ShapeError("slice [" + std::to_string(start) + ", " +
                     std::to_string(start + length) + ") exceeds axis " +
                     std::to_string(axis) + " of shape " + shape_to_string(x.shape()));
  }
  Shape out_shape = x.shape();
  out_shape[axis] = length;
  const std::size_t chunk = length * s.inner;
  std::vector<T> out(s.outer * chunk);
  auto xd = x.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    std::copy_n(xd.begin() + (o * s.len + start) * s.inner, chunk,
                out.begin() + o * chunk);
  }
  return make_result<T>(std::move(out_shape), std::move(out), "slice", {&x},
                        [s, start, chunk](Node<T>& self) {
                          auto& gx = self.parents[0]->grad_buffer();
                          for (std::size_t o = 0; o < s.outer; ++o) {
                            T* dst = gx.data() + (o * s.len + start) * s.inner;
                            const T* src = self.grad.data() + o * chunk;
                            for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
                          }
                        });
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, std::span<const std::size_t> rows) {
  require_defined(x, "gather_rows");
  if (x.rank() != 2) {
    throw ShapeError("gather_rows expects a rank-2 tensor, got " +
                     shape_to_string(x.shape()));
  }
  const std::size_t n_rows = x.shape()[0];
  const std::size_t width = x.shape()[1];
  auto picked = std::make_shared<std::vector<std::size_t>>(rows.begin(), rows.end());
  std::vector<T> out(picked->size() * width);
  auto xd = x.data();
  for (std::size_t r = 0; r < picked->size(); ++r) {
    const std::size_t src = (*picked)[r];
    if (src >= n_rows) {
      throw ShapeError("gather_rows: row " + std::to_string(src) + " out of range for " +
                       shape_to_string(x.shape()));
    }
    std::copy_n(xd.begin() + src * width, width, out.begin() + r * width);
  }
  return make_result<T>({picked->size(), width}, std::move(out), "gather_rows", {&x},
                        [picked, width](Node<T>& self) {
                          auto& gx = self.parents[0]->grad_buffer();
                          for (std::size_t r = 0; r < picked->size(); ++r) {
                            T* dst = gx.data() + (*picked)[r] * width;
                            const T* src = self.grad.data() + r * width;
                            for (std::size_t c = 0; c < width; ++c) dst[c] += src[c];
                          }
                        });
}

template <typename T>
Tensor<T> straight_through(const Tensor<T>& x, std::vector<T> forward_value) {
  require_defined(x, "straight_through");
  if (forward_value.size() != x.numel()) {
    throw ShapeError("straight_through: value of length " +
                     std::to_string(forward_value.size()) + " for shape " +
                     shape_to_string(x.shape()));
  }
  return make_result<T>(x.shape(), std::move(forward_value), "straight_through", {&x},
                        [](Node<T>& self) {
                          auto& gx = self.parents[0]->grad_buffer();
                          for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i];
                        });
}

template <typename T>
Tensor<T> mse_loss(const Tensor<T>& prediction, const Tensor<T>& target) {
  if (prediction.shape() != target.shape()) {
    throw ShapeError(pair_message("mse_loss", prediction.shape(), target.shape()));
  }
  Tensor<T> diff = sub(prediction, target);
  return mean(mul(diff, diff));
}

#define LSINET_INSTANTIATE_OPS(T)                                                    \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                     \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                        \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                        \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                        \
  template Tensor<T> neg(const Tensor<T>&);                                          \
  template Tensor<T> scale(const Tensor<T>&, T);                                     \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                \
  template Tensor<T> relu(const Tensor<T>&);                                         \
  template Tensor<T> exp(const Tensor<T>&);                                          \
  template Tensor<T> log(const Tensor<T>&);                                          \
  template Tensor<T> clamp(const Tensor<T>&, T, T);                                  \
  template Tensor<T> softmax(const Tensor<T>&, std::size_t);                         \
  template Tensor<T> sum(const Tensor<T>&);                                          \
  template Tensor<T> sum(const Tensor<T>&, std::size_t);                             \
  template Tensor<T> mean(const Tensor<T>&);                                         \
  template Tensor<T> mean(const Tensor<T>&, std::size_t);                            \
  template Tensor<T> concat(std::span<const Tensor<T>>, std::size_t);                \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                               \
  template Tensor<T> flatten(const Tensor<T>&, std::size_t);                         \
  template Tensor<T> transpose(const Tensor<T>&, std::size_t, std::size_t);          \
  template Tensor<T> slice(const Tensor<T>&, std::size_t, std::size_t, std::size_t); \
  template Tensor<T> gather_rows(const Tensor<T>&, std::span<const std::size_t>);    \
  template Tensor<T> straight_through(const Tensor<T>&, std::vector<T>);             \
  template Tensor<T> mse_loss(const Tensor<T>&, const Tensor<T>&);

LSINET_INSTANTIATE_OPS(float)
LSINET_INSTANTIATE_OPS(double)

#undef LSINET_INSTANTIATE_OPS

}  // namespace lsinet::ad
