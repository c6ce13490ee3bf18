#include "ilic/tensor.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace ilic {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

std::vector<double>& Node::ensure_grad() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
  return grad;
}

}  // namespace detail

namespace {

thread_local bool g_grad_enabled = true;

void check_shape(const Shape& shape) {
  for (auto e : shape) {
    if (e == 0) throw Error("tensor extents must be positive, got " + shape_str(shape));
  }
}

}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  check_shape(shape);
  auto node = std::make_shared<detail::Node>();
  node->data.assign(ilic::numel(shape), value);
  node->shape = std::move(shape);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
  check_shape(shape);
  if (ilic::numel(shape) != data.size()) {
    throw Error("data length " + std::to_string(data.size()) +
                " does not match shape " + shape_str(shape));
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({}, {value}, requires_grad);
}

const Shape& Tensor::shape() const {
  if (!node_) throw Error("undefined tensor");
  return node_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) throw Error("axis out of range for shape " + shape_str(s));
  return s[axis];
}

std::size_t Tensor::numel() const { return ilic::numel(shape()); }

std::span<const double> Tensor::data() const {
  if (!node_) throw Error("undefined tensor");
  return node_->data;
}

std::span<double> Tensor::mutable_data() {
  if (!node_) throw Error("undefined tensor");
  if (node_->backward_fn) throw Error("cannot mutate an op result inside a live graph");
  return node_->data;
}

double Tensor::item() const {
  if (numel() != 1) throw Error("item() needs a single-element tensor, got " + shape_str(shape()));
  return node_->data[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

void Tensor::set_requires_grad(bool flag) {
  if (!node_) throw Error("undefined tensor");
  node_->requires_grad = flag;
}

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

std::span<const double> Tensor::grad() const {
  if (!has_grad()) throw Error("tensor has no gradient");
  return node_->grad;
}

std::span<double> Tensor::mutable_grad() {
  if (!node_) throw Error("undefined tensor");
  return node_->ensure_grad();
}

void Tensor::zero_grad() {
  if (node_ && !node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach() const { return from(shape(), node_->data, false); }

void Tensor::backward() const {
  if (!node_) throw Error("undefined tensor");
  if (numel() != 1) throw Error("backward() needs a scalar loss, got " + shape_str(shape()));
  if (node_->released) throw Error("backward() already ran through this graph");
  if (!node_->requires_grad) throw Error("loss does not depend on any tensor requiring grad");

  // Iterative post-order DFS gives a topological order.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      detail::Node* p = n->parents[next++].get();
      if (p->requires_grad && !seen.count(p)) {
        if (p->released) throw Error("graph segment already consumed by backward()");
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  node_->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(n->grad);
  }
  // Free the tape.
  for (detail::Node* n : order) {
    if (n->backward_fn) {
      n->backward_fn = nullptr;
      n->parents.clear();
      n->released = true;
    }
  }
}

Tensor make_result(Shape shape, std::vector<double> data,
                   const std::vector<Tensor>& parents,
                   std::function<void(std::span<const double>)> backward_fn) {
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  if (g_grad_enabled && backward_fn) {
    bool any = false;
    for (const auto& p : parents) any = any || p.requires_grad();
    if (any) {
      node->requires_grad = true;
      for (const auto& p : parents) {
        if (p.requires_grad()) node->parents.push_back(p.node_ptr());
      }
      node->backward_fn = std::move(backward_fn);
    }
  }
  return Tensor(std::move(node));
}

void accumulate_grad(const Tensor& t, std::span<const double> values) {
  if (!t.requires_grad()) return;
  auto& g = t.node()->ensure_grad();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += values[i];
}

// ---------------------------------------------------------------------------
// Broadcasting

namespace {

struct Broadcast {
  Shape out;
  std::vector<std::size_t> stride_a, stride_b;  // aligned to out, 0 = broadcast
};

std::vector<std::size_t> strides_of(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

Broadcast broadcast_shapes(const Shape& a, const Shape& b) {
  const std::size_t r = std::max(a.size(), b.size());
  Broadcast bc;
  bc.out.resize(r);
  bc.stride_a.assign(r, 0);
  bc.stride_b.assign(r, 0);
  auto sa = strides_of(a), sb = strides_of(b);
  for (std::size_t i = 0; i < r; ++i) {
    const std::size_t ia = i + a.size() >= r ? i + a.size() - r : SIZE_MAX;
    const std::size_t ib = i + b.size() >= r ? i + b.size() - r : SIZE_MAX;
    const std::size_t ea = ia == SIZE_MAX ? 1 : a[ia];
    const std::size_t eb = ib == SIZE_MAX ? 1 : b[ib];
    if (ea != eb && ea != 1 && eb != 1) {
      throw Error("incompatible shapes " + shape_str(a) + " and " + shape_str(b));
    }
    bc.out[i] = std::max(ea, eb);
    if (ea != 1) bc.stride_a[i] = sa[ia];
    if (eb != 1) bc.stride_b[i] = sb[ib];
  }
  return bc;
}

// Calls fn(out_index, a_offset, b_offset) over the broadcast output.
template <typename Fn>
void for_each_broadcast(const Broadcast& bc, Fn&& fn) {
  const std::size_t r = bc.out.size();
  const std::size_t total = numel(bc.out);
  if (r == 0) {
    fn(0, 0, 0);
    return;
  }
  std::vector<std::size_t> idx(r, 0);
  std::size_t oa = 0, ob = 0;
  const std::size_t inner = bc.out[r - 1];
  const std::size_t ia_step = bc.stride_a[r - 1], ib_step = bc.stride_b[r - 1];
  for (std::size_t o = 0; o < total; o += inner) {
    for (std::size_t k = 0; k < inner; ++k) fn(o + k, oa + k * ia_step, ob + k * ib_step);
    // advance the outer multi-index
    for (std::size_t d = r - 1; d-- > 0;) {
      ++idx[d];
      oa += bc.stride_a[d];
      ob += bc.stride_b[d];
      if (idx[d] < bc.out[d]) break;
      oa -= bc.stride_a[d] * idx[d];
      ob -= bc.stride_b[d] * idx[d];
      idx[d] = 0;
    }
  }
}

enum class BinOp { kAdd, kSub, kMul };

Tensor binary(const Tensor& a, const Tensor& b, BinOp op) {
  const auto& da = a.data();
  const auto& db = b.data();
  if (a.shape() == b.shape()) {
    const std::size_t n = da.size();
    std::vector<double> out(n);
    switch (op) {
      case BinOp::kAdd: for (std::size_t i = 0; i < n; ++i) out[i] = da[i] + db[i]; break;
      case BinOp::kSub: for (std::size_t i = 0; i < n; ++i) out[i] = da[i] - db[i]; break;
      case BinOp::kMul: for (std::size_t i = 0; i < n; ++i) out[i] = da[i] * db[i]; break;
    }
    return make_result(a.shape(), std::move(out), {a, b},
                       [a, b, op](std::span<const double> g) {
                         const std::size_t n = g.size();
                         if (a.requires_grad()) {
                           auto& ga = a.node()->ensure_grad();
                           if (op == BinOp::kMul) {
                             auto db = b.data();
                             for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * db[i];
                           } else {
                             for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
                           }
                         }
                         if (b.requires_grad()) {
                           auto& gb = b.node()->ensure_grad();
                           if (op == BinOp::kMul) {
                             auto da = a.data();
                             for (std::size_t i = 0; i < n; ++i) gb[i] += g[i] * da[i];
                           } else if (op == BinOp::kSub) {
                             for (std::size_t i = 0; i < n; ++i) gb[i] -= g[i];
                           } else {
                             for (std::size_t i = 0; i < n; ++i) gb[i] += g[i];
                           }
                         }
                       });
  }
  Broadcast bc = broadcast_shapes(a.shape(), b.shape());
  std::vector<double> out(numel(bc.out));
  for_each_broadcast(bc, [&](std::size_t o, std::size_t ia, std::size_t ib) {
    switch (op) {
      case BinOp::kAdd: out[o] = da[ia] + db[ib]; break;
      case BinOp::kSub: out[o] = da[ia] - db[ib]; break;
      case BinOp::kMul: out[o] = da[ia] * db[ib]; break;
    }
  });
  return make_result(bc.out, std::move(out), {a, b},
                     [a, b, op, bc](std::span<const double> g) {
                       const bool wa = a.requires_grad(), wb = b.requires_grad();
                       double* ga = wa ? a.node()->ensure_grad().data() : nullptr;
                       double* gb = wb ? b.node()->ensure_grad().data() : nullptr;
                       auto da = a.data();
                       auto db = b.data();
                       for_each_broadcast(bc, [&](std::size_t o, std::size_t ia, std::size_t ib) {
                         if (wa) ga[ia] += op == BinOp::kMul ? g[o] * db[ib] : g[o];
                         if (wb) {
                           if (op == BinOp::kMul) gb[ib] += g[o] * da[ia];
                           else if (op == BinOp::kSub) gb[ib] -= g[o];
                           else gb[ib] += g[o];
                         }
                       });
                     });
}

// Unary op helper: derivative computed from (x, y). The output copy is kept
// only when the derivative needs it.
template <bool kNeedsOutput = false, typename F, typename D>
Tensor unary(const Tensor& x, F f, D dfdx) {
  auto dx = x.data();
  std::vector<double> out(dx.size());
  for (std::size_t i = 0; i < dx.size(); ++i) out[i] = f(dx[i]);
  if (!grad_enabled() || !x.requires_grad()) {
    return make_result(x.shape(), std::move(out), {x}, nullptr);
  }
  std::shared_ptr<std::vector<double>> saved;
  if constexpr (kNeedsOutput) saved = std::make_shared<std::vector<double>>(out);
  return make_result(x.shape(), std::move(out), {x},
                     [x, saved, dfdx](std::span<const double> g) {
                       auto& gx = x.node()->ensure_grad();
                       auto xd = x.data();
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         const double y = kNeedsOutput ? (*saved)[i] : 0.0;
                         gx[i] += g[i] * dfdx(xd[i], y);
                       }
                     });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::kAdd); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::kSub); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::kMul); }

Tensor scalar_mul(const Tensor& x, double s) {
  return unary(x, [s](double v) { return v * s; }, [s](double, double) { return s; });
}

Tensor add_scalar(const Tensor& x, double s) {
  return unary(x, [s](double v) { return v + s; }, [](double, double) { return 1.0; });
}

Tensor neg(const Tensor& x) { return scalar_mul(x, -1.0); }

Tensor relu(const Tensor& x) {
  return unary(x, [](double v) { return v > 0.0 ? v : 0.0; },
               [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
  return unary<true>(
      x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor sin(const Tensor& x) {
  return unary(x, [](double v) { return std::sin(v); },
               [](double v, double) { return std::cos(v); });
}

Tensor exp(const Tensor& x) {
  return unary<true>(x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  if (!(lo <= hi)) throw Error("clamp: lo must not exceed hi");
  return unary(x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
               [lo, hi](double v, double) { return (v > lo && v < hi) ? 1.0 : 0.0; });
}

Tensor prelu(const Tensor& x, const Tensor& slope, std::size_t channel_axis) {
  const auto& s = x.shape();
  if (channel_axis >= s.size()) throw Error("prelu: channel axis out of range");
  const std::size_t channels = s[channel_axis];
  const std::size_t ns = slope.numel();
  if (ns != 1 && ns != channels) {
    throw Error("prelu: slope has " + std::to_string(ns) + " values for " +
                std::to_string(channels) + " channels");
  }
  std::size_t inner = 1;
  for (std::size_t i = channel_axis + 1; i < s.size(); ++i) inner *= s[i];
  auto xd = x.data();
  auto sd = slope.data();
  std::vector<double> out(xd.size());
  for (std::size_t i = 0; i < xd.size(); ++i) {
    const double a = ns == 1 ? sd[0] : sd[(i / inner) % channels];
    out[i] = xd[i] >= 0.0 ? xd[i] : a * xd[i];
  }
  return make_result(s, std::move(out), {x, slope},
                     [x, slope, inner, channels, ns](std::span<const double> g) {
                       auto xd = x.data();
                       auto sd = slope.data();
                       double* gx = x.requires_grad() ? x.node()->ensure_grad().data() : nullptr;
                       double* gs = slope.requires_grad() ? slope.node()->ensure_grad().data() : nullptr;
                       for (std::size_t i = 0; i < xd.size(); ++i) {
                         const std::size_t c = ns == 1 ? 0 : (i / inner) % channels;
                         if (xd[i] >= 0.0) {
                           if (gx) gx[i] += g[i];
                         } else {
                           if (gx) gx[i] += g[i] * sd[c];
                           if (gs) gs[c] += g[i] * xd[i];
                         }
                       }
                     });
}

// ---------------------------------------------------------------------------
// Reductions

namespace {

void check_axes(const Shape& s, const std::vector<std::size_t>& axes) {
  for (auto a : axes) {
    if (a >= s.size()) throw Error("reduction axis out of range for " + shape_str(s));
  }
}

// Maps each input element to an output element with the given axes reduced.
Broadcast reduction_map(const Shape& in, const std::vector<std::size_t>& axes,
                        Shape* kept_shape) {
  Shape kept = in;
  for (auto a : axes) kept[a] = 1;
  *kept_shape = kept;
  Broadcast bc;
  bc.out = in;
  bc.stride_a = strides_of(in);
  bc.stride_b = strides_of(kept);
  for (auto a : axes) bc.stride_b[a] = 0;
  return bc;
}

Shape drop_axes(const Shape& kept, const std::vector<std::size_t>& axes) {
  Shape out;
  for (std::size_t i = 0; i < kept.size(); ++i) {
    if (std::find(axes.begin(), axes.end(), i) == axes.end()) out.push_back(kept[i]);
  }
  return out;
}

}  // namespace

Tensor sum(const Tensor& x) {
  auto d = x.data();
  double acc = 0.0;
  for (double v : d) acc += v;
  return make_result({}, {acc}, {x}, [x](std::span<const double> g) {
    auto& gx = x.node()->ensure_grad();
    for (auto& v : gx) v += g[0];
  });
}

Tensor mean(const Tensor& x) { return scalar_mul(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor sum(const Tensor& x, const std::vector<std::size_t>& axes, bool keepdim) {
  check_axes(x.shape(), axes);
  Shape kept;
  Broadcast bc = reduction_map(x.shape(), axes, &kept);
  auto xd = x.data();
  std::vector<double> out(numel(kept), 0.0);
  for_each_broadcast(bc, [&](std::size_t, std::size_t ix, std::size_t io) { out[io] += xd[ix]; });
  Shape out_shape = keepdim ? kept : drop_axes(kept, axes);
  return make_result(out_shape, std::move(out), {x}, [x, bc](std::span<const double> g) {
    auto& gx = x.node()->ensure_grad();
    for_each_broadcast(bc, [&](std::size_t, std::size_t ix, std::size_t io) { gx[ix] += g[io]; });
  });
}

Tensor mean(const Tensor& x, const std::vector<std::size_t>& axes, bool keepdim) {
  check_axes(x.shape(), axes);
  std::size_t count = 1;
  for (auto a : axes) count *= x.dim(a);
  return scalar_mul(sum(x, axes, keepdim), 1.0 / static_cast<double>(count));
}

Tensor max(const Tensor& x, std::size_t axis, bool keepdim) {
  check_axes(x.shape(), {axis});
  Shape kept;
  Broadcast bc = reduction_map(x.shape(), {axis}, &kept);
  auto xd = x.data();
  std::vector<double> out(numel(kept), -INFINITY);
  auto arg = std::make_shared<std::vector<std::size_t>>(out.size(), 0);
  for_each_broadcast(bc, [&](std::size_t, std::size_t ix, std::size_t io) {
    if (xd[ix] > out[io]) {
      out[io] = xd[ix];
      (*arg)[io] = ix;
    }
  });
  Shape out_shape = keepdim ? kept : drop_axes(kept, {axis});
  return make_result(out_shape, std::move(out), {x}, [x, arg](std::span<const double> g) {
    auto& gx = x.node()->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) gx[(*arg)[i]] += g[i];
  });
}

Tensor global_avg_pool(const Tensor& x, std::size_t leading) {
  if (leading >= x.rank()) throw Error("global_avg_pool: nothing to pool");
  std::vector<std::size_t> axes;
  for (std::size_t a = leading; a < x.rank(); ++a) axes.push_back(a);
  return mean(x, axes, true);
}

Tensor mse(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw Error("mse: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  auto da = a.data();
  auto db = b.data();
  const double n = static_cast<double>(da.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < da.size(); ++i) {
    const double d = da[i] - db[i];
    acc += d * d;
  }
  return make_result({}, {acc / n}, {a, b}, [a, b, n](std::span<const double> g) {
    auto da = a.data();
    auto db = b.data();
    const double k = 2.0 * g[0] / n;
    if (a.requires_grad()) {
      auto& ga = a.node()->ensure_grad();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += k * (da[i] - db[i]);
    }
    if (b.requires_grad()) {
      auto& gb = b.node()->ensure_grad();
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= k * (da[i] - db[i]);
    }
  });
}

// ---------------------------------------------------------------------------
// Layout

Tensor reshape(const Tensor& x, Shape shape) {
  check_shape(shape);
  if (numel(shape) != x.numel()) {
    throw Error("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return make_result(std::move(shape), std::move(out), {x},
                     [x](std::span<const double> g) { accumulate_grad(x, g); });
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& order) {
  const auto& s = x.shape();
  const std::size_t r = s.size();
  if (order.size() != r) throw Error("permute: order length does not match rank");
  std::vector<bool> used(r, false);
  for (auto o : order) {
    if (o >= r || used[o]) throw Error("permute: invalid axis order");
    used[o] = true;
  }
  Shape out_shape(r);
  auto in_strides = strides_of(s);
  Broadcast bc;  // iterate output, stride_a = input offsets
  for (std::size_t i = 0; i < r; ++i) out_shape[i] = s[order[i]];
  bc.out = out_shape;
  bc.stride_a.resize(r);
  bc.stride_b = strides_of(out_shape);
  for (std::size_t i = 0; i < r; ++i) bc.stride_a[i] = in_strides[order[i]];
  auto xd = x.data();
  std::vector<double> out(xd.size());
  for_each_broadcast(bc, [&](std::size_t o, std::size_t ix, std::size_t) { out[o] = xd[ix]; });
  return make_result(out_shape, std::move(out), {x}, [x, bc](std::span<const double> g) {
    auto& gx = x.node()->ensure_grad();
    for_each_broadcast(bc, [&](std::size_t o, std::size_t ix, std::size_t) { gx[ix] += g[o]; });
  });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw Error("concat: no inputs");
  const Shape& ref = parts[0].shape();
  if (axis >= ref.size()) throw Error("concat: axis out of range");
  Shape out_shape = ref;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != ref.size()) throw Error("concat: rank mismatch");
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i != axis && s[i] != ref[i]) {
        throw Error("concat: extents " + shape_str(s) + " vs " + shape_str(ref));
      }
    }
    out_shape[axis] += s[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= ref[i];
  for (std::size_t i = axis + 1; i < ref.size(); ++i) inner *= ref[i];
  const std::size_t out_row = out_shape[axis] * inner;
  std::vector<double> out(numel(out_shape));
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const std::size_t row = p.dim(axis) * inner;
    auto pd = p.data();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(pd.begin() + o * row, row, out.begin() + o * out_row + off);
    }
    off += row;
  }
  return make_result(out_shape, std::move(out), parts,
                     [parts, offsets, outer, inner, out_row, axis](std::span<const double> g) {
                       for (std::size_t k = 0; k < parts.size(); ++k) {
                         if (!parts[k].requires_grad()) continue;
                         auto& gp = parts[k].node()->ensure_grad();
                         const std::size_t row = parts[k].dim(axis) * inner;
                         for (std::size_t o = 0; o < outer; ++o) {
                           for (std::size_t i = 0; i < row; ++i) gp[o * row + i] += g[o * out_row + offsets[k] + i];
                         }
                       }
                     });
}

Tensor stack(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw Error("stack: no inputs");
  std::vector<Tensor> lifted;
  lifted.reserve(parts.size());
  for (const auto& p : parts) {
    if (p.shape() != parts[0].shape()) {
      throw Error("stack: extents " + shape_str(p.shape()) + " vs " + shape_str(parts[0].shape()));
    }
    Shape s = p.shape();
    s.insert(s.begin(), 1);
    lifted.push_back(reshape(p, s));
  }
  return concat(lifted, 0);
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length) {
  const auto& s = x.shape();
  if (axis >= s.size()) throw Error("slice: axis out of range");
  if (length == 0 || start + length > s[axis]) {
    throw Error("slice: range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                ") outside extent " + std::to_string(s[axis]));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  Shape out_shape = s;
  out_shape[axis] = length;
  const std::size_t in_row = s[axis] * inner, out_row = length * inner, off = start * inner;
  auto xd = x.data();
  std::vector<double> out(outer * out_row);
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(xd.begin() + o * in_row + off, out_row, out.begin() + o * out_row);
  }
  return make_result(out_shape, std::move(out), {x},
                     [x, outer, in_row, out_row, off](std::span<const double> g) {
                       auto& gx = x.node()->ensure_grad();
                       for (std::size_t o = 0; o < outer; ++o) {
                         for (std::size_t i = 0; i < out_row; ++i) gx[o * in_row + off + i] += g[o * out_row + i];
                       }
                     });
}

std::vector<Tensor> unstack(const Tensor& x) {
  if (x.rank() == 0) throw Error("unstack: scalar input");
  Shape inner(x.shape().begin() + 1, x.shape().end());
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < x.dim(0); ++i) out.push_back(reshape(slice(x, 0, i, 1), inner));
  return out;
}

}  // namespace ilic
