#ifndef ILIC_TENSOR_H_
#define ILIC_TENSOR_H_

// Dense float64 tensors with tape-based reverse-mode differentiation.
//
// Every op returns a new Tensor. When gradient mode is on and at least one
// input requires a gradient, the result records its parents and a backward
// closure. backward() on a scalar walks the recorded graph once, in reverse
// topological order, and then releases it. A second backward() through a
// released graph throws. Leaf gradients accumulate across separate graphs
// until zero_grad().

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ilic {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  bool released = false;  // graph already consumed by backward()
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(std::span<const double> grad_out)> backward_fn;

  std::vector<double>& ensure_grad();
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> data,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  // Writable view; only permitted on tensors that are not op results
  // inside a live graph (parameters, inputs, constants).
  std::span<double> mutable_data();
  double item() const;
  double at(std::size_t flat_index) const { return data()[flat_index]; }

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  // Copy of the values with no graph attached.
  Tensor detach() const;

  // Runs reverse accumulation from this scalar.
  void backward() const;

  detail::Node* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;

  friend Tensor make_result(Shape, std::vector<double>,
                            const std::vector<Tensor>&,
                            std::function<void(std::span<const double>)>);
};

// Gradient-recording switch (thread local).
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Builds an op result. The backward closure receives d(loss)/d(result) and
// must accumulate into the grads of those parents that require them. It is
// only stored when recording is on and some parent requires a gradient.
Tensor make_result(Shape shape, std::vector<double> data,
                   const std::vector<Tensor>& parents,
                   std::function<void(std::span<const double>)> backward_fn);

// Accumulates `values` into the gradient of `t` if it requires one.
void accumulate_grad(const Tensor& t, std::span<const double> values);

// ---------------------------------------------------------------------------
// Elementwise and broadcasting arithmetic. Shapes broadcast numpy-style:
// ranks are right-aligned and each extent pair must match or contain a 1.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scalar_mul(const Tensor& x, double s);
Tensor add_scalar(const Tensor& x, double s);
Tensor neg(const Tensor& x);

Tensor relu(const Tensor& x);
// `slope` holds one value per channel along `channel_axis` (or a single
// shared value). At x == 0 the positive branch applies.
Tensor prelu(const Tensor& x, const Tensor& slope, std::size_t channel_axis);
Tensor sigmoid(const Tensor& x);
Tensor sin(const Tensor& x);
Tensor exp(const Tensor& x);
// Gradient passes only strictly inside (lo, hi).
Tensor clamp(const Tensor& x, double lo, double hi);

// ---------------------------------------------------------------------------
// Reductions.

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor sum(const Tensor& x, const std::vector<std::size_t>& axes, bool keepdim);
Tensor mean(const Tensor& x, const std::vector<std::size_t>& axes,
            bool keepdim);
Tensor max(const Tensor& x, std::size_t axis, bool keepdim);
// Mean over every axis except the first `leading` ones, keeping dims.
Tensor global_avg_pool(const Tensor& x, std::size_t leading);
Tensor mse(const Tensor& a, const Tensor& b);

// ---------------------------------------------------------------------------
// Layout.

Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& order);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor stack(const std::vector<Tensor>& parts);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t start,
             std::size_t length);
std::vector<Tensor> unstack(const Tensor& x);

// ---------------------------------------------------------------------------
// Convolutions (cross-correlation, zero padding). An undefined bias means
// no bias. conv2d accepts [C,H,W] or batched [B,C,H,W]; conv3d accepts
// [C,T,H,W] or [B,C,T,H,W]. Kernels: conv2d [O,C,k,k], conv3d [O,C,kt,kh,kw],
// transposed_conv2d [C_in,C_out,k,k].

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              int stride, int pad);
Tensor conv3d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              int stride, int pad);
// Output extent (H-1)*stride - 2*pad + k + output_padding.
Tensor transposed_conv2d(const Tensor& input, const Tensor& kernel,
                         const Tensor& bias, int stride, int pad,
                         int output_padding_h = 0, int output_padding_w = 0);

}  // namespace ilic

#endif  // ILIC_TENSOR_H_
