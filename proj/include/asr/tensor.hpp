#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace asr {

class TensorError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public TensorError {
 public:
  using TensorError::TensorError;
};

class DomainError : public TensorError {
 public:
  using TensorError::TensorError;
};

class NonFiniteError : public TensorError {
 public:
  using TensorError::TensorError;
};

struct TensorNode;

/// Dense row-major tensor of 64-bit reals with an optional recorded
/// computation graph for reverse-mode gradients.
///
/// Copies share storage (shallow handles). Every op validates its inputs,
/// checks the produced values for NaN/Inf, and records a graph node eagerly
/// when any input requires gradients. Graphs are built per forward pass and
/// dropped when the tensors referencing them go away; mutating leaf data via
/// mutable_data() invalidates graphs built from the old values.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, double value, bool requires_grad = false);
  static Tensor from_data(std::vector<int> shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor scalar(double value);

  bool defined() const { return static_cast<bool>(node_); }
  const std::vector<int>& shape() const;
  int rank() const;
  int dim(int axis) const;
  std::size_t size() const;

  std::span<const double> data() const;
  /// Writable view of a leaf tensor's storage (parameters, inputs).
  /// Throws on graph-produced tensors.
  std::span<double> mutable_data();
  /// Value of a rank-0 tensor.
  double value() const;
  double at(const std::vector<int>& index) const;

  bool requires_grad() const;
  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();

  /// Reverse-mode gradients of a scalar output: fills .grad of every
  /// reachable tensor with requires_grad. Leaf gradients accumulate across
  /// repeated calls; intermediate gradients are reset per call.
  void backward() const;

  TensorNode* node() const { return node_.get(); }
  std::shared_ptr<TensorNode> shared_node() const { return node_; }
  static Tensor wrap(std::shared_ptr<TensorNode> node);

 private:
  explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}
  std::shared_ptr<TensorNode> node_;
};

struct TensorNode {
  std::vector<int> shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::vector<double> grad;
  std::vector<std::shared_ptr<TensorNode>> parents;
  // Reads this node's grad and accumulates into the parents' grads.
  std::function<void(TensorNode&)> backprop;

  std::size_t size() const { return data.size(); }
  bool is_leaf() const { return parents.empty(); }
  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
};

/// Low-level graph-node constructor used by every op. Exposed so test code
/// can build nodes with deliberately wrong gradients for oracle checks.
Tensor make_node(std::vector<int> shape, std::vector<double> data,
                 const std::vector<Tensor>& parents,
                 std::function<void(TensorNode&)> backprop,
                 const char* op_name);

// ---------- elementwise ----------
// Binary ops require equal shapes; a rank-0 operand broadcasts.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);  // |b| >= 1e-12 elementwise
Tensor add(const Tensor& a, double c);
Tensor mul(const Tensor& a, double c);
Tensor relu(const Tensor& a);  // subgradient at 0 is 0
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);  // requires a > 0
Tensor abs(const Tensor& a);  // subgradient at 0 is 0
Tensor neg(const Tensor& a);

// ---------- reductions ----------
Tensor sum(const Tensor& a);
Tensor sum(const Tensor& a, const std::vector<int>& axes);
Tensor mean(const Tensor& a, const std::vector<int>& axes);
/// Global average pooling: spatial mean of an H x W x C map, giving C.
Tensor gap(const Tensor& a);
/// Stable softmax of a rank-1 tensor (max subtraction).
Tensor softmax(const Tensor& v);
/// Euclidean norm of a rank-1 tensor; gradient at the origin is 0.
Tensor l2norm(const Tensor& v);
Tensor dot(const Tensor& a, const Tensor& b);

// ---------- shape ----------
Tensor reshape(const Tensor& a, std::vector<int> shape);
Tensor slice(const Tensor& v, int start, int length);             // rank-1
Tensor slice_channels(const Tensor& map, int start, int length);  // rank-3
Tensor concat(const std::vector<Tensor>& parts);                  // rank-1
Tensor stack_scalars(const std::vector<Tensor>& scalars);

// ---------- spatial (rank-3 H x W x C maps) ----------
/// Stride-1 same-padding convolution; kernel is K x K x Cin x Cout, K odd.
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              int dilation = 1);
Tensor meanpool2(const Tensor& map);
/// Corner-aligned bilinear upsampling by an integer factor.
Tensor upsample_bilinear(const Tensor& map, int factor);
/// Multiplies every channel by a rank-2 spatial field.
Tensor mul_spatial(const Tensor& map, const Tensor& field);
/// Sums channel groups: H x W x (B*D) -> H x W x D.
Tensor group_sum(const Tensor& map, int groups);
/// Per-pixel Euclidean norm of each channel group: H x W x (B*D) -> H x W x B.
Tensor group_norms(const Tensor& map, int groups);
/// Per-pixel matrix product: (H x W x A) . (A x C) -> H x W x C.
Tensor channel_matmul(const Tensor& map, const Tensor& mat);
/// Appends a broadcast vector to every pixel: H x W x (C + len(vec)).
Tensor broadcast_concat(const Tensor& map, const Tensor& vec);
/// Per-pixel cosine similarity against a fixed vector; zero pixels map to 0.
Tensor cosine_map(const Tensor& map, const Tensor& vec);

// ---------- losses ----------
/// Mean per-pixel 2-class cross entropy with logits (H x W x 2 vs binary
/// H x W mask). Gradient of the per-pixel term is softmax(z) - onehot(y).
Tensor cross_entropy_with_logits(const Tensor& logits, const Tensor& mask);

// ---------- verification ----------
/// Central-difference gradient check: samples n coordinates from params,
/// perturbs by h = 1e-5 * max(1, |theta|), and returns the maximum
/// |g_analytic - g_fd| / max(1e-8, |g_analytic| + |g_fd|).
double grad_check(const std::function<Tensor()>& f, const std::vector<Tensor>& params,
                  int n_samples, std::uint64_t seed = 0x5eed);

}  // namespace asr
