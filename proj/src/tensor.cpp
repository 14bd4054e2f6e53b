#include "asr/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "asr/conv_kernels.hpp"
#include "asr/rng.hpp"

namespace asr {

namespace {

std::size_t shape_elems(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw ShapeError("tensor axis lengths must be positive");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

void check_finite(const std::vector<double>& data, const char* where) {
  for (double v : data)
    if (!std::isfinite(v))
      throw NonFiniteError(std::string(where) + ": produced a non-finite value");
}

std::string shape_str(const std::vector<int>& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
}

void require_rank(const Tensor& t, int r, const char* op) {
  if (t.rank() != r)
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(r) +
                     ", got " + shape_str(t.shape()));
}

}  // namespace

// ---------- Tensor basics ----------

Tensor Tensor::wrap(std::shared_ptr<TensorNode> node) { return Tensor(std::move(node)); }

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  auto n = std::make_shared<TensorNode>();
  n->data.assign(shape_elems(shape), 0.0);
  n->shape = std::move(shape);
  n->requires_grad = requires_grad;
  return wrap(std::move(n));
}

Tensor Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
  if (!std::isfinite(value)) throw NonFiniteError("full: non-finite fill value");
  auto n = std::make_shared<TensorNode>();
  n->data.assign(shape_elems(shape), value);
  n->shape = std::move(shape);
  n->requires_grad = requires_grad;
  return wrap(std::move(n));
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<double> data,
                         bool requires_grad) {
  if (shape_elems(shape) != data.size())
    throw ShapeError("from_data: " + std::to_string(data.size()) +
                     " values for shape " + shape_str(shape));
  check_finite(data, "from_data");
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  n->requires_grad = requires_grad;
  return wrap(std::move(n));
}

Tensor Tensor::scalar(double value) { return from_data({}, {value}); }

const std::vector<int>& Tensor::shape() const {
  if (!node_) throw TensorError("undefined tensor");
  return node_->shape;
}

int Tensor::rank() const { return static_cast<int>(shape().size()); }

int Tensor::dim(int axis) const {
  const auto& s = shape();
  if (axis < 0 || axis >= static_cast<int>(s.size()))
    throw ShapeError("dim: axis out of range");
  return s[axis];
}

std::size_t Tensor::size() const {
  if (!node_) throw TensorError("undefined tensor");
  return node_->data.size();
}

std::span<const double> Tensor::data() const {
  if (!node_) throw TensorError("undefined tensor");
  return {node_->data.data(), node_->data.size()};
}

std::span<double> Tensor::mutable_data() {
  if (!node_) throw TensorError("undefined tensor");
  if (!node_->is_leaf())
    throw TensorError("mutable_data: only leaf tensors may be mutated");
  return {node_->data.data(), node_->data.size()};
}

double Tensor::value() const {
  if (rank() != 0) throw ShapeError("value: tensor is not a scalar");
  return node_->data[0];
}

double Tensor::at(const std::vector<int>& index) const {
  const auto& s = shape();
  if (index.size() != s.size()) throw ShapeError("at: index rank mismatch");
  std::size_t flat = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (index[i] < 0 || index[i] >= s[i]) throw ShapeError("at: index out of range");
    flat = flat * static_cast<std::size_t>(s[i]) + static_cast<std::size_t>(index[i]);
  }
  return node_->data[flat];
}

bool Tensor::requires_grad() const {
  if (!node_) throw TensorError("undefined tensor");
  return node_->requires_grad;
}

bool Tensor::has_grad() const {
  if (!node_) throw TensorError("undefined tensor");
  return node_->grad.size() == node_->data.size();
}

std::span<const double> Tensor::grad() const {
  if (!has_grad()) throw TensorError("grad: no gradient has been computed");
  return {node_->grad.data(), node_->grad.size()};
}

void Tensor::zero_grad() {
  if (!node_) throw TensorError("undefined tensor");
  node_->grad.assign(node_->data.size(), 0.0);
}

void Tensor::backward() const {
  TensorNode* root = node_.get();
  if (!root) throw TensorError("backward: undefined tensor");
  if (!root->shape.empty()) throw ShapeError("backward: output must be a scalar");
  if (!root->requires_grad)
    throw TensorError("backward: output does not reach any requires_grad tensor");

  // Iterative postorder over the requires_grad subgraph.
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> seen;
  std::vector<std::pair<TensorNode*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  seen.insert(root);
  while (!stack.empty()) {
    auto& top = stack.back();
    if (top.second < top.first->parents.size()) {
      TensorNode* p = top.first->parents[top.second].get();
      ++top.second;
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(top.first);
      stack.pop_back();
    }
  }

  for (TensorNode* n : order) {
    if (n->is_leaf())
      n->ensure_grad();  // leaves accumulate across calls
    else
      n->grad.assign(n->data.size(), 0.0);
  }
  root->ensure_grad();
  root->grad[0] += 1.0;

  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backprop) (*it)->backprop(**it);
}

Tensor make_node(std::vector<int> shape, std::vector<double> data,
                 const std::vector<Tensor>& parents,
                 std::function<void(TensorNode&)> backprop, const char* op_name) {
  if (shape_elems(shape) != data.size())
    throw ShapeError(std::string(op_name) + ": internal shape/data mismatch");
  check_finite(data, op_name);
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  bool req = false;
  for (const auto& p : parents)
    if (p.requires_grad()) req = true;
  if (req) {
    n->requires_grad = true;
    n->parents.reserve(parents.size());
    for (const auto& p : parents) n->parents.push_back(p.shared_node());
    n->backprop = std::move(backprop);
  }
  return Tensor::wrap(std::move(n));
}

// ---------- elementwise ----------

namespace {

// a and b must have equal shapes, or one of them is rank-0 and broadcasts.
enum class Bcast { none, a_scalar, b_scalar };

Bcast binary_bcast(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return Bcast::none;
  if (a.rank() == 0) return Bcast::a_scalar;
  if (b.rank() == 0) return Bcast::b_scalar;
  require_same_shape(a, b, op);  // throws
  return Bcast::none;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  const Bcast bc = binary_bcast(a, b, "add");
  const auto ad = a.data();
  const auto bd = b.data();
  const std::size_t n = std::max(ad.size(), bd.size());
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i)
    out[i] = ad[bc == Bcast::a_scalar ? 0 : i] + bd[bc == Bcast::b_scalar ? 0 : i];
  auto shape = bc == Bcast::a_scalar ? b.shape() : a.shape();
  return make_node(shape, std::move(out), {a, b},
                   [bc](TensorNode& self) {
                     auto& A = *self.parents[0];
                     auto& B = *self.parents[1];
                     const std::size_t n = self.size();
                     if (A.requires_grad) {
                       A.ensure_grad();
                       for (std::size_t i = 0; i < n; ++i)
                         A.grad[bc == Bcast::a_scalar ? 0 : i] += self.grad[i];
                     }
                     if (B.requires_grad) {
                       B.ensure_grad();
                       for (std::size_t i = 0; i < n; ++i)
                         B.grad[bc == Bcast::b_scalar ? 0 : i] += self.grad[i];
                     }
                   },
                   "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
  const Bcast bc = binary_bcast(a, b, "sub");
  const auto ad = a.data();
  const auto bd = b.data();
  const std::size_t n = std::max(ad.size(), bd.size());
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i)
    out[i] = ad[bc == Bcast::a_scalar ? 0 : i] - bd[bc == Bcast::b_scalar ? 0 : i];
  auto shape = bc == Bcast::a_scalar ? b.shape() : a.shape();
  return make_node(shape, std::move(out), {a, b},
                   [bc](TensorNode& self) {
                     auto& A = *self.parents[0];
                     auto& B = *self.parents[1];
                     const std::size_t n = self.size();
                     if (A.requires_grad) {
                       A.ensure_grad();
                       for (std::size_t i = 0; i < n; ++i)
                         A.grad[bc == Bcast::a_scalar ? 0 : i] += self.grad[i];
                     }
                     if (B.requires_grad) {
                       B.ensure_grad();
                       for (std::size_t i = 0; i < n; ++i)
                         B.grad[bc == Bcast::b_scalar ? 0 : i] -= self.grad[i];
                     }
                   },
                   "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
  const Bcast bc = binary_bcast(a, b, "mul");
  const auto ad = a.data();
  const auto bd = b.data();
  const std::size_t n = std::max(ad.size(), bd.size());
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i)
    out[i] = ad[bc == Bcast::a_scalar ? 0 : i] * bd[bc == Bcast::b_scalar ? 0 : i];
  auto shape = bc == Bcast::a_scalar ? b.shape() : a.shape();
  return make_node(shape, std::move(out), {a, b},
                   [bc](TensorNode& self) {
                     auto& A = *self.parents[0];
                     auto& B = *self.parents[1];
                     const std::size_t n = self.size();
                     if (A.requires_grad) {
                       A.ensure_grad();
                       for (std::size_t i = 0; i < n; ++i)
                         A.grad[bc == Bcast::a_scalar ? 0 : i] +=
                             self.grad[i] * B.data[bc == Bcast::b_scalar ? 0 : i];
                     }
                     if (B.requires_grad) {
                       B.ensure_grad();
                       for (std::size_t i = 0; i < n; ++i)
                         B.grad[bc == Bcast::b_scalar ? 0 : i] +=
                             self.grad[i] * A.data[bc == Bcast::a_scalar ? 0 : i];
                     }
                   },
                   "mul");
}

Tensor div(const Tensor& a, const Tensor& b) {
  const Bcast bc = binary_bcast(a, b, "div");
  const auto ad = a.data();
  const auto bd = b.data();
  for (double v : bd)
    if (std::fabs(v) < 1e-12)
      throw DomainError("div: divisor magnitude below 1e-12");
  const std::size_t n = std::max(ad.size(), bd.size());
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i)
    out[i] = ad[bc == Bcast::a_scalar ? 0 : i] / bd[bc == Bcast::b_scalar ? 0 : i];
  auto shape = bc == Bcast::a_scalar ? b.shape() : a.shape();
  return make_node(shape, std::move(out), {a, b},
                   [bc](TensorNode& self) {
                     auto& A = *self.parents[0];
                     auto& B = *self.parents[1];
                     const std::size_t n = self.size();
                     if (A.requires_grad) {
                       A.ensure_grad();
                       for (std::size_t i = 0; i < n; ++i)
                         A.grad[bc == Bcast::a_scalar ? 0 : i] +=
                             self.grad[i] / B.data[bc == Bcast::b_scalar ? 0 : i];
                     }
                     if (B.requires_grad) {
                       B.ensure_grad();
                       for (std::size_t i = 0; i < n; ++i) {
                         const double bv = B.data[bc == Bcast::b_scalar ? 0 : i];
                         B.grad[bc == Bcast::b_scalar ? 0 : i] -=
                             self.grad[i] * self.data[i] / bv;
                       }
                     }
                   },
                   "div");
}

Tensor add(const Tensor& a, double c) { return add(a, Tensor::scalar(c)); }
Tensor mul(const Tensor& a, double c) { return mul(a, Tensor::scalar(c)); }
Tensor neg(const Tensor& a) { return mul(a, -1.0); }

Tensor relu(const Tensor& a) {
  const auto ad = a.data();
  std::vector<double> out(ad.size());
  for (std::size_t i = 0; i < ad.size(); ++i) out[i] = ad[i] > 0.0 ? ad[i] : 0.0;
  return make_node(a.shape(), std::move(out), {a},
                   [](TensorNode& self) {
                     auto& A = *self.parents[0];
                     if (!A.requires_grad) return;
                     A.ensure_grad();
                     for (std::size_t i = 0; i < self.size(); ++i)
                       if (A.data[i] > 0.0) A.grad[i] += self.grad[i];
                   },
                   "relu");
}

Tensor exp(const Tensor& a) {
  const auto ad = a.data();
  std::vector<double> out(ad.size());
  for (std::size_t i = 0; i < ad.size(); ++i) out[i] = std::exp(ad[i]);
  return make_node(a.shape(), std::move(out), {a},
                   [](TensorNode& self) {
                     auto& A = *self.parents[0];
                     if (!A.requires_grad) return;
                     A.ensure_grad();
                     for (std::size_t i = 0; i < self.size(); ++i)
                       A.grad[i] += self.grad[i] * self.data[i];
                   },
                   "exp");
}

Tensor log(const Tensor& a) {
  const auto ad = a.data();
  std::vector<double> out(ad.size());
  for (std::size_t i = 0; i < ad.size(); ++i) {
    if (!(ad[i] > 0.0)) throw DomainError("log: input must be positive");
    out[i] = std::log(ad[i]);
  }
  return make_node(a.shape(), std::move(out), {a},
                   [](TensorNode& self) {
                     auto& A = *self.parents[0];
                     if (!A.requires_grad) return;
                     A.ensure_grad();
                     for (std::size_t i = 0; i < self.size(); ++i)
                       A.grad[i] += self.grad[i] / A.data[i];
                   },
                   "log");
}

Tensor abs(const Tensor& a) {
  const auto ad = a.data();
  std::vector<double> out(ad.size());
  for (std::size_t i = 0; i < ad.size(); ++i) out[i] = std::fabs(ad[i]);
  return make_node(a.shape(), std::move(out), {a},
                   [](TensorNode& self) {
                     auto& A = *self.parents[0];
                     if (!A.requires_grad) return;
                     A.ensure_grad();
                     for (std::size_t i = 0; i < self.size(); ++i) {
                       if (A.data[i] > 0.0)
                         A.grad[i] += self.grad[i];
                       else if (A.data[i] < 0.0)
                         A.grad[i] -= self.grad[i];
                     }
                   },
                   "abs");
}

// ---------- reductions ----------

Tensor sum(const Tensor& a) {
  const auto ad = a.data();
  double s = 0.0;
  for (double v : ad) s += v;
  return make_node({}, {s}, {a},
                   [](TensorNode& self) {
                     auto& A = *self.parents[0];
                     if (!A.requires_grad) return;
                     A.ensure_grad();
                     const double g = self.grad[0];
                     for (std::size_t i = 0; i < A.size(); ++i) A.grad[i] += g;
                   },
                   "sum");
}

namespace {

// Generic axis reduction: returns output shape and a per-input-element output
// index map builder. Axes are removed from the shape.
struct ReducePlan {
  std::vector<int> out_shape;
  std::vector<std::size_t> out_index;  // input linear idx -> output linear idx
  std::size_t count = 1;               // elements reduced per output
};

ReducePlan plan_reduce(const std::vector<int>& shape, std::vector<int> axes,
                       const char* op) {
  std::sort(axes.begin(), axes.end());
  if (std::adjacent_find(axes.begin(), axes.end()) != axes.end())
    throw ShapeError(std::string(op) + ": duplicate axis");
  std::vector<bool> reduced(shape.size(), false);
  for (int ax : axes) {
    if (ax < 0 || ax >= static_cast<int>(shape.size()))
      throw ShapeError(std::string(op) + ": axis out of range");
    reduced[ax] = true;
  }
  ReducePlan plan;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (reduced[i])
      plan.count *= static_cast<std::size_t>(shape[i]);
    else
      plan.out_shape.push_back(shape[i]);
  }
  std::size_t total = 1;
  for (int d : shape) total *= static_cast<std::size_t>(d);
  plan.out_index.resize(total);
  std::vector<int> idx(shape.size(), 0);
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t out = 0;
    for (std::size_t i = 0; i < shape.size(); ++i)
      if (!reduced[i]) out = out * static_cast<std::size_t>(shape[i]) + idx[i];
    plan.out_index[flat] = out;
    for (int i = static_cast<int>(shape.size()) - 1; i >= 0; --i) {
      if (++idx[i] < shape[i]) break;
      idx[i] = 0;
    }
  }
  return plan;
}

Tensor reduce_axes(const Tensor& a, const std::vector<int>& axes, bool take_mean,
                   const char* op) {
  auto plan = plan_reduce(a.shape(), axes, op);
  std::size_t out_n = 1;
  for (int d : plan.out_shape) out_n *= static_cast<std::size_t>(d);
  std::vector<double> out(out_n, 0.0);
  const auto ad = a.data();
  for (std::size_t i = 0; i < ad.size(); ++i) out[plan.out_index[i]] += ad[i];
  const double scale = take_mean ? 1.0 / static_cast<double>(plan.count) : 1.0;
  if (take_mean)
    for (double& v : out) v *= scale;
  auto out_index = std::make_shared<std::vector<std::size_t>>(std::move(plan.out_index));
  return make_node(plan.out_shape, std::move(out), {a},
                   [out_index, scale](TensorNode& self) {
                     auto& A = *self.parents[0];
                     if (!A.requires_grad) return;
                     A.ensure_grad();
                     for (std::size_t i = 0; i < A.size(); ++i)
                       A.grad[i] += self.grad[(*out_index)[i]] * scale;
                   },
                   op);
}

}  // namespace

Tensor sum(const Tensor& a, const std::vector<int>& axes) {
  return reduce_axes(a, axes, false, "sum");
}

Tensor mean(const Tensor& a, const std::vector<int>& axes) {
  return reduce_axes(a, axes, true, "mean");
}

Tensor gap(const Tensor& a) {
  require_rank(a, 3, "gap");
  return mean(a, {0, 1});
}

Tensor softmax(const Tensor& v) {
  require_rank(v, 1, "softmax");
  const auto vd = v.data();
  if (vd.empty()) throw ShapeError("softmax: empty input");
  double m = vd[0];
  for (double x : vd) m = std::max(m, x);
  std::vector<double> out(vd.size());
  double z = 0.0;
  for (std::size_t i = 0; i < vd.size(); ++i) {
    out[i] = std::exp(vd[i] - m);
    z += out[i];
  }
  for (double& x : out) x /= z;
  return make_node(v.shape(), std::move(out), {v},
                   [](TensorNode& self) {
                     auto& A = *self.parents[0];
                     if (!A.requires_grad) return;
                     A.ensure_grad();
                     double dotgs = 0.0;
                     for (std::size_t i = 0; i < self.size(); ++i)
                       dotgs += self.grad[i] * self.data[i];
                     for (std::size_t i = 0; i < self.size(); ++i)
                       A.grad[i] += self.data[i] * (self.grad[i] - dotgs);
                   },
                   "softmax");
}

Tensor l2norm(const Tensor& v) {
  require_rank(v, 1, "l2norm");
  const auto vd = v.data();
  double s = 0.0;
  for (double x : vd) s += x * x;
  const double n = std::sqrt(s);
  return make_node({}, {n}, {v},
                   [](TensorNode& self) {
                     auto& A = *self.parents[0];
                     if (!A.requires_grad) return;
                     const double n = self.data[0];
                     if (n == 0.0) return;  // subgradient 0 at the origin
                     A.ensure_grad();
                     const double g = self.grad[0] / n;
                     for (std::size_t i = 0; i < A.size(); ++i)
                       A.grad[i] += g * A.data[i];
                   },
                   "l2norm");
}

Tensor dot(const Tensor& a, const Tensor& b) {
  require_rank(a, 1, "dot");
  require_same_shape(a, b, "dot");
  const auto ad = a.data();
  const auto bd = b.data();
  double s = 0.0;
  for (std::size_t i = 0; i < ad.size(); ++i) s += ad[i] * bd[i];
  return make_node({}, {s}, {a, b},
                   [](TensorNode& self) {
                     auto& A = *self.parents[0];
                     auto& B = *self.parents[1];
                     const double g = self.grad[0];
                     if (A.requires_grad) {
                       A.ensure_grad();
                       for (std::size_t i = 0; i < A.size(); ++i)
                         A.grad[i] += g * B.data[i];
                     }
                     if (B.requires_grad) {
                       B.ensure_grad();
                       for (std::size_t i = 0; i < B.size(); ++i)
                         B.grad[i] += g * A.data[i];
                     }
                   },
                   "dot");
}

// ---------- shape ----------

Tensor reshape(const Tensor& a, std::vector<int> shape) {
  if (shape_elems(shape) != a.size())
    throw ShapeError("reshape: element count mismatch");
  std::vector<double> out(a.data().begin(), a.data().end());
  return make_node(std::move(shape), std::move(out), {a},
                   [](TensorNode& self) {
                     auto& A = *self.parents[0];
                     if (!A.requires_grad) return;
                     A.ensure_grad();
                     for (std::size_t i = 0; i < self.size(); ++i)
                       A.grad[i] += self.grad[i];
                   },
                   "reshape");
}

Tensor slice(const Tensor& v, int start, int length) {
  require_rank(v, 1, "slice");
  if (start < 0 || length <= 0 || start + length > v.dim(0))
    throw ShapeError("slice: range out of bounds");
  const auto vd = v.data();
  std::vector<double> out(vd.begin() + start, vd.begin() + start + length);
  return make_node({length}, std::move(out), {v},
                   [start](TensorNode& self) {
                     auto& A = *self.parents[0];
                     if (!A.requires_grad) return;
                     A.ensure_grad();
                     for (std::size_t i = 0; i < self.size(); ++i)
                       A.grad[static_cast<std::size_t>(start) + i] += self.grad[i];
                   },
                   "slice");
}

Tensor slice_channels(const Tensor& map, int start, int length) {
  require_rank(map, 3, "slice_channels");
  const int h = map.dim(0), w = map.dim(1), c = map.dim(2);
  if (start < 0 || length <= 0 || start + length > c)
    throw ShapeError("slice_channels: channel range out of bounds");
  const auto md = map.data();
  std::vector<double> out(static_cast<std::size_t>(h) * w * length);
  for (std::size_t p = 0; p < static_cast<std::size_t>(h) * w; ++p)
    for (int j = 0; j < length; ++j)
      out[p * length + j] = md[p * c + start + j];
  return make_node({h, w, length}, std::move(out), {map},
                   [start, c, length](TensorNode& self) {
                     auto& A = *self.parents[0];
                     if (!A.requires_grad) return;
                     A.ensure_grad();
                     const std::size_t pixels = self.size() / length;
                     for (std::size_t p = 0; p < pixels; ++p)
                       for (int j = 0; j < length; ++j)
                         A.grad[p * c + start + j] += self.grad[p * length + j];
                   },
                   "slice_channels");
}

Tensor concat(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat: no parts");
  std::vector<double> out;
  std::vector<int> offsets;
  int total = 0;
  for (const auto& p : parts) {
    require_rank(p, 1, "concat");
    offsets.push_back(total);
    total += p.dim(0);
    out.insert(out.end(), p.data().begin(), p.data().end());
  }
  return make_node({total}, std::move(out), parts,
                   [offsets](TensorNode& self) {
                     for (std::size_t k = 0; k < self.parents.size(); ++k) {
                       auto& P = *self.parents[k];
                       if (!P.requires_grad) continue;
                       P.ensure_grad();
                       for (std::size_t i = 0; i < P.size(); ++i)
                         P.grad[i] += self.grad[static_cast<std::size_t>(offsets[k]) + i];
                     }
                   },
                   "concat");
}

Tensor stack_scalars(const std::vector<Tensor>& scalars) {
  if (scalars.empty()) throw ShapeError("stack_scalars: no inputs");
  std::vector<double> out;
  for (const auto& s : scalars) {
    require_rank(s, 0, "stack_scalars");
    out.push_back(s.value());
  }
  return make_node({static_cast<int>(scalars.size())}, std::move(out), scalars,
                   [](TensorNode& self) {
                     for (std::size_t k = 0; k < self.parents.size(); ++k) {
                       auto& P = *self.parents[k];
                       if (!P.requires_grad) continue;
                       P.ensure_grad();
                       P.grad[0] += self.grad[k];
                     }
                   },
                   "stack_scalars");
}

// ---------- spatial ----------

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              int dilation) {
  require_rank(input, 3, "conv2d");
  if (kernel.rank() != 4) throw ShapeError("conv2d: kernel must be K x K x Cin x Cout");
  const int h = input.dim(0), w = input.dim(1), ci = input.dim(2);
  const int k = kernel.dim(0);
  if (kernel.dim(1) != k) throw ShapeError("conv2d: kernel must be square");
  if (k % 2 == 0) throw ShapeError("conv2d: kernel size must be odd");
  if (kernel.dim(2) != ci)
    throw ShapeError("conv2d: kernel input channels do not match input");
  const int co = kernel.dim(3);
  require_rank(bias, 1, "conv2d");
  if (bias.dim(0) != co) throw ShapeError("conv2d: bias length must equal Cout");
  if (dilation < 1) throw DomainError("conv2d: dilation must be >= 1");

  std::vector<double> out(static_cast<std::size_t>(h) * w * co);
  kernels::conv2d_forward(input.data().data(), h, w, ci, kernel.data().data(), k, co,
                          bias.data().data(), dilation, out.data());
  return make_node({h, w, co}, std::move(out), {input, kernel, bias},
                   [h, w, ci, k, co, dilation](TensorNode& self) {
                     auto& in = *self.parents[0];
                     auto& ker = *self.parents[1];
                     auto& b = *self.parents[2];
                     if (in.requires_grad) {
                       in.ensure_grad();
                       kernels::conv2d_backward_input(self.grad.data(), h, w, co,
                                                      ker.data.data(), k, ci, dilation,
                                                      in.grad.data());
                     }
                     if (ker.requires_grad) {
                       ker.ensure_grad();
                       kernels::conv2d_backward_kernel(in.data.data(), h, w, ci,
                                                       self.grad.data(), co, k, dilation,
                                                       ker.grad.data());
                     }
                     if (b.requires_grad) {
                       b.ensure_grad();
                       kernels::conv2d_backward_bias(self.grad.data(), h, w, co,
                                                     b.grad.data());
                     }
                   },
                   "conv2d");
}

Tensor meanpool2(const Tensor& map) {
  require_rank(map, 3, "meanpool2");
  const int h = map.dim(0), w = map.dim(1), c = map.dim(2);
  if (h % 2 != 0 || w % 2 != 0)
    throw ShapeError("meanpool2: spatial dimensions must be even");
  const int oh = h / 2, ow = w / 2;
  const auto md = map.data();
  std::vector<double> out(static_cast<std::size_t>(oh) * ow * c);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x)
      for (int ch = 0; ch < c; ++ch) {
        const std::size_t base = (static_cast<std::size_t>(2 * y) * w + 2 * x) * c + ch;
        const double s = md[base] + md[base + c] +
                         md[base + static_cast<std::size_t>(w) * c] +
                         md[base + static_cast<std::size_t>(w) * c + c];
        out[(static_cast<std::size_t>(y) * ow + x) * c + ch] = 0.25 * s;
      }
  return make_node({oh, ow, c}, std::move(out), {map},
                   [h, w, c, oh, ow](TensorNode& self) {
                     auto& A = *self.parents[0];
                     if (!A.requires_grad) return;
                     A.ensure_grad();
                     for (int y = 0; y < oh; ++y)
                       for (int x = 0; x < ow; ++x)
                         for (int ch = 0; ch < c; ++ch) {
                           const double g =
                               0.25 * self.grad[(static_cast<std::size_t>(y) * ow + x) * c + ch];
                           const std::size_t base =
                               (static_cast<std::size_t>(2 * y) * w + 2 * x) * c + ch;
                           A.grad[base] += g;
                           A.grad[base + c] += g;
                           A.grad[base + static_cast<std::size_t>(w) * c] += g;
                           A.grad[base + static_cast<std::size_t>(w) * c + c] += g;
                         }
                   },
                   "meanpool2");
}

Tensor upsample_bilinear(const Tensor& map, int factor) {
  require_rank(map, 3, "upsample_bilinear");
  if (factor < 1) throw DomainError("upsample_bilinear: factor must be >= 1");
  const int h = map.dim(0), w = map.dim(1), c = map.dim(2);
  const int oh = h * factor, ow = w * factor;
  const double sy = oh > 1 ? static_cast<double>(h - 1) / (oh - 1) : 0.0;
  const double sx = ow > 1 ? static_cast<double>(w - 1) / (ow - 1) : 0.0;
  const auto md = map.data();
  std::vector<double> out(static_cast<std::size_t>(oh) * ow * c);
  for (int oy = 0; oy < oh; ++oy) {
    const double fy = oy * sy;
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, h - 1);
    const double wy = fy - y0;
    for (int ox = 0; ox < ow; ++ox) {
      const double fx = ox * sx;
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, w - 1);
      const double wx = fx - x0;
      const std::size_t o = (static_cast<std::size_t>(oy) * ow + ox) * c;
      const std::size_t i00 = (static_cast<std::size_t>(y0) * w + x0) * c;
      const std::size_t i01 = (static_cast<std::size_t>(y0) * w + x1) * c;
      const std::size_t i10 = (static_cast<std::size_t>(y1) * w + x0) * c;
      const std::size_t i11 = (static_cast<std::size_t>(y1) * w + x1) * c;
      for (int ch = 0; ch < c; ++ch)
        out[o + ch] = (1 - wy) * ((1 - wx) * md[i00 + ch] + wx * md[i01 + ch]) +
                      wy * ((1 - wx) * md[i10 + ch] + wx * md[i11 + ch]);
    }
  }
  return make_node({oh, ow, c}, std::move(out), {map},
                   [h, w, c, oh, ow, sy, sx](TensorNode& self) {
                     auto& A = *self.parents[0];
                     if (!A.requires_grad) return;
                     A.ensure_grad();
                     for (int oy = 0; oy < oh; ++oy) {
                       const double fy = oy * sy;
                       const int y0 = static_cast<int>(fy);
                       const int y1 = std::min(y0 + 1, h - 1);
                       const double wy = fy - y0;
                       for (int ox = 0; ox < ow; ++ox) {
                         const double fx = ox * sx;
                         const int x0 = static_cast<int>(fx);
                         const int x1 = std::min(x0 + 1, w - 1);
                         const double wx = fx - x0;
                         const std::size_t o = (static_cast<std::size_t>(oy) * ow + ox) * c;
                         const std::size_t i00 = (static_cast<std::size_t>(y0) * w + x0) * c;
                         const std::size_t i01 = (static_cast<std::size_t>(y0) * w + x1) * c;
                         const std::size_t i10 = (static_cast<std::size_t>(y1) * w + x0) * c;
                         const std::size_t i11 = (static_cast<std::size_t>(y1) * w + x1) * c;
                         for (int ch = 0; ch < c; ++ch) {
                           const double g = self.grad[o + ch];
                           A.grad[i00 + ch] += (1 - wy) * (1 - wx) * g;
                           A.grad[i01 + ch] += (1 - wy) * wx * g;
                           A.grad[i10 + ch] += wy * (1 - wx) * g;
                           A.grad[i11 + ch] += wy * wx * g;
                         }
                       }
                     }
                   },
                   "upsample_bilinear");
}

Tensor mul_spatial(const Tensor& map, const Tensor& field) {
  require_rank(map, 3, "mul_spatial");
  require_rank(field, 2, "mul_spatial");
  const int h = map.dim(0), w = map.dim(1), c = map.dim(2);
  if (field.dim(0) != h || field.dim(1) != w)
    throw ShapeError("mul_spatial: field shape mismatch");
  const auto md = map.data();
  const auto fd = field.data();
  std::vector<double> out(md.size());
  for (std::size_t p = 0; p < static_cast<std::size_t>(h) * w; ++p)
    for (int ch = 0; ch < c; ++ch) out[p * c + ch] = md[p * c + ch] * fd[p];
  return make_node({h, w, c}, std::move(out), {map, field},
                   [c](TensorNode& self) {
                     auto& M = *self.parents[0];
                     auto& F = *self.parents[1];
                     const std::size_t pixels = self.size() / c;
                     if (M.requires_grad) {
                       M.ensure_grad();
                       for (std::size_t p = 0; p < pixels; ++p)
                         for (int ch = 0; ch < c; ++ch)
                           M.grad[p * c + ch] += self.grad[p * c + ch] * F.data[p];
                     }
                     if (F.requires_grad) {
                       F.ensure_grad();
                       for (std::size_t p = 0; p < pixels; ++p) {
                         double s = 0.0;
                         for (int ch = 0; ch < c; ++ch)
                           s += self.grad[p * c + ch] * M.data[p * c + ch];
                         F.grad[p] += s;
                       }
                     }
                   },
                   "mul_spatial");
}

Tensor group_sum(const Tensor& map, int groups) {
  require_rank(map, 3, "group_sum");
  const int h = map.dim(0), w = map.dim(1), c = map.dim(2);
  if (groups < 1 || c % groups != 0)
    throw ShapeError("group_sum: channels not divisible into groups");
  const int d = c / groups;
  const auto md = map.data();
  std::vector<double> out(static_cast<std::size_t>(h) * w * d, 0.0);
  for (std::size_t p = 0; p < static_cast<std::size_t>(h) * w; ++p)
    for (int b = 0; b < groups; ++b)
      for (int j = 0; j < d; ++j) out[p * d + j] += md[p * c + b * d + j];
  return make_node({h, w, d}, std::move(out), {map},
                   [c, d, groups](TensorNode& self) {
                     auto& A = *self.parents[0];
                     if (!A.requires_grad) return;
                     A.ensure_grad();
                     const std::size_t pixels = self.size() / d;
                     for (std::size_t p = 0; p < pixels; ++p)
                       for (int b = 0; b < groups; ++b)
                         for (int j = 0; j < d; ++j)
                           A.grad[p * c + b * d + j] += self.grad[p * d + j];
                   },
                   "group_sum");
}

Tensor group_norms(const Tensor& map, int groups) {
  require_rank(map, 3, "group_norms");
  const int h = map.dim(0), w = map.dim(1), c = map.dim(2);
  if (groups < 1 || c % groups != 0)
    throw ShapeError("group_norms: channels not divisible into groups");
  const int d = c / groups;
  const auto md = map.data();
  std::vector<double> out(static_cast<std::size_t>(h) * w * groups);
  for (std::size_t p = 0; p < static_cast<std::size_t>(h) * w; ++p)
    for (int b = 0; b < groups; ++b) {
      double s = 0.0;
      for (int j = 0; j < d; ++j) {
        const double v = md[p * c + b * d + j];
        s += v * v;
      }
      out[p * groups + b] = std::sqrt(s);
    }
  return make_node({h, w, groups}, std::move(out), {map},
                   [c, d, groups](TensorNode& self) {
                     auto& A = *self.parents[0];
                     if (!A.requires_grad) return;
                     A.ensure_grad();
                     const std::size_t pixels = self.size() / groups;
                     for (std::size_t p = 0; p < pixels; ++p)
                       for (int b = 0; b < groups; ++b) {
                         const double n = self.data[p * groups + b];
                         if (n == 0.0) continue;  // subgradient 0
                         const double g = self.grad[p * groups + b] / n;
                         for (int j = 0; j < d; ++j)
                           A.grad[p * c + b * d + j] += g * A.data[p * c + b * d + j];
                       }
                   },
                   "group_norms");
}

Tensor channel_matmul(const Tensor& map, const Tensor& mat) {
  require_rank(map, 3, "channel_matmul");
  require_rank(mat, 2, "channel_matmul");
  const int h = map.dim(0), w = map.dim(1), a = map.dim(2);
  if (mat.dim(0) != a) throw ShapeError("channel_matmul: inner dimensions differ");
  const int c = mat.dim(1);
  const auto md = map.data();
  const auto kd = mat.data();
  std::vector<double> out(static_cast<std::size_t>(h) * w * c, 0.0);
  for (std::size_t p = 0; p < static_cast<std::size_t>(h) * w; ++p)
    for (int i = 0; i < a; ++i) {
      const double v = md[p * a + i];
      for (int j = 0; j < c; ++j) out[p * c + j] += v * kd[static_cast<std::size_t>(i) * c + j];
    }
  return make_node({h, w, c}, std::move(out), {map, mat},
                   [a, c](TensorNode& self) {
                     auto& M = *self.parents[0];
                     auto& K = *self.parents[1];
                     const std::size_t pixels = self.size() / c;
                     if (M.requires_grad) {
                       M.ensure_grad();
                       for (std::size_t p = 0; p < pixels; ++p)
                         for (int i = 0; i < a; ++i) {
                           double s = 0.0;
                           for (int j = 0; j < c; ++j)
                             s += self.grad[p * c + j] * K.data[static_cast<std::size_t>(i) * c + j];
                           M.grad[p * a + i] += s;
                         }
                     }
                     if (K.requires_grad) {
                       K.ensure_grad();
                       for (std::size_t p = 0; p < pixels; ++p)
                         for (int i = 0; i < a; ++i) {
                           const double v = M.data[p * a + i];
                           for (int j = 0; j < c; ++j)
                             K.grad[static_cast<std::size_t>(i) * c + j] += v * self.grad[p * c + j];
                         }
                     }
                   },
                   "channel_matmul");
}

Tensor broadcast_concat(const Tensor& map, const Tensor& vec) {
  require_rank(map, 3, "broadcast_concat");
  require_rank(vec, 1, "broadcast_concat");
  const int h = map.dim(0), w = map.dim(1), c1 = map.dim(2);
  const int c2 = vec.dim(0);
  const auto md = map.data();
  const auto vd = vec.data();
  std::vector<double> out(static_cast<std::size_t>(h) * w * (c1 + c2));
  for (std::size_t p = 0; p < static_cast<std::size_t>(h) * w; ++p) {
    for (int j = 0; j < c1; ++j) out[p * (c1 + c2) + j] = md[p * c1 + j];
    for (int j = 0; j < c2; ++j) out[p * (c1 + c2) + c1 + j] = vd[j];
  }
  return make_node({h, w, c1 + c2}, std::move(out), {map, vec},
                   [c1, c2](TensorNode& self) {
                     auto& M = *self.parents[0];
                     auto& V = *self.parents[1];
                     const std::size_t pixels = self.size() / (c1 + c2);
                     if (M.requires_grad) {
                       M.ensure_grad();
                       for (std::size_t p = 0; p < pixels; ++p)
                         for (int j = 0; j < c1; ++j)
                           M.grad[p * c1 + j] += self.grad[p * (c1 + c2) + j];
                     }
                     if (V.requires_grad) {
                       V.ensure_grad();
                       for (std::size_t p = 0; p < pixels; ++p)
                         for (int j = 0; j < c2; ++j)
                           V.grad[j] += self.grad[p * (c1 + c2) + c1 + j];
                     }
                   },
                   "broadcast_concat");
}

Tensor cosine_map(const Tensor& map, const Tensor& vec) {
  require_rank(map, 3, "cosine_map");
  require_rank(vec, 1, "cosine_map");
  const int h = map.dim(0), w = map.dim(1), d = map.dim(2);
  if (vec.dim(0) != d) throw ShapeError("cosine_map: vector length mismatch");
  const auto md = map.data();
  const auto vd = vec.data();
  double nb2 = 0.0;
  for (double v : vd) nb2 += v * v;
  const double nb = std::sqrt(nb2);
  if (nb < 1e-12) throw DomainError("cosine_map: degenerate reference vector");
  std::vector<double> out(static_cast<std::size_t>(h) * w, 0.0);
  for (std::size_t p = 0; p < out.size(); ++p) {
    double na2 = 0.0, dp = 0.0;
    for (int j = 0; j < d; ++j) {
      const double a = md[p * d + j];
      na2 += a * a;
      dp += a * vd[j];
    }
    const double na = std::sqrt(na2);
    out[p] = na == 0.0 ? 0.0 : dp / (na * nb);
  }
  return make_node({h, w, 1}, std::move(out), {map, vec},
                   [d, nb](TensorNode& self) {
                     auto& M = *self.parents[0];
                     auto& V = *self.parents[1];
                     const std::size_t pixels = self.size();
                     for (std::size_t p = 0; p < pixels; ++p) {
                       const double g = self.grad[p];
                       if (g == 0.0) continue;
                       double na2 = 0.0;
                       for (int j = 0; j < d; ++j) {
                         const double a = M.data[p * d + j];
                         na2 += a * a;
                       }
                       const double na = std::sqrt(na2);
                       if (na == 0.0) continue;
                       const double cosv = self.data[p];
                       if (M.requires_grad) {
                         M.ensure_grad();
                         for (int j = 0; j < d; ++j)
                           M.grad[p * d + j] +=
                               g * (V.data[j] / (na * nb) - cosv * M.data[p * d + j] / na2);
                       }
                       if (V.requires_grad) {
                         V.ensure_grad();
                         for (int j = 0; j < d; ++j)
                           V.grad[j] +=
                               g * (M.data[p * d + j] / (na * nb) - cosv * V.data[j] / (nb * nb));
                       }
                     }
                   },
                   "cosine_map");
}

// ---------- losses ----------

Tensor cross_entropy_with_logits(const Tensor& logits, const Tensor& mask) {
  require_rank(logits, 3, "cross_entropy_with_logits");
  require_rank(mask, 2, "cross_entropy_with_logits");
  const int h = logits.dim(0), w = logits.dim(1);
  if (logits.dim(2) != 2)
    throw ShapeError("cross_entropy_with_logits: logits must have 2 channels");
  if (mask.dim(0) != h || mask.dim(1) != w)
    throw ShapeError("cross_entropy_with_logits: mask shape mismatch");
  if (mask.requires_grad())
    throw TensorError("cross_entropy_with_logits: not differentiable w.r.t. mask");
  const auto ld = logits.data();
  const auto mdk = mask.data();
  for (double v : mdk)
    if (v != 0.0 && v != 1.0)
      throw DomainError("cross_entropy_with_logits: mask must be binary");
  const std::size_t n = static_cast<std::size_t>(h) * w;
  double total = 0.0;
  for (std::size_t p = 0; p < n; ++p) {
    const double z0 = ld[2 * p], z1 = ld[2 * p + 1];
    const double m = std::max(z0, z1);
    const double lse = m + std::log(std::exp(z0 - m) + std::exp(z1 - m));
    total += lse - (mdk[p] == 1.0 ? z1 : z0);
  }
  return make_node({}, {total / static_cast<double>(n)}, {logits, mask},
                   [n](TensorNode& self) {
                     auto& L = *self.parents[0];
                     auto& M = *self.parents[1];
                     if (!L.requires_grad) return;
                     L.ensure_grad();
                     const double g = self.grad[0] / static_cast<double>(n);
                     for (std::size_t p = 0; p < n; ++p) {
                       const double z0 = L.data[2 * p], z1 = L.data[2 * p + 1];
                       const double m = std::max(z0, z1);
                       const double e0 = std::exp(z0 - m), e1 = std::exp(z1 - m);
                       const double s0 = e0 / (e0 + e1), s1 = e1 / (e0 + e1);
                       const double t = M.data[p];
                       L.grad[2 * p] += g * (s0 - (1.0 - t));
                       L.grad[2 * p + 1] += g * (s1 - t);
                     }
                   },
                   "cross_entropy_with_logits");
}

// ---------- verification ----------

double grad_check(const std::function<Tensor()>& f, const std::vector<Tensor>& params,
                  int n_samples, std::uint64_t seed) {
  if (params.empty()) throw TensorError("grad_check: no parameters");
  if (n_samples < 1) throw TensorError("grad_check: n_samples must be >= 1");
  std::size_t total = 0;
  for (const auto& p : params) {
    if (!p.requires_grad() || !p.node()->is_leaf())
      throw TensorError("grad_check: params must be requires_grad leaves");
    total += p.size();
  }

  // Analytic pass.
  std::vector<Tensor> mut = params;
  for (auto& p : mut) p.zero_grad();
  Tensor out = f();
  if (!std::isfinite(out.value()))
    throw NonFiniteError("grad_check: f returned a non-finite value");
  out.backward();
  std::vector<std::vector<double>> analytic;
  analytic.reserve(mut.size());
  for (auto& p : mut)
    analytic.emplace_back(p.grad().begin(), p.grad().end());

  Rng rng(seed);
  double max_rel = 0.0;
  for (int s = 0; s < n_samples; ++s) {
    std::size_t coord = rng.next_u64() % total;
    std::size_t pi = 0;
    while (coord >= mut[pi].size()) {
      coord -= mut[pi].size();
      ++pi;
    }
    auto buf = mut[pi].mutable_data();
    const double theta = buf[coord];
    const double h = 1e-5 * std::max(1.0, std::fabs(theta));
    buf[coord] = theta + h;
    const double f_plus = f().value();
    buf[coord] = theta - h;
    const double f_minus = f().value();
    buf[coord] = theta;
    if (!std::isfinite(f_plus) || !std::isfinite(f_minus))
      throw NonFiniteError("grad_check: f returned a non-finite value");
    const double g_fd = (f_plus - f_minus) / (2.0 * h);
    const double g_an = analytic[pi][coord];
    const double rel =
        std::fabs(g_an - g_fd) / std::max(1e-8, std::fabs(g_an) + std::fabs(g_fd));
    max_rel = std::max(max_rel, rel);
  }
  return max_rel;
}

}  // namespace asr
