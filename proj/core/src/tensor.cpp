#include "lvsa/tensor.hpp"

#include <sstream>

#include "lvsa/error.hpp"

namespace lvsa {

namespace {
thread_local GradTape* t_active_tape = nullptr;
}

std::size_t numel(const Shape& shape) noexcept {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

std::span<double> TensorNode::ensure_grad() {
  if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  return grad;
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : node_(std::make_shared<TensorNode>()) {
  if (shape.empty()) throw_usage("Tensor: shape must have at least one dimension");
  for (auto d : shape) {
    if (d == 0) throw_usage("Tensor: dimensions must be positive, got " + to_string(shape));
  }
  if (numel(shape) != values.size()) {
    throw_usage("Tensor: " + std::to_string(values.size()) + " values for shape " +
                to_string(shape));
  }
  node_->shape = std::move(shape);
  node_->value = std::move(values);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

double Tensor::item() const {
  if (size() != 1) throw_usage("Tensor::item on tensor of shape " + to_string(shape()));
  return node_->value[0];
}

void Tensor::zero_grad() noexcept {
  std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach() const { return Tensor(node_->shape, node_->value, false); }

GradTape::GradTape() : previous_(t_active_tape) { t_active_tape = this; }

GradTape::~GradTape() { t_active_tape = previous_; }

GradTape* GradTape::active() noexcept { return t_active_tape; }

void GradTape::record(const Tensor& output, std::function<void()> backward) {
  entries_.push_back({output.node(), std::move(backward)});
}

void GradTape::backward(const Tensor& loss) {
  if (loss.size() != 1) throw_usage("GradTape::backward: loss must hold a single value");
  loss.node()->ensure_grad()[0] += 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (it->output->grad.empty()) continue;  // unreachable from the loss
    it->backward();
  }
  entries_.clear();
}

NoGradGuard::NoGradGuard() noexcept : saved_(t_active_tape) { t_active_tape = nullptr; }

NoGradGuard::~NoGradGuard() { t_active_tape = saved_; }

namespace detail {

GradTape* recording_tape(std::initializer_list<const Tensor*> inputs) noexcept {
  if (t_active_tape == nullptr) return nullptr;
  for (const Tensor* t : inputs) {
    if (t->requires_grad()) return t_active_tape;
  }
  return nullptr;
}

GradTape* recording_tape(std::span<const Tensor> inputs) noexcept {
  if (t_active_tape == nullptr) return nullptr;
  for (const Tensor& t : inputs) {
    if (t.requires_grad()) return t_active_tape;
  }
  return nullptr;
}

Tensor make_output(Shape shape, std::vector<double> values, GradTape* tape) {
  return Tensor(std::move(shape), std::move(values), tape != nullptr);
}

}  // namespace detail

}  // namespace lvsa
