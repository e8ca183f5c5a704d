#pragma once

// Dense row-major tensors of doubles with reverse-mode gradient recording.
//
// Operations record a backward closure on the thread's active GradTape when
// at least one input requires a gradient. Without an active tape nothing is
// recorded, which is how evaluation runs. Tapes are confined to the thread
// that created them.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace lvsa {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape) noexcept;
std::string to_string(const Shape& shape);

struct TensorNode {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until a gradient reaches this node
  bool requires_grad = false;

  std::span<double> ensure_grad();
};

class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value);

  [[nodiscard]] bool defined() const noexcept { return node_ != nullptr; }
  [[nodiscard]] const Shape& shape() const noexcept { return node_->shape; }
  [[nodiscard]] std::size_t rank() const noexcept { return node_->shape.size(); }
  [[nodiscard]] std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  [[nodiscard]] std::size_t size() const noexcept { return node_->value.size(); }

  [[nodiscard]] std::span<const double> values() const noexcept { return node_->value; }
  [[nodiscard]] std::span<double> mutable_values() noexcept { return node_->value; }
  [[nodiscard]] double value(std::size_t flat_index) const { return node_->value.at(flat_index); }
  [[nodiscard]] double item() const;

  [[nodiscard]] std::span<const double> grad() const noexcept { return node_->grad; }
  [[nodiscard]] std::span<double> mutable_grad() { return node_->ensure_grad(); }
  [[nodiscard]] bool requires_grad() const noexcept { return node_->requires_grad; }
  void set_requires_grad(bool on) noexcept { node_->requires_grad = on; }
  void zero_grad() noexcept;

  // Fresh leaf holding a copy of the values.
  [[nodiscard]] Tensor detach() const;

  [[nodiscard]] const std::shared_ptr<TensorNode>& node() const noexcept { return node_; }

 private:
  std::shared_ptr<TensorNode> node_;
};

class GradTape {
 public:
  GradTape();
  ~GradTape();
  GradTape(const GradTape&) = delete;
  GradTape& operator=(const GradTape&) = delete;

  [[nodiscard]] static GradTape* active() noexcept;

  void record(const Tensor& output, std::function<void()> backward);
  // Seeds d(loss)/d(loss) = 1, replays the tape in reverse and clears it.
  void backward(const Tensor& loss);
  void clear() noexcept { entries_.clear(); }
  [[nodiscard]] std::size_t size() const noexcept { return entries_.size(); }

 private:
  struct Entry {
    std::shared_ptr<TensorNode> output;
    std::function<void()> backward;
  };
  std::vector<Entry> entries_;
  GradTape* previous_;
};

// Suspends recording on this thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard() noexcept;
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  GradTape* saved_;
};

namespace detail {

// The tape an op should record on, or nullptr when no input needs a gradient.
GradTape* recording_tape(std::initializer_list<const Tensor*> inputs) noexcept;
GradTape* recording_tape(std::span<const Tensor> inputs) noexcept;
// Output tensor that requires grad iff `tape` is non-null.
Tensor make_output(Shape shape, std::vector<double> values, GradTape* tape);

}  // namespace detail

}  // namespace lvsa
