#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace siatrans {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Shape or extent mismatch between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Non-finite values or a degenerate statistic.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An API used outside its contract (wrong mode, class token still attached, ...).
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Unreadable, missing or inconsistent input data.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::uint64_t id = 0;

  std::vector<double>& grad_buffer() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

/// Dense row-major N-d array of doubles with an optional gradient.
///
/// A Tensor is a handle: copies share storage. Operations never mutate their
/// inputs; they allocate a fresh node and, when a Tape is active and any input
/// requires a gradient, record a backward closure on it.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const;
  std::size_t dim() const { return shape().size(); }
  /// Extent along `axis`; negative axes count from the back.
  std::size_t size(int axis) const;
  std::size_t numel() const { return data().size(); }

  std::span<const double> data() const;
  /// Direct write access. Only meaningful for leaves (parameters, inputs).
  std::span<double> mutable_data();
  double item() const;
  double at(std::initializer_list<std::size_t> index) const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool on);
  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  /// Value copy that is not connected to any tape.
  Tensor detach() const;
  bool same_node(const Tensor& other) const { return node_ == other.node_; }
  std::uint64_t id() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Ordered record of backward closures.
///
/// Operations are appended in execution order, so replaying the entries in
/// reverse is a reverse topological order of the computation.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(std::function<void()> backward_fn);
  /// Seeds d(root)/d(root) = 1 and replays every entry in reverse.
  void backward(const Tensor& root);
  std::size_t size() const { return entries_.size(); }
  void clear() { entries_.clear(); }

  /// Tape for the current thread, or nullptr when gradients are off.
  static Tape* active();

 private:
  friend class TapeScope;
  std::vector<std::function<void()>> entries_;
};

/// Makes `tape` the active tape of this thread for the scope's lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

/// Disables recording for the scope's lifetime.
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* previous_;
};

}  // namespace siatrans
