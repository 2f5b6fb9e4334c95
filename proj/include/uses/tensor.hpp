// Copyright 2026 The uses-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "uses/error.hpp"

namespace uses {

// Global accounting of live tensor bytes; used to verify that segment-wise
// streaming keeps a bounded working set.
class MemoryMeter {
 public:
  static MemoryMeter& instance() {
    static MemoryMeter m;
    return m;
  }
  void add(int64_t bytes) {
    int64_t cur = current_.fetch_add(bytes) + bytes;
    int64_t peak = peak_.load();
    while (cur > peak && !peak_.compare_exchange_weak(peak, cur)) {
    }
  }
  void sub(int64_t bytes) { current_.fetch_sub(bytes); }
  int64_t current() const { return current_.load(); }
  int64_t peak() const { return peak_.load(); }
  void reset_peak() { peak_.store(current_.load()); }

 private:
  std::atomic<int64_t> current_{0};
  std::atomic<int64_t> peak_{0};
};

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

template <typename T>
class Tape;

// Dense row-major N-d array. Copies are shallow (shared storage); values are
// immutable once an op has produced them, gradients accumulate in place.
template <typename T>
class Tensor {
 public:
  struct Storage {
    std::vector<T> value;
    std::vector<T> grad;  // empty until first accumulation
    bool requires_grad = false;
    Tape<T>* tape = nullptr;

    explicit Storage(int64_t n) : value(static_cast<size_t>(n), T(0)) {
      MemoryMeter::instance().add(n * static_cast<int64_t>(sizeof(T)));
    }
    ~Storage() {
      MemoryMeter::instance().sub(
          static_cast<int64_t>((value.size() + grad.size()) * sizeof(T)));
    }
    void ensure_grad() {
      if (grad.empty()) {
        grad.assign(value.size(), T(0));
        MemoryMeter::instance().add(static_cast<int64_t>(grad.size() * sizeof(T)));
      }
    }
  };

  Tensor() = default;

  explicit Tensor(Shape shape)
      : shape_(std::move(shape)),
        st_(std::make_shared<Storage>(shape_numel(shape_))) {
    for (int64_t d : shape_)
      check_shape(d >= 0, "negative extent in shape " + shape_str(shape_));
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

  static Tensor full(Shape shape, T v) {
    Tensor t(std::move(shape));
    for (auto& x : t.st_->value) x = v;
    return t;
  }

  static Tensor from(Shape shape, std::vector<T> data) {
    Tensor t(std::move(shape));
    check_shape(static_cast<int64_t>(data.size()) == t.numel(),
                "data length does not match shape " + shape_str(t.shape_));
    t.st_->value = std::move(data);
    return t;
  }

  static Tensor scalar(T v) { return full({}, v); }

  bool defined() const { return st_ != nullptr; }
  const Shape& shape() const { return shape_; }
  int64_t ndim() const { return static_cast<int64_t>(shape_.size()); }
  int64_t size(int64_t axis) const { return shape_.at(static_cast<size_t>(axis)); }
  int64_t numel() const { return st_ ? static_cast<int64_t>(st_->value.size()) : 0; }

  T* data() { return st_->value.data(); }
  const T* data() const { return st_->value.data(); }
  const std::vector<T>& vec() const { return st_->value; }

  T item() const {
    check_shape(numel() == 1, "item() on tensor with numel " + std::to_string(numel()));
    return st_->value[0];
  }

  bool requires_grad() const { return st_ && st_->requires_grad; }
  void set_requires_grad(bool v) { st_->requires_grad = v; }

  Tape<T>* tape() const { return st_ ? st_->tape : nullptr; }

  bool has_grad() const { return st_ && !st_->grad.empty(); }
  const std::vector<T>& grad() const {
    check(has_grad(), "tensor has no gradient");
    return st_->grad;
  }
  // Gradient buffer, allocated (zeroed) on first use.
  T* grad_accum() {
    st_->ensure_grad();
    return st_->grad.data();
  }
  const T* grad_ptr() const { return has_grad() ? st_->grad.data() : nullptr; }
  void zero_grad() {
    if (st_ && !st_->grad.empty()) std::fill(st_->grad.begin(), st_->grad.end(), T(0));
  }

  bool all_finite() const {
    for (const T& v : st_->value)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  Shape strides() const {
    Shape st(shape_.size());
    int64_t acc = 1;
    for (int64_t i = ndim() - 1; i >= 0; --i) {
      st[static_cast<size_t>(i)] = acc;
      acc *= shape_[static_cast<size_t>(i)];
    }
    return st;
  }

  std::shared_ptr<Storage> storage() const { return st_; }

  // Same storage, new shape (numel must match).
  Tensor reshaped_view(Shape shape) const {
    check_shape(shape_numel(shape) == numel(),
                "reshape " + shape_str(shape_) + " -> " + shape_str(shape) +
                    " changes element count");
    Tensor t;
    t.st_ = st_;
    t.shape_ = std::move(shape);
    return t;
  }

  // Deep value copy; drops grad/tape state.
  Tensor clone() const {
    Tensor t(shape_);
    t.st_->value = st_->value;
    return t;
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> t(shape_);
    for (int64_t i = 0; i < numel(); ++i)
      t.data()[i] = static_cast<U>(st_->value[static_cast<size_t>(i)]);
    return t;
  }

 private:
  Shape shape_;
  std::shared_ptr<Storage> st_;
};

// Wengert list: records one closure per executed op, in execution order.
// Execution order is a topological order of the graph, so the reverse sweep
// visits every node exactly once with its output gradient complete.
template <typename T>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  ~Tape() { detach_all(); }

  // Marks a leaf (typically a parameter) so ops on it record onto this tape.
  void watch(Tensor<T>& t) {
    t.storage()->tape = this;
    attached_.push_back(t.storage());
  }

  struct Record {
    const char* name;
    std::function<void()> fn;
    std::vector<std::shared_ptr<typename Tensor<T>::Storage>> inputs;
  };

  void add_record(const char* name, std::function<void()> fn,
                  std::vector<std::shared_ptr<typename Tensor<T>::Storage>> inputs) {
    records_.push_back(Record{name, std::move(fn), std::move(inputs)});
  }

  void note_output(const std::shared_ptr<typename Tensor<T>::Storage>& st) {
    attached_.push_back(st);
  }

  size_t size() const { return records_.size(); }

  void set_check_finite(bool v) { check_finite_ = v; }

  // Reverse sweep from a scalar loss. Gradients of repeated subexpressions
  // accumulate; leaves keep their grads after the sweep.
  void backward(Tensor<T>& loss) {
    check_shape(loss.numel() == 1,
                "backward requires a scalar loss, got shape " + shape_str(loss.shape()));
    check(loss.tape() == this, "loss was not recorded on this tape");
    if (!std::isfinite(static_cast<double>(loss.item())))
      throw NumericError("loss is not finite");
    loss.grad_accum()[0] = T(1);
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
      it->fn();
      if (check_finite_) {
        for (const auto& st : it->inputs) {
          for (const T& g : st->grad)
            if (!std::isfinite(static_cast<double>(g)))
              throw NumericError(std::string("non-finite gradient after backward of '") +
                                 it->name + "'");
        }
      }
    }
  }

  void clear() {
    records_.clear();
    detach_all();
  }

 private:
  void detach_all() {
    for (auto& w : attached_) {
      if (auto s = w.lock()) {
        if (s->tape == this) s->tape = nullptr;
      }
    }
    attached_.clear();
  }

  std::vector<Record> records_;
  std::vector<std::weak_ptr<typename Tensor<T>::Storage>> attached_;
  bool check_finite_ = false;
};

namespace detail {

// Resolves the tape an op should record onto (inputs must agree) and whether
// the output participates in differentiation.
template <typename T>
struct OpContext {
  Tape<T>* tape = nullptr;
  bool needs_grad = false;

  void absorb(const Tensor<T>& t) {
    if (!t.defined()) return;
    if (t.tape()) {
      check(tape == nullptr || tape == t.tape(), "op inputs recorded on different tapes");
      tape = t.tape();
    }
    needs_grad = needs_grad || t.requires_grad();
  }
};

template <typename T, typename... Ts>
OpContext<T> op_context(const Tensor<T>& first, const Ts&... rest) {
  OpContext<T> ctx;
  ctx.absorb(first);
  (ctx.absorb(rest), ...);
  return ctx;
}

// Finalizes an op: tags the output and records the backward closure.
template <typename T, typename F>
void record_op(const char* name, OpContext<T>& ctx, Tensor<T>& out, F&& backward_fn,
               std::initializer_list<Tensor<T>> grad_inputs) {
  if (!ctx.tape || !ctx.needs_grad) return;
  out.set_requires_grad(true);
  out.storage()->tape = ctx.tape;
  ctx.tape->note_output(out.storage());
  std::vector<std::shared_ptr<typename Tensor<T>::Storage>> ins;
  for (const auto& t : grad_inputs)
    if (t.defined() && t.requires_grad()) ins.push_back(t.storage());
  ctx.tape->add_record(name, std::forward<F>(backward_fn), std::move(ins));
}

}  // namespace detail

}  // namespace uses
