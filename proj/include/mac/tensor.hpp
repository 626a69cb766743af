#pragma once

// Define-by-run reverse-mode differentiation over dense row-major 2-D
// double tensors. A Tape records every operation whose inputs require a
// gradient; Tape::backward replays the records in reverse.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace mac {

/// Row-validity flags: 1 = real, 0 = padding. An empty mask means all rows are real.
using Mask = std::span<const std::uint8_t>;

namespace detail {

struct TensorData {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;
  std::vector<double> grad;
  bool requires_grad = false;
  // Identity of the producing node; tape_id 0 marks a leaf.
  std::uint64_t tape_id = 0;
  std::size_t node = 0;
};

}  // namespace detail

class Tape;

/// Shared handle to a 2-D tensor. Copies alias the same storage.
class Tensor {
 public:
  Tensor();

  static Tensor zeros(std::size_t rows, std::size_t cols, bool requires_grad = false);
  static Tensor from(std::size_t rows, std::size_t cols, std::vector<double> values,
                     bool requires_grad = false);
  /// 1 x n row vector.
  static Tensor row(std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  std::size_t rows() const { return data_->rows; }
  std::size_t cols() const { return data_->cols; }
  std::size_t size() const { return data_->values.size(); }
  bool requires_grad() const { return data_->requires_grad; }
  bool is_leaf() const { return data_->tape_id == 0; }

  double operator()(std::size_t r, std::size_t c) const { return data_->values[r * data_->cols + c]; }
  double& operator()(std::size_t r, std::size_t c) { return data_->values[r * data_->cols + c]; }
  /// Value of a 1x1 tensor.
  double item() const;

  std::span<double> values() { return data_->values; }
  std::span<const double> values() const { return data_->values; }
  /// Empty unless requires_grad().
  std::span<double> grad() { return data_->grad; }
  std::span<const double> grad() const { return data_->grad; }

  void zero_grad();
  /// Deep copy of the values as a fresh leaf.
  Tensor clone(bool requires_grad = false) const;
  bool aliases(const Tensor& other) const { return data_ == other.data_; }

  std::string shape_string() const;

 private:
  explicit Tensor(std::shared_ptr<detail::TensorData> data) : data_(std::move(data)) {}

  std::shared_ptr<detail::TensorData> data_;
  friend class Tape;
};

/// Backward rule: receives the upstream gradient of the node output, the
/// output values, and one gradient buffer per parent (empty when that parent
/// needs no gradient).
using BackwardFn = std::function<void(std::span<const double> upstream, std::span<const double> output,
                                      std::span<const std::span<double>> parents)>;

class Tape {
 public:
  /// A non-recording tape evaluates operations without keeping any history.
  explicit Tape(bool recording = true);
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  bool recording() const { return recording_; }
  std::size_t size() const { return nodes_.size(); }

  /// Creates the output tensor of an operation. A node is recorded only when
  /// the tape is recording and some parent requires a gradient.
  Tensor record(std::size_t rows, std::size_t cols, std::vector<double> values,
                std::vector<Tensor> parents, BackwardFn backward);

  /// Accumulates d(loss)/d(t) into every requires_grad tensor reachable from
  /// `loss`. Gradients add to existing contents; nothing is reset.
  void backward(const Tensor& loss);

 private:
  struct Node {
    std::shared_ptr<detail::TensorData> output;
    std::vector<std::shared_ptr<detail::TensorData>> parents;
    BackwardFn backward;
  };

  std::uint64_t id_;
  bool recording_;
  std::vector<Node> nodes_;
};

// ---- operations -----------------------------------------------------------

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor transpose(Tape& tape, const Tensor& a);
/// Columns of `a` followed by columns of `b`.
Tensor concat_cols(Tape& tape, const Tensor& a, const Tensor& b);
/// Column-wise softmax over valid rows; masked rows get exactly zero weight.
Tensor softmax_columns(Tape& tape, const Tensor& a, Mask mask = {});

Tensor tanh(Tape& tape, const Tensor& a);
Tensor sigmoid(Tape& tape, const Tensor& a);
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& a, double factor);
/// Adds a 1 x c row to every row of an r x c tensor.
Tensor add_row(Tape& tape, const Tensor& a, const Tensor& row);

/// Mean over valid rows, 1 x c.
Tensor mean_rows(Tape& tape, const Tensor& a, Mask mask = {});
Tensor sum_all(Tape& tape, const Tensor& a);
/// 1 x (r*c), rows concatenated in order.
Tensor flatten_row_major(Tape& tape, const Tensor& a);
Tensor stack_rows(Tape& tape, std::span<const Tensor> rows);
/// r x c tensor whose every row equals the 1 x c input.
Tensor repeat_rows(Tape& tape, const Tensor& row, std::size_t count);
Tensor slice_row(Tape& tape, const Tensor& a, std::size_t index);
/// Row j of the result is row ids[j] of `table`; gradients scatter-add.
Tensor gather_rows(Tape& tape, const Tensor& table, std::span<const std::int32_t> ids);

/// -(y log p + (1-y) log(1-p)) with p clamped to [1e-12, 1 - 1e-12].
Tensor binary_cross_entropy(Tape& tape, const Tensor& probability, int label);
/// Same loss computed from the pre-sigmoid logit; d/dlogit = sigmoid(logit) - y.
Tensor binary_cross_entropy_with_logit(Tape& tape, const Tensor& logit, int label);

double stable_sigmoid(double x);

// ---- gradient checking ----------------------------------------------------

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Compares the tape gradient of a scalar function against central
/// differences on every coordinate of every tensor in `params`.
/// Relative error per coordinate: |a - n| / max(kGradCheckFloor, |a| + |n|).
/// The floor keeps round-off in near-zero gradients (about 1e-11 absolute
/// at eps = 1e-5) from reading as a large relative error.
inline constexpr double kGradCheckFloor = 1e-6;

GradCheckResult grad_check(const std::function<Tensor(Tape&)>& f, std::span<Tensor> params,
                           double eps = 1e-5);

}  // namespace mac
