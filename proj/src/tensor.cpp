#include "mac/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>

#include "mac/errors.hpp"

namespace mac {

namespace {

std::atomic<std::uint64_t> next_tape_id{1};

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " + b.shape_string());
  }
}

std::size_t count_valid(Mask mask, std::size_t rows, const char* op) {
  if (mask.empty()) return rows;
  if (mask.size() != rows) {
    throw ShapeError(std::string(op) + ": mask length " + std::to_string(mask.size()) + " for " +
                     std::to_string(rows) + " rows");
  }
  return static_cast<std::size_t>(std::count_if(mask.begin(), mask.end(), [](std::uint8_t m) { return m != 0; }));
}

}  // namespace

// ---- Tensor ---------------------------------------------------------------

Tensor::Tensor() : data_(std::make_shared<detail::TensorData>()) {}

Tensor Tensor::zeros(std::size_t rows, std::size_t cols, bool requires_grad) {
  return from(rows, cols, std::vector<double>(rows * cols, 0.0), requires_grad);
}

Tensor Tensor::from(std::size_t rows, std::size_t cols, std::vector<double> values, bool requires_grad) {
  if (values.size() != rows * cols) {
    throw ShapeError("tensor of shape " + std::to_string(rows) + "x" + std::to_string(cols) + " given " +
                     std::to_string(values.size()) + " values");
  }
  auto data = std::make_shared<detail::TensorData>();
  data->rows = rows;
  data->cols = cols;
  data->values = std::move(values);
  data->requires_grad = requires_grad;
  if (requires_grad) data->grad.assign(data->values.size(), 0.0);
  return Tensor(std::move(data));
}

Tensor Tensor::row(std::vector<double> values, bool requires_grad) {
  const std::size_t n = values.size();
  return from(1, n, std::move(values), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from(1, 1, {value}, requires_grad); }

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item() on tensor of shape " + shape_string());
  return data_->values[0];
}

void Tensor::zero_grad() { std::fill(data_->grad.begin(), data_->grad.end(), 0.0); }

Tensor Tensor::clone(bool requires_grad) const {
  return from(data_->rows, data_->cols, data_->values, requires_grad);
}

std::string Tensor::shape_string() const {
  return "[" + std::to_string(data_->rows) + "x" + std::to_string(data_->cols) + "]";
}

// ---- Tape -----------------------------------------------------------------

Tape::Tape(bool recording) : id_(next_tape_id.fetch_add(1)), recording_(recording) {}

Tensor Tape::record(std::size_t rows, std::size_t cols, std::vector<double> values, std::vector<Tensor> parents,
                    BackwardFn backward) {
  const bool needs_grad =
      recording_ && std::any_of(parents.begin(), parents.end(), [](const Tensor& p) { return p.requires_grad(); });
  Tensor out = Tensor::from(rows, cols, std::move(values), needs_grad);
  if (!needs_grad) return out;

  out.data_->tape_id = id_;
  out.data_->node = nodes_.size();
  Node node;
  node.output = out.data_;
  node.parents.reserve(parents.size());
  for (auto& p : parents) node.parents.push_back(p.data_);
  node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return out;
}

void Tape::backward(const Tensor& loss) {
  if (loss.rows() != 1 || loss.cols() != 1) {
    throw ContractError("backward: loss must be 1x1, got " + loss.shape_string());
  }
  if (loss.is_leaf()) {
    if (loss.requires_grad()) loss.data_->grad[0] += 1.0;
    return;
  }
  if (loss.data_->tape_id != id_ || loss.data_->node + 1 != nodes_.size()) {
    throw ContractError("backward: loss must be the last node recorded on this tape");
  }

  std::vector<std::vector<double>> adjoint(nodes_.size());
  adjoint.back().assign(1, 1.0);
  std::vector<std::span<double>> parent_grads;

  for (std::size_t i = nodes_.size(); i-- > 0;) {
    if (adjoint[i].empty()) continue;
    Node& node = nodes_[i];
    parent_grads.clear();
    for (const auto& p : node.parents) {
      if (p->tape_id == id_) {
        auto& buffer = adjoint[p->node];
        if (buffer.empty()) buffer.assign(p->values.size(), 0.0);
        parent_grads.emplace_back(buffer);
      } else if (p->requires_grad) {
        parent_grads.emplace_back(p->grad);
      } else {
        parent_grads.emplace_back();
      }
    }
    node.backward(adjoint[i], node.output->values, parent_grads);

    auto& stored = node.output->grad;
    for (std::size_t j = 0; j < stored.size(); ++j) stored[j] += adjoint[i][j];
    std::vector<double>().swap(adjoint[i]);
  }
}

// ---- operations -----------------------------------------------------------

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions differ " + a.shape_string() + " x " + b.shape_string());
  }
  const std::size_t r = a.rows(), p = a.cols(), q = b.cols();
  std::vector<double> out(r * q, 0.0);
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t k = 0; k < p; ++k) {
      const double aik = av[i * p + k];
      if (aik == 0.0) continue;
      const double* brow = bv.data() + k * q;
      double* orow = out.data() + i * q;
      for (std::size_t j = 0; j < q; ++j) orow[j] += aik * brow[j];
    }
  }
  return tape.record(r, q, std::move(out), {a, b},
                     [a, b, r, p, q](std::span<const double> g, std::span<const double>,
                                     std::span<const std::span<double>> grads) {
                       auto av = a.values();
                       auto bv = b.values();
                       if (!grads[0].empty()) {
                         // dA = G * B^T
                         for (std::size_t i = 0; i < r; ++i)
                           for (std::size_t k = 0; k < p; ++k) {
                             double s = 0.0;
                             for (std::size_t j = 0; j < q; ++j) s += g[i * q + j] * bv[k * q + j];
                             grads[0][i * p + k] += s;
                           }
                       }
                       if (!grads[1].empty()) {
                         // dB = A^T * G
                         for (std::size_t i = 0; i < r; ++i)
                           for (std::size_t k = 0; k < p; ++k) {
                             const double aik = av[i * p + k];
                             if (aik == 0.0) continue;
                             for (std::size_t j = 0; j < q; ++j) grads[1][k * q + j] += aik * g[i * q + j];
                           }
                       }
                     });
}

Tensor transpose(Tape& tape, const Tensor& a) {
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<double> out(r * c);
  auto av = a.values();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = av[i * c + j];
  return tape.record(c, r, std::move(out), {a},
                     [r, c](std::span<const double> g, std::span<const double>, std::span<const std::span<double>> grads) {
                       for (std::size_t i = 0; i < r; ++i)
                         for (std::size_t j = 0; j < c; ++j) grads[0][i * c + j] += g[j * r + i];
                     });
}

Tensor concat_cols(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows()) {
    throw ShapeError("concat_cols: row counts differ " + a.shape_string() + " vs " + b.shape_string());
  }
  const std::size_t r = a.rows(), p = a.cols(), q = b.cols(), w = p + q;
  std::vector<double> out(r * w);
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < r; ++i) {
    std::copy_n(av.data() + i * p, p, out.begin() + static_cast<std::ptrdiff_t>(i * w));
    std::copy_n(bv.data() + i * q, q, out.begin() + static_cast<std::ptrdiff_t>(i * w + p));
  }
  return tape.record(r, w, std::move(out), {a, b},
                     [r, p, q, w](std::span<const double> g, std::span<const double>,
                                  std::span<const std::span<double>> grads) {
                       for (std::size_t i = 0; i < r; ++i) {
                         if (!grads[0].empty())
                           for (std::size_t j = 0; j < p; ++j) grads[0][i * p + j] += g[i * w + j];
                         if (!grads[1].empty())
                           for (std::size_t j = 0; j < q; ++j) grads[1][i * q + j] += g[i * w + p + j];
                       }
                     });
}

Tensor softmax_columns(Tape& tape, const Tensor& a, Mask mask) {
  const std::size_t r = a.rows(), c = a.cols();
  if (r == 0) throw DegenerateInputError("softmax_columns: no rows");
  if (count_valid(mask, r, "softmax_columns") == 0) {
    throw DegenerateInputError("softmax_columns: every row is masked");
  }
  std::vector<std::uint8_t> valid(r, 1);
  if (!mask.empty()) std::copy(mask.begin(), mask.end(), valid.begin());

  std::vector<double> out(r * c, 0.0);
  auto av = a.values();
  for (std::size_t j = 0; j < c; ++j) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < r; ++i)
      if (valid[i]) mx = std::max(mx, av[i * c + j]);
    double total = 0.0;
    for (std::size_t i = 0; i < r; ++i) {
      if (!valid[i]) continue;
      const double e = std::exp(av[i * c + j] - mx);
      out[i * c + j] = e;
      total += e;
    }
    for (std::size_t i = 0; i < r; ++i) out[i * c + j] /= total;
  }
  return tape.record(r, c, std::move(out), {a},
                     [r, c](std::span<const double> g, std::span<const double> s,
                            std::span<const std::span<double>> grads) {
                       for (std::size_t j = 0; j < c; ++j) {
                         double dot = 0.0;
                         for (std::size_t i = 0; i < r; ++i) dot += s[i * c + j] * g[i * c + j];
                         for (std::size_t i = 0; i < r; ++i)
                           grads[0][i * c + j] += s[i * c + j] * (g[i * c + j] - dot);
                       }
                     });
}

Tensor tanh(Tape& tape, const Tensor& a) {
  std::vector<double> out(a.size());
  std::transform(a.values().begin(), a.values().end(), out.begin(), [](double x) { return std::tanh(x); });
  return tape.record(a.rows(), a.cols(), std::move(out), {a},
                     [](std::span<const double> g, std::span<const double> t, std::span<const std::span<double>> grads) {
                       for (std::size_t i = 0; i < g.size(); ++i) grads[0][i] += g[i] * (1.0 - t[i] * t[i]);
                     });
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Tensor sigmoid(Tape& tape, const Tensor& a) {
  std::vector<double> out(a.size());
  std::transform(a.values().begin(), a.values().end(), out.begin(), stable_sigmoid);
  return tape.record(a.rows(), a.cols(), std::move(out), {a},
                     [](std::span<const double> g, std::span<const double> s, std::span<const std::span<double>> grads) {
                       for (std::size_t i = 0; i < g.size(); ++i) grads[0][i] += g[i] * s[i] * (1.0 - s[i]);
                     });
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  std::transform(a.values().begin(), a.values().end(), b.values().begin(), out.begin(), std::plus<>());
  return tape.record(a.rows(), a.cols(), std::move(out), {a, b},
                     [](std::span<const double> g, std::span<const double>, std::span<const std::span<double>> grads) {
                       for (const auto& dst : grads)
                         for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
                     });
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  std::transform(a.values().begin(), a.values().end(), b.values().begin(), out.begin(), std::multiplies<>());
  return tape.record(a.rows(), a.cols(), std::move(out), {a, b},
                     [a, b](std::span<const double> g, std::span<const double>, std::span<const std::span<double>> grads) {
                       auto av = a.values();
                       auto bv = b.values();
                       for (std::size_t i = 0; i < grads[0].size(); ++i) grads[0][i] += g[i] * bv[i];
                       for (std::size_t i = 0; i < grads[1].size(); ++i) grads[1][i] += g[i] * av[i];
                     });
}

Tensor scale(Tape& tape, const Tensor& a, double factor) {
  std::vector<double> out(a.size());
  std::transform(a.values().begin(), a.values().end(), out.begin(), [factor](double x) { return x * factor; });
  return tape.record(a.rows(), a.cols(), std::move(out), {a},
                     [factor](std::span<const double> g, std::span<const double>, std::span<const std::span<double>> grads) {
                       for (std::size_t i = 0; i < g.size(); ++i) grads[0][i] += g[i] * factor;
                     });
}

Tensor add_row(Tape& tape, const Tensor& a, const Tensor& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw ShapeError("add_row: cannot broadcast " + row.shape_string() + " over " + a.shape_string());
  }
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<double> out(a.values().begin(), a.values().end());
  auto rv = row.values();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] += rv[j];
  return tape.record(r, c, std::move(out), {a, row},
                     [r, c](std::span<const double> g, std::span<const double>, std::span<const std::span<double>> grads) {
                       for (std::size_t i = 0; i < grads[0].size(); ++i) grads[0][i] += g[i];
                       if (!grads[1].empty())
                         for (std::size_t i = 0; i < r; ++i)
                           for (std::size_t j = 0; j < c; ++j) grads[1][j] += g[i * c + j];
                     });
}

Tensor mean_rows(Tape& tape, const Tensor& a, Mask mask) {
  const std::size_t r = a.rows(), c = a.cols();
  const std::size_t valid = count_valid(mask, r, "mean_rows");
  if (valid == 0) throw DegenerateInputError("mean_rows: no valid rows");
  std::vector<std::uint8_t> keep(r, 1);
  if (!mask.empty()) std::copy(mask.begin(), mask.end(), keep.begin());

  std::vector<double> out(c, 0.0);
  auto av = a.values();
  for (std::size_t i = 0; i < r; ++i)
    if (keep[i])
      for (std::size_t j = 0; j < c; ++j) out[j] += av[i * c + j];
  const double n = static_cast<double>(valid);
  for (auto& v : out) v /= n;
  return tape.record(1, c, std::move(out), {a},
                     [r, c, n, keep = std::move(keep)](std::span<const double> g, std::span<const double>,
                                                      std::span<const std::span<double>> grads) {
                       for (std::size_t i = 0; i < r; ++i)
                         if (keep[i])
                           for (std::size_t j = 0; j < c; ++j) grads[0][i * c + j] += g[j] / n;
                     });
}

Tensor sum_all(Tape& tape, const Tensor& a) {
  double total = 0.0;
  for (double v : a.values()) total += v;
  return tape.record(1, 1, {total}, {a},
                     [](std::span<const double> g, std::span<const double>, std::span<const std::span<double>> grads) {
                       for (auto& v : grads[0]) v += g[0];
                     });
}

Tensor flatten_row_major(Tape& tape, const Tensor& a) {
  std::vector<double> out(a.values().begin(), a.values().end());
  return tape.record(1, a.size(), std::move(out), {a},
                     [](std::span<const double> g, std::span<const double>, std::span<const std::span<double>> grads) {
                       for (std::size_t i = 0; i < g.size(); ++i) grads[0][i] += g[i];
                     });
}

Tensor stack_rows(Tape& tape, std::span<const Tensor> rows) {
  if (rows.empty()) throw ShapeError("stack_rows: empty list");
  const std::size_t c = rows.front().cols();
  std::vector<double> out;
  out.reserve(rows.size() * c);
  for (const auto& row : rows) {
    if (row.rows() != 1 || row.cols() != c) {
      throw ShapeError("stack_rows: expected 1x" + std::to_string(c) + " rows, got " + row.shape_string());
    }
    out.insert(out.end(), row.values().begin(), row.values().end());
  }
  std::vector<Tensor> parents(rows.begin(), rows.end());
  return tape.record(rows.size(), c, std::move(out), std::move(parents),
                     [c](std::span<const double> g, std::span<const double>, std::span<const std::span<double>> grads) {
                       for (std::size_t i = 0; i < grads.size(); ++i)
                         for (std::size_t j = 0; j < grads[i].size(); ++j) grads[i][j] += g[i * c + j];
                     });
}

Tensor repeat_rows(Tape& tape, const Tensor& row, std::size_t count) {
  if (row.rows() != 1) throw ShapeError("repeat_rows: expected a row, got " + row.shape_string());
  const std::size_t c = row.cols();
  std::vector<double> out;
  out.reserve(count * c);
  for (std::size_t i = 0; i < count; ++i) out.insert(out.end(), row.values().begin(), row.values().end());
  return tape.record(count, c, std::move(out), {row},
                     [count, c](std::span<const double> g, std::span<const double>, std::span<const std::span<double>> grads) {
                       for (std::size_t i = 0; i < count; ++i)
                         for (std::size_t j = 0; j < c; ++j) grads[0][j] += g[i * c + j];
                     });
}

Tensor slice_row(Tape& tape, const Tensor& a, std::size_t index) {
  if (index >= a.rows()) {
    throw IndexError("slice_row: row " + std::to_string(index) + " of " + a.shape_string());
  }
  const std::size_t c = a.cols();
  auto begin = a.values().begin() + static_cast<std::ptrdiff_t>(index * c);
  std::vector<double> out(begin, begin + static_cast<std::ptrdiff_t>(c));
  return tape.record(1, c, std::move(out), {a},
                     [index, c](std::span<const double> g, std::span<const double>, std::span<const std::span<double>> grads) {
                       for (std::size_t j = 0; j < c; ++j) grads[0][index * c + j] += g[j];
                     });
}

Tensor gather_rows(Tape& tape, const Tensor& table, std::span<const std::int32_t> ids) {
  const std::size_t c = table.cols();
  std::vector<double> out;
  out.reserve(ids.size() * c);
  auto tv = table.values();
  for (auto id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= table.rows()) {
      throw IndexError("gather_rows: id " + std::to_string(id) + " outside table " + table.shape_string());
    }
    auto begin = tv.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(id) * c);
    out.insert(out.end(), begin, begin + static_cast<std::ptrdiff_t>(c));
  }
  std::vector<std::int32_t> index(ids.begin(), ids.end());
  return tape.record(ids.size(), c, std::move(out), {table},
                     [c, index = std::move(index)](std::span<const double> g, std::span<const double>,
                                                   std::span<const std::span<double>> grads) {
                       for (std::size_t r = 0; r < index.size(); ++r) {
                         const std::size_t base = static_cast<std::size_t>(index[r]) * c;
                         for (std::size_t j = 0; j < c; ++j) grads[0][base + j] += g[r * c + j];
                       }
                     });
}

namespace {

constexpr double kProbabilityFloor = 1e-12;

void require_binary_label(int label) {
  if (label != 0 && label != 1) throw ContractError("label must be 0 or 1, got " + std::to_string(label));
}

}  // namespace

Tensor binary_cross_entropy(Tape& tape, const Tensor& probability, int label) {
  require_binary_label(label);
  if (probability.size() != 1) throw ShapeError("binary_cross_entropy: expected 1x1, got " + probability.shape_string());
  const double raw = probability.item();
  const double p = std::clamp(raw, kProbabilityFloor, 1.0 - kProbabilityFloor);
  const bool clamped = p != raw;
  const double loss = label == 1 ? -std::log(p) : -std::log(1.0 - p);
  return tape.record(1, 1, {loss}, {probability},
                     [p, clamped, label](std::span<const double> g, std::span<const double>,
                                         std::span<const std::span<double>> grads) {
                       if (clamped) return;
                       grads[0][0] += g[0] * (label == 1 ? -1.0 / p : 1.0 / (1.0 - p));
                     });
}

Tensor binary_cross_entropy_with_logit(Tape& tape, const Tensor& logit, int label) {
  require_binary_label(label);
  if (logit.size() != 1) throw ShapeError("binary_cross_entropy_with_logit: expected 1x1, got " + logit.shape_string());
  const double z = logit.item();
  // softplus(z) - y*z, evaluated without overflow.
  const double loss = std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))) - label * z;
  const double p = stable_sigmoid(z);
  return tape.record(1, 1, {loss}, {logit},
                     [p, label](std::span<const double> g, std::span<const double>, std::span<const std::span<double>> grads) {
                       grads[0][0] += g[0] * (p - label);
                     });
}

// ---- gradient checking ----------------------------------------------------

GradCheckResult grad_check(const std::function<Tensor(Tape&)>& f, std::span<Tensor> params, double eps) {
  if (!(eps > 0.0)) throw ContractError("grad_check: eps must be positive");
  for (auto& p : params) p.zero_grad();

  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    Tensor loss = f(tape);
    if (!std::isfinite(loss.item())) throw NumericalError("grad_check: objective is not finite");
    tape.backward(loss);
    for (auto& p : params) {
      if (p.requires_grad())
        analytic.emplace_back(p.grad().begin(), p.grad().end());
      else
        analytic.emplace_back(p.size(), 0.0);
    }
  }

  auto evaluate = [&f]() {
    Tape tape(false);
    const double value = f(tape).item();
    if (!std::isfinite(value)) throw NumericalError("grad_check: objective is not finite");
    return value;
  };

  GradCheckResult result;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto values = params[pi].values();
    for (std::size_t k = 0; k < values.size(); ++k) {
      const double original = values[k];
      values[k] = original + eps;
      const double plus = evaluate();
      values[k] = original - eps;
      const double minus = evaluate();
      values[k] = original;

      const double numeric = (plus - minus) / (2.0 * eps);
      const double a = analytic[pi][k];
      const double rel = std::abs(a - numeric) / std::max(kGradCheckFloor, std::abs(a) + std::abs(numeric));
      if (rel > result.max_relative_error) {
        result = {rel, pi, k, a, numeric};
      }
    }
  }
  return result;
}

}  // namespace mac
