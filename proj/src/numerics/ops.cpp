#include "orgpose/numerics/ops.hpp"

#include <cstdint>

#include <cmath>
#include <string>

#include "orgpose/error.hpp"

namespace orgpose::nn {

namespace {

Tape& tape_of(Var a, Var b) {
  if (a.tape == nullptr || a.tape != b.tape) throw Error("operands belong to different tapes");
  return *a.tape;
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (!same_shape(a, b)) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

bool is_broadcast_scalar(const Tensor& a, const Tensor& b) { return b.size() == 1 && a.size() != 1; }

void check_offsets(const char* op, std::span<const std::size_t> offsets, std::size_t rows) {
  if (offsets.size() < 2 || offsets.front() != 0 || offsets.back() != rows) {
    throw DimensionError(std::string(op) + ": offsets must span [0, " + std::to_string(rows) + "]");
  }
  for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
    if (offsets[s + 1] <= offsets[s]) throw DimensionError(std::string(op) + ": empty or unordered segment");
  }
}

// Looks up or records a selection pattern depending on the tape's log mode.
// Returns true when the caller must use `pattern` from the log.
bool replaying(Tape& tape) {
  auto* log = tape.selections();
  return log && log->mode() == SelectionLog::Mode::kReplay;
}

void maybe_record(Tape& tape, const std::vector<std::size_t>& pattern) {
  auto* log = tape.selections();
  if (log && log->mode() == SelectionLog::Mode::kRecord) log->record(pattern);
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& tape = tape_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.rows()) {
    throw DimensionError("matmul: " + shape_string(av.shape()) + " x " + shape_string(bv.shape()));
  }
  Tensor out = Tensor::zeros(av.rows(), bv.cols());
  out.mat().noalias() = av.mat() * bv.mat();
  return tape.record(std::move(out), {a.id, b.id}, [ia = a.id, ib = b.id](Tape& t, std::size_t self) {
    const auto g = t.grad_buffer(self).mat();
    if (t.requires_grad(ia)) t.grad_buffer(ia).mat().noalias() += g * t.value(ib).mat().transpose();
    if (t.requires_grad(ib)) t.grad_buffer(ib).mat().noalias() += t.value(ia).mat().transpose() * g;
  });
}

Var affine(Var input, Var weight, Var bias) {
  Tape& tape = tape_of(input, weight);
  tape_of(input, bias);
  const Tensor& x = input.value();
  const Tensor& w = weight.value();
  const Tensor& b = bias.value();
  if (x.cols() != w.rows() || b.size() != w.cols()) {
    throw DimensionError("affine: input " + shape_string(x.shape()) + ", weight " + shape_string(w.shape()) +
                         ", bias " + shape_string(b.shape()));
  }
  Tensor out = Tensor::zeros(x.rows(), w.cols());
  auto o = out.mat();
  o.noalias() = x.mat() * w.mat();
  const Eigen::Map<const Eigen::RowVectorXd> bv(b.data().data(), static_cast<Eigen::Index>(b.size()));
  o.rowwise() += bv;
  return tape.record(std::move(out), {input.id, weight.id, bias.id},
                     [ix = input.id, iw = weight.id, ib = bias.id](Tape& t, std::size_t self) {
                       const auto g = t.grad_buffer(self).mat();
                       if (t.requires_grad(ix)) t.grad_buffer(ix).mat().noalias() += g * t.value(iw).mat().transpose();
                       if (t.requires_grad(iw)) t.grad_buffer(iw).mat().noalias() += t.value(ix).mat().transpose() * g;
                       if (t.requires_grad(ib)) {
                         auto& gb = t.grad_buffer(ib);
                         Eigen::Map<Eigen::RowVectorXd> gbv(gb.data().data(), static_cast<Eigen::Index>(gb.size()));
                         gbv += column_sum(g);
                       }
                     });
}

namespace {

enum class Binary { kAdd, kSub, kMul };

Var binary(Binary op, const char* name, Var a, Var b) {
  Tape& tape = tape_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const bool broadcast = is_broadcast_scalar(av, bv);
  if (!broadcast) require_same_shape(name, av, bv);
  Tensor out = av;
  out.set_requires_grad(false);
  auto o = out.data();
  const auto bd = bv.data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    const double rhs = broadcast ? bd[0] : bd[i];
    switch (op) {
      case Binary::kAdd: o[i] += rhs; break;
      case Binary::kSub: o[i] -= rhs; break;
      case Binary::kMul: o[i] *= rhs; break;
    }
  }
  return tape.record(std::move(out), {a.id, b.id}, [op, broadcast, ia = a.id, ib = b.id](Tape& t, std::size_t self) {
    const auto g = t.grad_buffer(self).data();
    const auto av = t.value(ia).data();
    const auto bv = t.value(ib).data();
    if (t.requires_grad(ia)) {
      auto ga = t.grad_buffer(ia).data();
      for (std::size_t i = 0; i < g.size(); ++i) {
        ga[i] += op == Binary::kMul ? g[i] * (broadcast ? bv[0] : bv[i]) : g[i];
      }
    }
    if (t.requires_grad(ib)) {
      auto gb = t.grad_buffer(ib).data();
      for (std::size_t i = 0; i < g.size(); ++i) {
        double d = g[i];
        if (op == Binary::kSub) d = -d;
        if (op == Binary::kMul) d *= av[i];
        gb[broadcast ? 0 : i] += d;
      }
    }
  });
}

template <typename Forward, typename Derivative>
Var unary(Var a, Forward forward, Derivative derivative) {
  Tape& tape = *a.tape;
  Tensor out = a.value();
  out.set_requires_grad(false);
  for (auto& v : out.data()) v = forward(v);
  return tape.record(std::move(out), {a.id}, [ia = a.id, derivative](Tape& t, std::size_t self) {
    const auto g = t.grad_buffer(self).data();
    const auto x = t.value(ia).data();
    const auto y = t.value(self).data();
    auto ga = t.grad_buffer(ia).data();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * derivative(x[i], y[i]);
  });
}

// Unary op whose derivative depends on a discrete per-element state
// (active/inactive, sign) that SelectionLog can freeze.
template <typename StateOf, typename Apply, typename Slope>
Var piecewise(Var a, StateOf state_of, Apply apply, Slope slope) {
  Tape& tape = *a.tape;
  const Tensor& x = a.value();
  std::vector<std::uint8_t> state(x.size());
  if (replaying(tape)) {
    const auto& logged = tape.selections()->next(x.size());
    std::copy(logged.begin(), logged.end(), state.begin());
  } else {
    for (std::size_t i = 0; i < x.size(); ++i) state[i] = state_of(x[i]);
    if (auto* log = tape.selections(); log && log->mode() == SelectionLog::Mode::kRecord) {
      log->record(std::vector<std::size_t>(state.begin(), state.end()));
    }
  }
  Tensor out = Tensor::zeros_like(x);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = apply(x[i], state[i]);
  if (!a.requires_grad()) return tape.record(std::move(out), {a.id}, nullptr);
  return tape.record(std::move(out), {a.id}, [ia = a.id, state = std::move(state), slope](Tape& t, std::size_t self) {
    const auto g = t.grad_buffer(self).data();
    auto ga = t.grad_buffer(ia).data();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * slope(state[i]);
  });
}

}  // namespace

Var add(Var a, Var b) { return binary(Binary::kAdd, "add", a, b); }
Var sub(Var a, Var b) { return binary(Binary::kSub, "sub", a, b); }
Var mul(Var a, Var b) { return binary(Binary::kMul, "mul", a, b); }

Var scale(Var a, double factor) {
  return unary(a, [factor](double x) { return factor * x; }, [factor](double, double) { return factor; });
}

Var add_constant(Var a, double constant) {
  return unary(a, [constant](double x) { return x + constant; }, [](double, double) { return 1.0; });
}

Var exp(Var a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var square(Var a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var relu(Var a) {
  return piecewise(
      a, [](double x) -> std::uint8_t { return x > 0.0 ? 1 : 0; },
      [](double x, std::uint8_t active) { return active ? x : 0.0; },
      [](std::uint8_t active) { return active ? 1.0 : 0.0; });
}

Var abs(Var a) {
  // state: 0 negative, 1 zero, 2 positive
  return piecewise(
      a, [](double x) -> std::uint8_t { return x > 0.0 ? 2 : (x < 0.0 ? 0 : 1); },
      [](double x, std::uint8_t sign) { return sign == 1 ? 0.0 : (sign == 2 ? x : -x); },
      [](std::uint8_t sign) { return static_cast<double>(sign) - 1.0; });
}

Var sum(Var a) {
  Tape& tape = *a.tape;
  double total = 0.0;
  for (double v : a.value().data()) total += v;
  return tape.record(Tensor::scalar(total), {a.id}, [ia = a.id](Tape& t, std::size_t self) {
    const double g = t.grad_buffer(self)[0];
    for (auto& v : t.grad_buffer(ia).data()) v += g;
  });
}

Var row_sum(Var a) {
  Tape& tape = *a.tape;
  const Tensor& x = a.value();
  Tensor out = Tensor::zeros(x.rows(), 1);
  out.mat() = x.mat().rowwise().sum();
  return tape.record(std::move(out), {a.id}, [ia = a.id](Tape& t, std::size_t self) {
    const auto g = t.grad_buffer(self).mat();
    auto ga = t.grad_buffer(ia).mat();
    ga.colwise() += g.col(0);
  });
}

Var gather_rows(Var a, std::vector<std::size_t> indices) {
  Tape& tape = *a.tape;
  const Tensor& x = a.value();
  const std::size_t cols = x.cols();
  if (indices.empty()) throw DimensionError("gather_rows: empty index list");
  Tensor out = Tensor::zeros(indices.size(), cols);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= x.rows()) throw DimensionError("gather_rows: index out of range");
    out.mat().row(static_cast<Eigen::Index>(r)) = x.mat().row(static_cast<Eigen::Index>(indices[r]));
  }
  return tape.record(std::move(out), {a.id}, [ia = a.id, indices = std::move(indices)](Tape& t, std::size_t self) {
    const auto g = t.grad_buffer(self).mat();
    auto ga = t.grad_buffer(ia).mat();
    for (std::size_t r = 0; r < indices.size(); ++r) {
      ga.row(static_cast<Eigen::Index>(indices[r])) += g.row(static_cast<Eigen::Index>(r));
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  Tape& tape = *parts[0].tape;
  const std::size_t rows = parts[0].rows();
  std::size_t cols = 0;
  std::vector<std::size_t> ids;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    tape_of(parts[0], p);
    if (p.rows() != rows) throw DimensionError("concat_cols: row count mismatch");
    ids.push_back(p.id);
    widths.push_back(p.cols());
    cols += p.cols();
  }
  Tensor out = Tensor::zeros(rows, cols);
  auto o = out.mat();
  std::size_t c = 0;
  for (const auto& p : parts) {
    o.middleCols(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(p.cols())) = p.value().mat();
    c += p.cols();
  }
  return tape.record(std::move(out), ids, [ids, widths](Tape& t, std::size_t self) {
    const auto g = t.grad_buffer(self).mat();
    std::size_t c = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (t.requires_grad(ids[k])) {
        t.grad_buffer(ids[k]).mat() += g.middleCols(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(widths[k]));
      }
      c += widths[k];
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  Tape& tape = *parts[0].tape;
  const std::size_t cols = parts[0].cols();
  std::size_t rows = 0;
  std::vector<std::size_t> ids;
  std::vector<std::size_t> heights;
  for (const auto& p : parts) {
    tape_of(parts[0], p);
    if (p.cols() != cols) throw DimensionError("concat_rows: column count mismatch");
    ids.push_back(p.id);
    heights.push_back(p.rows());
    rows += p.rows();
  }
  Tensor out = Tensor::zeros(rows, cols);
  auto o = out.mat();
  std::size_t r = 0;
  for (const auto& p : parts) {
    o.middleRows(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(p.rows())) = p.value().mat();
    r += p.rows();
  }
  return tape.record(std::move(out), ids, [ids, heights](Tape& t, std::size_t self) {
    const auto g = t.grad_buffer(self).mat();
    std::size_t r = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (t.requires_grad(ids[k])) {
        t.grad_buffer(ids[k]).mat() +=
            g.middleRows(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(heights[k]));
      }
      r += heights[k];
    }
  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  Tape& tape = *a.tape;
  const Tensor& x = a.value();
  if (begin >= end || end > x.cols()) throw DimensionError("slice_cols: invalid range");
  Tensor out = Tensor::zeros(x.rows(), end - begin);
  out.mat() = x.mat().middleCols(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(end - begin));
  return tape.record(std::move(out), {a.id}, [ia = a.id, begin, end](Tape& t, std::size_t self) {
    t.grad_buffer(ia).mat().middleCols(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(end - begin)) +=
        t.grad_buffer(self).mat();
  });
}

Var repeat_rows(Var row, std::size_t count) {
  Tape& tape = *row.tape;
  const Tensor& x = row.value();
  if (x.rows() != 1 || count == 0) throw DimensionError("repeat_rows: expects a single row and count > 0");
  Tensor out = Tensor::zeros(count, x.cols());
  out.mat().rowwise() = x.mat().row(0);
  return tape.record(std::move(out), {row.id}, [ia = row.id](Tape& t, std::size_t self) {
    t.grad_buffer(ia).mat().row(0) += column_sum(t.grad_buffer(self).mat());
  });
}

Var segment_max(Var a, std::span<const std::size_t> offsets) {
  Tape& tape = *a.tape;
  const Tensor& x = a.value();
  check_offsets("segment_max", offsets, x.rows());
  const std::size_t segments = offsets.size() - 1;
  const std::size_t cols = x.cols();
  std::vector<std::size_t> winner(segments * cols);
  if (replaying(tape)) {
    winner = tape.selections()->next(winner.size());
  } else {
    const double* data = x.data().data();
    for (std::size_t s = 0; s < segments; ++s) {
      std::size_t* best = winner.data() + s * cols;
      std::fill(best, best + cols, offsets[s]);
      for (std::size_t r = offsets[s] + 1; r < offsets[s + 1]; ++r) {
        const double* row = data + r * cols;
        for (std::size_t c = 0; c < cols; ++c) {
          if (row[c] > data[best[c] * cols + c]) best[c] = r;
        }
      }
    }
    maybe_record(tape, winner);
  }
  Tensor out = Tensor::zeros(segments, cols);
  for (std::size_t s = 0; s < segments; ++s) {
    for (std::size_t c = 0; c < cols; ++c) out(s, c) = x(winner[s * cols + c], c);
  }
  return tape.record(std::move(out), {a.id}, [ia = a.id, cols, winner = std::move(winner)](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_buffer(self);
    Tensor& ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < winner.size(); ++i) ga(winner[i], i % cols) += g[i];
  });
}

namespace {

Var segment_reduce(Var a, std::span<const std::size_t> offsets, bool mean, const char* name) {
  Tape& tape = *a.tape;
  const Tensor& x = a.value();
  check_offsets(name, offsets, x.rows());
  const std::size_t segments = offsets.size() - 1;
  std::vector<std::size_t> bounds(offsets.begin(), offsets.end());
  Tensor out = Tensor::zeros(segments, x.cols());
  for (std::size_t s = 0; s < segments; ++s) {
    const auto begin = static_cast<Eigen::Index>(bounds[s]);
    const auto count = static_cast<Eigen::Index>(bounds[s + 1] - bounds[s]);
    auto row = out.mat().row(static_cast<Eigen::Index>(s));
    row = column_sum(x.mat().middleRows(begin, count));
    if (mean) row /= static_cast<double>(count);
  }
  return tape.record(std::move(out), {a.id}, [ia = a.id, bounds = std::move(bounds), mean](Tape& t, std::size_t self) {
    const auto g = t.grad_buffer(self).mat();
    auto ga = t.grad_buffer(ia).mat();
    for (std::size_t s = 0; s + 1 < bounds.size(); ++s) {
      const auto count = static_cast<Eigen::Index>(bounds[s + 1] - bounds[s]);
      const double w = mean ? 1.0 / static_cast<double>(count) : 1.0;
      ga.middleRows(static_cast<Eigen::Index>(bounds[s]), count).rowwise() += w * g.row(static_cast<Eigen::Index>(s));
    }
  });
}

}  // namespace

Var segment_sum(Var a, std::span<const std::size_t> offsets) { return segment_reduce(a, offsets, false, "segment_sum"); }

Var segment_mean(Var a, std::span<const std::size_t> offsets) { return segment_reduce(a, offsets, true, "segment_mean"); }

}  // namespace orgpose::nn
