#include "orgpose/numerics/layers.hpp"

#include <cmath>

#include "orgpose/error.hpp"

namespace orgpose::nn {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Tensor w = Tensor::zeros(fan_in, fan_out);
  for (auto& v : w.data()) v = dist(rng);
  return w;
}

Linear::Linear(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng)
    : in_(in), out_(out) {
  weight_ = &store.add(name + ".weight", glorot_uniform(in, out, rng));
  bias_ = &store.add(name + ".bias", Tensor({out}));
}

Var Linear::operator()(Tape& tape, Var input) const {
  return affine(input, tape.parameter(*weight_), tape.parameter(*bias_));
}

BatchNorm::BatchNorm(ParameterStore& store, const std::string& name, std::size_t features, BatchNormOptions options)
    : features_(features), options_(options) {
  if (!(options.momentum > 0.0 && options.momentum < 1.0)) throw ConfigError(name + ".momentum", "must lie in (0, 1)");
  if (!(options.epsilon > 0.0)) throw ConfigError(name + ".epsilon", "must be positive");
  scale_ = &store.add(name + ".scale", Tensor({features}, 1.0));
  shift_ = &store.add(name + ".shift", Tensor({features}, 0.0));
  running_mean_ = &store.add_buffer(name + ".running_mean", Tensor({features}, 0.0));
  running_var_ = &store.add_buffer(name + ".running_var", Tensor({features}, 1.0));
}

namespace {

using RowVec = Eigen::RowVectorXd;

RowVec as_row(const Tensor& t) {
  return Eigen::Map<const RowVec>(t.data().data(), static_cast<Eigen::Index>(t.size()));
}

// y = scale * (x - mean) * inv_std + shift. When `batch_stats` is set, mean
// and inv_std are functions of x and the backward pass includes their
// derivative.
Var normalize(Tape& tape, Var input, Var scale, Var shift, const RowVec& mean, const RowVec& inv_std,
              bool batch_stats) {
  const auto x = input.value().mat();
  const Eigen::Index rows = x.rows();
  Tensor out = Tensor::zeros(static_cast<std::size_t>(rows), static_cast<std::size_t>(x.cols()));
  auto o = out.mat();
  const RowVec gain = as_row(scale.value()).cwiseProduct(inv_std);
  const RowVec offset = as_row(shift.value()) - mean.cwiseProduct(gain);
  for (Eigen::Index r = 0; r < rows; ++r) o.row(r) = x.row(r).cwiseProduct(gain) + offset;
  // x-hat is recomputed from the input in the backward pass rather than stored.
  return tape.record(
      std::move(out), {input.id, scale.id, shift.id},
      [ix = input.id, is = scale.id, ib = shift.id, mean, inv_std, batch_stats](Tape& t, std::size_t self) {
        const auto g = t.grad_buffer(self).mat();
        const auto xv = t.value(ix).mat();
        const Eigen::Index rows = g.rows();
        const RowVec gamma = as_row(t.value(is));
        RowVec sum_g = RowVec::Zero(g.cols());
        RowVec sum_g_xhat = RowVec::Zero(g.cols());
        RowVec xhat(g.cols());
        for (Eigen::Index r = 0; r < rows; ++r) {
          xhat = (xv.row(r) - mean).cwiseProduct(inv_std);
          sum_g += g.row(r);
          sum_g_xhat += g.row(r).cwiseProduct(xhat);
        }
        if (t.requires_grad(is)) {
          auto& gs = t.grad_buffer(is);
          Eigen::Map<RowVec>(gs.data().data(), static_cast<Eigen::Index>(gs.size())) += sum_g_xhat;
        }
        if (t.requires_grad(ib)) {
          auto& gb = t.grad_buffer(ib);
          Eigen::Map<RowVec>(gb.data().data(), static_cast<Eigen::Index>(gb.size())) += sum_g;
        }
        if (!t.requires_grad(ix)) return;
        auto gx = t.grad_buffer(ix).mat();
        const RowVec gain = gamma.cwiseProduct(inv_std);
        if (!batch_stats) {
          for (Eigen::Index r = 0; r < rows; ++r) gx.row(r) += g.row(r).cwiseProduct(gain);
          return;
        }
        // dx = gain * (g - mean(g) - x-hat * mean(g * x-hat))
        const double n = static_cast<double>(rows);
        const RowVec mean_g = sum_g / n;
        const RowVec mean_g_xhat = sum_g_xhat / n;
        for (Eigen::Index r = 0; r < rows; ++r) {
          xhat = (xv.row(r) - mean).cwiseProduct(inv_std);
          gx.row(r) += (g.row(r) - mean_g - xhat.cwiseProduct(mean_g_xhat)).cwiseProduct(gain);
        }
      });
}

}  // namespace

Var BatchNorm::normalize_with_running(Tape& tape, Var input) const {
  const RowVec mean = as_row(running_mean_->value);
  const RowVec inv_std = (as_row(running_var_->value).array() + options_.epsilon).rsqrt();
  return normalize(tape, input, tape.parameter(*scale_), tape.parameter(*shift_), mean, inv_std, false);
}

Var BatchNorm::operator()(Tape& tape, Var input, const ForwardContext& ctx) const {
  const Tensor& x = input.value();
  if (x.empty() || x.rows() == 0) throw DimensionError("batchnorm: empty batch");
  if (x.cols() != features_) {
    throw DimensionError("batchnorm: expected " + std::to_string(features_) + " features, got " +
                         std::to_string(x.cols()));
  }
  if (!ctx.training() || x.rows() < 2) return normalize_with_running(tape, input);

  const auto xm = x.mat();
  const double n = static_cast<double>(xm.rows());
  const RowVec mean = column_sum(xm) / n;
  RowVec var = RowVec::Zero(xm.cols());
  for (Eigen::Index r = 0; r < xm.rows(); ++r) var += (xm.row(r) - mean).cwiseAbs2();
  var /= n;
  const RowVec inv_std = (var.array() + options_.epsilon).rsqrt();
  if (ctx.update_running_stats) {
    const double m = options_.momentum;
    auto rm = Eigen::Map<RowVec>(running_mean_->value.data().data(), static_cast<Eigen::Index>(features_));
    auto rv = Eigen::Map<RowVec>(running_var_->value.data().data(), static_cast<Eigen::Index>(features_));
    rm = (1.0 - m) * rm + m * mean;
    rv = (1.0 - m) * rv + m * var;
  }
  return normalize(tape, input, tape.parameter(*scale_), tape.parameter(*shift_), mean, inv_std, true);
}

Var dropout(Tape& tape, Var input, double rate, const ForwardContext& ctx) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout", "rate must lie in [0, 1)");
  if (!ctx.training() || rate == 0.0) return input;
  const Tensor& x = input.value();
  std::vector<std::size_t> keep;
  auto* log = tape.selections();
  if (log && log->mode() == SelectionLog::Mode::kReplay) {
    keep = log->next(x.size());
  } else {
    if (!ctx.rng) throw Error("dropout in training mode needs a random generator");
    std::bernoulli_distribution survive(1.0 - rate);
    keep.resize(x.size());
    for (auto& k : keep) k = survive(*ctx.rng) ? 1 : 0;
    if (log && log->mode() == SelectionLog::Mode::kRecord) log->record(keep);
  }
  const double factor = 1.0 / (1.0 - rate);
  Tensor out = Tensor::zeros_like(x);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = keep[i] ? x[i] * factor : 0.0;
  return tape.record(std::move(out), {input.id}, [ia = input.id, keep = std::move(keep), factor](Tape& t, std::size_t self) {
    const auto g = t.grad_buffer(self).data();
    auto ga = t.grad_buffer(ia).data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (keep[i]) ga[i] += g[i] * factor;
    }
  });
}

}  // namespace orgpose::nn
