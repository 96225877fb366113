#include "protofuse/neural.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "protofuse/error.hpp"

namespace protofuse {
namespace {

std::string shape(const Mat64& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

std::span<double> view(Mat64& m) {
  return {m.data(), static_cast<std::size_t>(m.size())};
}
std::span<double> view(Vec64& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

}  // namespace

void MlpParams::validate() const {
  if (w1.rows() <= 0 || w1.cols() <= 0 || w2.rows() <= 0) {
    throw ConfigError("mlp: dimensions must be positive");
  }
  if (b1.size() != w1.rows() || w2.cols() != w1.rows() ||
      b2.size() != w2.rows()) {
    throw ConfigError("mlp: inconsistent shapes w1=" + shape(w1) +
                      " b1=" + std::to_string(b1.size()) + " w2=" + shape(w2) +
                      " b2=" + std::to_string(b2.size()));
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw ConfigError("mlp: dropout rate must lie in [0, 1)");
  }
  if (output_kind == OutputKind::kScalarSigmoid && w2.rows() != 1) {
    throw ConfigError("mlp: scalar-sigmoid output requires out_dim == 1");
  }
}

MlpGrads MlpGrads::zeros_like(const MlpParams& p) {
  return MlpGrads{Mat64::Zero(p.w1.rows(), p.w1.cols()),
                  Vec64::Zero(p.b1.size()),
                  Mat64::Zero(p.w2.rows(), p.w2.cols()),
                  Vec64::Zero(p.b2.size())};
}

MlpGrads& MlpGrads::operator+=(const MlpGrads& other) {
  w1 += other.w1;
  b1 += other.b1;
  w2 += other.w2;
  b2 += other.b2;
  return *this;
}

std::vector<std::span<double>> tensor_views(MlpParams& p) {
  return {view(p.w1), view(p.b1), view(p.w2), view(p.b2)};
}

std::vector<std::span<double>> tensor_views(MlpGrads& g) {
  return {view(g.w1), view(g.b1), view(g.w2), view(g.b2)};
}

MlpParams init_mlp(Rng& rng, Eigen::Index in_dim, Eigen::Index hidden_dim,
                   Eigen::Index out_dim, double dropout_rate,
                   OutputKind output_kind, double init_std) {
  if (in_dim <= 0 || hidden_dim <= 0 || out_dim <= 0) {
    throw ConfigError("init_mlp: dimensions must be positive");
  }
  MlpParams p;
  p.w1.resize(hidden_dim, in_dim);
  p.w2.resize(out_dim, hidden_dim);
  for (double& w : view(p.w1)) {
    w = init_std * rng.normal();
  }
  for (double& w : view(p.w2)) {
    w = init_std * rng.normal();
  }
  p.b1 = Vec64::Zero(hidden_dim);
  p.b2 = Vec64::Zero(out_dim);
  p.dropout_rate = dropout_rate;
  p.output_kind = output_kind;
  p.validate();
  return p;
}

Mat64 draw_dropout_mask(Rng& rng, Eigen::Index rows, Eigen::Index cols,
                        double rate) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ConfigError("dropout: rate must lie in [0, 1)");
  }
  Mat64 mask = Mat64::Ones(rows, cols);
  if (rate == 0.0) {
    return mask;
  }
  const double keep_scale = 1.0 / (1.0 - rate);
  for (double& m : view(mask)) {
    m = rng.uniform() < rate ? 0.0 : keep_scale;
  }
  return mask;
}

DropoutResult dropout(Rng& rng, const Vec64& h, double rate, Mode mode) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ConfigError("dropout: rate must lie in [0, 1)");
  }
  if (mode == Mode::kInfer) {
    return {h, Vec64::Ones(h.size())};
  }
  Vec64 mask = draw_dropout_mask(rng, h.size(), 1, rate).col(0);
  Vec64 out = h.cwiseProduct(mask);
  return {std::move(out), std::move(mask)};
}

ForwardCache mlp_forward_batch(const MlpParams& p, const Mat64& inputs,
                               const Mat64* mask) {
  if (inputs.cols() != p.in_dim()) {
    throw ConfigError("mlp_forward: input dim " +
                      std::to_string(inputs.cols()) + " but layer expects " +
                      std::to_string(p.in_dim()));
  }
  ForwardCache cache;
  cache.input = inputs;
  cache.pre_hidden.noalias() = inputs * p.w1.transpose();
  cache.pre_hidden.rowwise() += p.b1.transpose();
  if (mask != nullptr) {
    if (mask->rows() != inputs.rows() || mask->cols() != p.hidden_dim()) {
      throw ContractError("mlp_forward: dropout mask " + shape(*mask) +
                          " does not match hidden " +
                          std::to_string(inputs.rows()) + "x" +
                          std::to_string(p.hidden_dim()));
    }
    cache.mask = *mask;
  } else {
    cache.mask = Mat64::Ones(inputs.rows(), p.hidden_dim());
  }
  cache.hidden = cache.pre_hidden.cwiseMax(0.0).cwiseProduct(cache.mask);
  cache.output.noalias() = cache.hidden * p.w2.transpose();
  cache.output.rowwise() += p.b2.transpose();
  if (p.output_kind == OutputKind::kScalarSigmoid) {
    cache.output = cache.output.unaryExpr([](double z) { return sigmoid(z); });
  }
  return cache;
}

MlpForward mlp_forward(const MlpParams& p, const Vec64& x, Mode mode,
                       Rng& rng) {
  const Mat64 row = x.transpose();
  ForwardCache cache;
  if (mode == Mode::kTrain && p.dropout_rate > 0.0) {
    const Mat64 mask = draw_dropout_mask(rng, 1, p.hidden_dim(), p.dropout_rate);
    cache = mlp_forward_batch(p, row, &mask);
  } else {
    cache = mlp_forward_batch(p, row);
  }
  Vec64 out = cache.output.row(0).transpose();
  return {std::move(out), std::move(cache)};
}

Vec64 mlp_infer(const MlpParams& p, const Vec64& x) {
  const Mat64 row = x.transpose();
  return mlp_forward_batch(p, row).output.row(0).transpose();
}

MlpBackward mlp_backward(const MlpParams& p, const ForwardCache& cache,
                         const Mat64& grad_out) {
  const Eigen::Index n = cache.input.rows();
  if (cache.input.cols() != p.in_dim() ||
      cache.pre_hidden.rows() != n || cache.pre_hidden.cols() != p.hidden_dim() ||
      cache.hidden.rows() != n || cache.hidden.cols() != p.hidden_dim() ||
      cache.mask.rows() != n || cache.mask.cols() != p.hidden_dim() ||
      cache.output.rows() != n || cache.output.cols() != p.out_dim()) {
    throw ContractError("mlp_backward: cache does not belong to this layer");
  }
  if (grad_out.rows() != n || grad_out.cols() != p.out_dim()) {
    throw ContractError("mlp_backward: grad_out " + shape(grad_out) +
                        " but output is " + shape(cache.output));
  }

  Mat64 grad_z2 = grad_out;
  if (p.output_kind == OutputKind::kScalarSigmoid) {
    grad_z2.array() *= cache.output.array() * (1.0 - cache.output.array());
  }

  MlpBackward out;
  out.grads.w2.noalias() = grad_z2.transpose() * cache.hidden;
  out.grads.b2 = grad_z2.colwise().sum().transpose();

  Mat64 grad_z1 = grad_z2 * p.w2;
  grad_z1.array() *= cache.mask.array() *
                     (cache.pre_hidden.array() > 0.0).cast<double>();

  out.grads.w1.noalias() = grad_z1.transpose() * cache.input;
  out.grads.b1 = grad_z1.colwise().sum().transpose();
  out.grad_input.noalias() = grad_z1 * p.w1;
  return out;
}

void adam_step(std::span<const std::span<double>> params,
               std::span<const std::span<double>> grads, OptState& state) {
  if (params.size() != grads.size()) {
    throw ContractError("adam_step: " + std::to_string(params.size()) +
                        " parameter tensors but " +
                        std::to_string(grads.size()) + " gradients");
  }
  if (state.step == 0 && state.first_moment.empty()) {
    for (const auto& t : params) {
      state.first_moment.emplace_back(t.size(), 0.0);
      state.second_moment.emplace_back(t.size(), 0.0);
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw ContractError("adam_step: optimizer state tracks " +
                        std::to_string(state.first_moment.size()) +
                        " tensors, got " + std::to_string(params.size()));
  }
  for (std::size_t t = 0; t < params.size(); ++t) {
    if (params[t].size() != grads[t].size() ||
        params[t].size() != state.first_moment[t].size()) {
      throw ContractError("adam_step: shape mismatch in tensor " +
                          std::to_string(t));
    }
  }

  const AdamConfig& c = state.config;
  ++state.step;
  const double step = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(c.beta1, step);
  const double correction2 = 1.0 - std::pow(c.beta2, step);
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto& m = state.first_moment[t];
    auto& v = state.second_moment[t];
    const auto p = params[t];
    const auto g = grads[t];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      p[i] -= c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
    }
  }
}

GradCheckResult finite_diff_check(const std::function<double()>& loss,
                                  std::span<const std::span<double>> params,
                                  std::span<const std::span<double>> analytic,
                                  double step) {
  if (params.size() != analytic.size()) {
    throw ContractError("finite_diff_check: tensor count mismatch");
  }
  GradCheckResult result;
  for (std::size_t t = 0; t < params.size(); ++t) {
    if (params[t].size() != analytic[t].size()) {
      throw ContractError("finite_diff_check: shape mismatch in tensor " +
                          std::to_string(t));
    }
    for (std::size_t i = 0; i < params[t].size(); ++i) {
      double& theta = params[t][i];
      const double saved = theta;
      theta = saved + step;
      const double plus = loss();
      theta = saved - step;
      const double minus = loss();
      theta = saved;
      const double numeric = (plus - minus) / (2.0 * step);
      const double a = analytic[t][i];
      const double denom =
          std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double rel = std::abs(a - numeric) / denom;
      ++result.entries_checked;
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_tensor = t;
        result.worst_index = i;
        result.worst_analytic = a;
        result.worst_numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace protofuse
