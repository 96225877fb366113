#include "protofuse/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "protofuse/error.hpp"

namespace protofuse {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t");
  if (first == std::string_view::npos) {
    return {};
  }
  const auto last = s.find_last_not_of(" \t");
  return s.substr(first, last - first + 1);
}

std::string token_error(std::size_t position, std::string_view token,
                        std::string_view what) {
  return "branch token " + std::to_string(position) + " ('" +
         std::string(token) + "'): " + std::string(what);
}

// Squared distances between every query row and every prototype row.
Mat64 pairwise_sq_distances(const Mat64& queries, const Mat64& prototypes) {
  Mat64 d(queries.rows(), prototypes.rows());
  for (Eigen::Index q = 0; q < queries.rows(); ++q) {
    for (Eigen::Index c = 0; c < prototypes.rows(); ++c) {
      d(q, c) = (queries.row(q) - prototypes.row(c)).squaredNorm();
    }
  }
  return d;
}

// Row-wise softmax of −distances, computed with max-subtraction.
Mat64 row_softmax_neg(const Mat64& distances) {
  Mat64 probs(distances.rows(), distances.cols());
  for (Eigen::Index q = 0; q < distances.rows(); ++q) {
    probs.row(q) = softmax(-distances.row(q).transpose()).transpose();
  }
  return probs;
}

// −log softmax(−d)[label], stable.
double cross_entropy(const Eigen::Ref<const Eigen::RowVectorXd>& distances,
                     int label) {
  const double m = (-distances).maxCoeff();
  const double lse = m + std::log((-distances.array() - m).exp().sum());
  return lse + distances[label];
}

}  // namespace

std::string BranchConfig::grammar() const {
  std::string out;
  for (std::size_t i = 0; i < branches.size(); ++i) {
    if (i > 0) {
      out += ',';
    }
    out += modality_letter(branches[i].input);
    out += '/';
    out += modality_letter(branches[i].attend);
  }
  return out;
}

BranchConfig parse_branch_config(std::string_view text, bool branch_losses) {
  BranchConfig config;
  config.branch_losses = branch_losses;
  if (trim(text).empty()) {
    return config;
  }
  std::size_t position = 1;
  std::size_t start = 0;
  while (true) {
    const auto comma = text.find(',', start);
    const auto raw = text.substr(start, comma == std::string_view::npos
                                            ? std::string_view::npos
                                            : comma - start);
    const auto token = trim(raw);
    const auto slash = token.find('/');
    if (token.empty() || slash == std::string_view::npos ||
        token.find('/', slash + 1) != std::string_view::npos) {
      throw ConfigError(token_error(position, token, "expected 'x/y'"));
    }
    const auto input_text = trim(token.substr(0, slash));
    const auto attend_text = trim(token.substr(slash + 1));
    const auto single_letter = [](std::string_view s) -> std::optional<Modality> {
      if (s.size() != 1) {
        return std::nullopt;
      }
      return parse_modality(s);
    };
    const auto input = single_letter(input_text);
    const auto attend = single_letter(attend_text);
    if (!input) {
      throw ConfigError(token_error(position, token,
                                    "unknown modality '" +
                                        std::string(input_text) +
                                        "' (expected l, d, a or v)"));
    }
    if (!attend) {
      throw ConfigError(token_error(position, token,
                                    "unknown modality '" +
                                        std::string(attend_text) +
                                        "' (expected l, d, a or v)"));
    }
    config.branches.push_back({*input, *attend});
    if (comma == std::string_view::npos) {
      break;
    }
    start = comma + 1;
    ++position;
  }
  resolve_attend_sources(config);
  return config;
}

std::vector<int> resolve_attend_sources(const BranchConfig& config) {
  std::vector<int> sources;
  sources.reserve(config.branches.size());
  for (std::size_t i = 0; i < config.branches.size(); ++i) {
    const Modality attend = config.branches[i].attend;
    if (attend == Modality::kVisual) {
      sources.push_back(-1);
      continue;
    }
    int found = -1;
    for (std::size_t j = 0; j <= i; ++j) {
      if (config.branches[j].input == attend) {
        found = static_cast<int>(j);
        break;
      }
    }
    if (found < 0) {
      const std::string token{modality_letter(config.branches[i].input), '/',
                              modality_letter(attend)};
      throw ConfigError(token_error(
          i + 1, token,
          "attend modality '" + std::string(modality_name(attend)) +
              "' is not the input of this or any earlier branch"));
    }
    sources.push_back(found);
  }
  return sources;
}

std::vector<Modality> required_modalities(const BranchConfig& config) {
  std::vector<Modality> out;
  for (const auto& b : config.branches) {
    if (b.input != Modality::kVisual &&
        std::find(out.begin(), out.end(), b.input) == out.end()) {
      out.push_back(b.input);
    }
  }
  return out;
}

std::vector<std::span<double>> FusionModel::parameter_views() {
  auto views = tensor_views(visual_head);
  for (auto& branch : branches) {
    if (branch.semantic) {
      for (auto v : tensor_views(*branch.semantic)) {
        views.push_back(v);
      }
    }
    for (auto v : tensor_views(branch.attention)) {
      views.push_back(v);
    }
  }
  return views;
}

std::size_t FusionModel::parameter_count() const {
  const auto count = [](const MlpParams& p) {
    return static_cast<std::size_t>(p.w1.size() + p.b1.size() + p.w2.size() +
                                    p.b2.size());
  };
  std::size_t n = count(visual_head);
  for (const auto& branch : branches) {
    if (branch.semantic) {
      n += count(*branch.semantic);
    }
    n += count(branch.attention);
  }
  return n;
}

void FusionModel::validate() const {
  visual_head.validate();
  if (visual_head.output_kind != OutputKind::kVector) {
    throw ConfigError("model: visual head must have vector output");
  }
  if (branches.size() != config.branches.size()) {
    throw ConfigError("model: " + std::to_string(branches.size()) +
                      " branches but config lists " +
                      std::to_string(config.branches.size()));
  }
  const auto sources = resolve_attend_sources(config);
  for (std::size_t i = 0; i < branches.size(); ++i) {
    const auto& b = branches[i];
    if (b.spec != config.branches[i] || b.attend_source != sources[i]) {
      throw ConfigError("model: branch " + std::to_string(i + 1) +
                        " disagrees with config");
    }
    const bool needs_semantic = b.spec.input != Modality::kVisual;
    if (needs_semantic != b.semantic.has_value()) {
      throw ConfigError("model: branch " + std::to_string(i + 1) +
                        " semantic MLP presence does not match its input");
    }
    if (b.semantic) {
      b.semantic->validate();
      if (b.semantic->output_kind != OutputKind::kVector ||
          b.semantic->out_dim() != embed_dim()) {
        throw ConfigError("model: semantic MLP of branch " +
                          std::to_string(i + 1) + " must output embed_dim");
      }
    }
    b.attention.validate();
    if (b.attention.output_kind != OutputKind::kScalarSigmoid ||
        b.attention.in_dim() != embed_dim()) {
      throw ConfigError("model: attention MLP of branch " +
                        std::to_string(i + 1) +
                        " must map embed_dim to a sigmoid scalar");
    }
  }
}

FusionModel init_fusion_model(Rng& rng, const BranchConfig& config,
                              const ModelShape& shape) {
  if (shape.visual_in_dim <= 0 || shape.embed_dim <= 0) {
    throw ConfigError("model: visual input and embedding dims must be positive");
  }
  const auto sources = resolve_attend_sources(config);
  FusionModel model;
  model.config = config;
  model.visual_head =
      init_mlp(rng, shape.visual_in_dim, shape.visual_hidden, shape.embed_dim,
               0.0, OutputKind::kVector, shape.init_std);
  for (std::size_t i = 0; i < config.branches.size(); ++i) {
    FusionBranch branch;
    branch.spec = config.branches[i];
    branch.attend_source = sources[i];
    if (branch.spec.input != Modality::kVisual) {
      const auto dim = shape.semantic_dims.find(branch.spec.input);
      if (dim == shape.semantic_dims.end() || dim->second <= 0) {
        throw ConfigError("model: branch " + std::to_string(i + 1) +
                          " needs modality '" +
                          std::string(modality_name(branch.spec.input)) +
                          "' which the dataset does not provide");
      }
      branch.semantic =
          init_mlp(rng, dim->second, shape.semantic_hidden, shape.embed_dim,
                   shape.dropout_rate, OutputKind::kVector, shape.init_std);
    }
    branch.attention =
        init_mlp(rng, shape.embed_dim, shape.attention_hidden, 1,
                 shape.dropout_rate, OutputKind::kScalarSigmoid, shape.init_std);
    model.branches.push_back(std::move(branch));
  }
  return model;
}

FusionGrads FusionGrads::zeros_like(const FusionModel& model) {
  FusionGrads g;
  g.visual_head = MlpGrads::zeros_like(model.visual_head);
  for (const auto& branch : model.branches) {
    if (branch.semantic) {
      g.semantic.emplace_back(MlpGrads::zeros_like(*branch.semantic));
    } else {
      g.semantic.emplace_back(std::nullopt);
    }
    g.attention.push_back(MlpGrads::zeros_like(branch.attention));
  }
  return g;
}

std::vector<std::span<double>> FusionGrads::views() {
  auto out = tensor_views(visual_head);
  for (std::size_t i = 0; i < attention.size(); ++i) {
    if (semantic[i]) {
      for (auto v : tensor_views(*semantic[i])) {
        out.push_back(v);
      }
    }
    for (auto v : tensor_views(attention[i])) {
      out.push_back(v);
    }
  }
  return out;
}

Mat64 embed_visual(const FusionModel& model, const Mat64& raw_features) {
  return mlp_forward_batch(model.visual_head, raw_features).output;
}

Vec64 visual_prototype(const Mat64& embedded_support) {
  if (embedded_support.rows() == 0) {
    throw ContractError("visual_prototype: empty support set");
  }
  return embedded_support.colwise().mean().transpose();
}

Vec64 semantic_prototype(const FusionModel& model, std::size_t branch,
                         const ClassContext& context) {
  if (branch >= model.branches.size()) {
    throw ContractError("semantic_prototype: no branch " +
                        std::to_string(branch));
  }
  const auto& b = model.branches[branch];
  if (b.spec.input == Modality::kVisual) {
    return context.visual_prototype;
  }
  const auto it = context.semantics.find(b.spec.input);
  if (it == context.semantics.end()) {
    throw DataError("semantic_prototype: class has no '" +
                    std::string(modality_name(b.spec.input)) + "' vector");
  }
  return mlp_infer(*b.semantic, it->second);
}

double attention_coefficient(const FusionModel& model, std::size_t branch,
                             const Vec64& attend_prototype) {
  if (branch >= model.branches.size()) {
    throw ContractError("attention_coefficient: no branch " +
                        std::to_string(branch));
  }
  return mlp_infer(model.branches[branch].attention, attend_prototype)[0];
}

std::vector<Vec64> fuse_cascade(
    const Vec64& visual, std::span<const std::pair<Vec64, double>> stages) {
  std::vector<Vec64> partial;
  partial.reserve(stages.size() + 1);
  partial.push_back(visual);
  for (const auto& [semantic, alpha] : stages) {
    if (semantic.size() != visual.size()) {
      throw ContractError("fuse_cascade: semantic prototype dim " +
                          std::to_string(semantic.size()) + " vs visual " +
                          std::to_string(visual.size()));
    }
    partial.push_back(alpha * partial.back() + (1.0 - alpha) * semantic);
  }
  return partial;
}

Vec64 fuse_closed_form(const Vec64& visual, std::span<const Vec64> semantic,
                       std::span<const double> alphas) {
  if (semantic.size() != alphas.size()) {
    throw ContractError("fuse_closed_form: " + std::to_string(semantic.size()) +
                        " prototypes but " + std::to_string(alphas.size()) +
                        " coefficients");
  }
  const std::size_t k = semantic.size();
  double all_alpha = 1.0;
  for (const double a : alphas) {
    all_alpha *= a;
  }
  Vec64 p = visual * all_alpha;
  for (std::size_t i = 0; i < k; ++i) {
    if (semantic[i].size() != visual.size()) {
      throw ContractError("fuse_closed_form: dimension mismatch at stage " +
                          std::to_string(i + 1));
    }
    double tail = 1.0;
    for (std::size_t j = i + 1; j < k; ++j) {
      tail *= alphas[j];
    }
    p += semantic[i] * ((1.0 - alphas[i]) * tail);
  }
  return p;
}

Vec64 class_probabilities(const Vec64& query,
                          std::span<const Vec64> prototypes) {
  if (prototypes.size() < 2) {
    throw ConfigError("class_probabilities: need at least two classes");
  }
  Vec64 logits(static_cast<Eigen::Index>(prototypes.size()));
  for (std::size_t c = 0; c < prototypes.size(); ++c) {
    logits[static_cast<Eigen::Index>(c)] = -sq_euclidean(query, prototypes[c]);
  }
  return softmax(logits);
}

DropoutMasks draw_dropout_masks(const FusionModel& model,
                                const Episode& episode, Rng& rng) {
  DropoutMasks masks;
  const auto draw = [&rng](const MlpParams& p,
                           Eigen::Index rows) -> std::optional<Mat64> {
    if (p.dropout_rate == 0.0) {
      return std::nullopt;
    }
    return draw_dropout_mask(rng, rows, p.hidden_dim(), p.dropout_rate);
  };
  masks.visual = draw(model.visual_head,
                      episode.support.rows() + episode.queries.rows());
  for (const auto& branch : model.branches) {
    masks.semantic.push_back(branch.semantic ? draw(*branch.semantic, episode.way)
                                             : std::nullopt);
    masks.attention.push_back(draw(branch.attention, episode.way));
  }
  return masks;
}

void check_episode(const FusionModel& model, const Episode& episode) {
  if (episode.way < 2) {
    throw ConfigError("episode: need at least two classes");
  }
  if (episode.shot < 1) {
    throw ConfigError("episode: shot must be at least 1");
  }
  if (episode.support.rows() != episode.way * episode.shot) {
    throw ContractError("episode: support has " +
                        std::to_string(episode.support.rows()) +
                        " rows, expected way·shot");
  }
  if (static_cast<Eigen::Index>(episode.query_labels.size()) !=
      episode.queries.rows()) {
    throw ContractError("episode: query label count mismatch");
  }
  for (const int label : episode.query_labels) {
    if (label < 0 || label >= episode.way) {
      throw ContractError("episode: query label out of range");
    }
  }
  if (episode.support.cols() != model.visual_in_dim() ||
      (episode.queries.rows() > 0 &&
       episode.queries.cols() != model.visual_in_dim())) {
    throw ConfigError("episode: feature dim " +
                      std::to_string(episode.support.cols()) +
                      " but visual head expects " +
                      std::to_string(model.visual_in_dim()));
  }
  for (std::size_t i = 0; i < model.branches.size(); ++i) {
    const auto& b = model.branches[i];
    if (!b.semantic) {
      continue;
    }
    const auto it = episode.semantics.find(b.spec.input);
    if (it == episode.semantics.end()) {
      throw DataError("episode: missing '" +
                      std::string(modality_name(b.spec.input)) +
                      "' semantics required by branch " + std::to_string(i + 1));
    }
    if (it->second.rows() != episode.way ||
        it->second.cols() != b.semantic->in_dim()) {
      throw ConfigError("episode: '" +
                        std::string(modality_name(b.spec.input)) +
                        "' semantics are " + std::to_string(it->second.rows()) +
                        "x" + std::to_string(it->second.cols()) +
                        ", branch expects dim " +
                        std::to_string(b.semantic->in_dim()));
    }
  }
}

EpisodeForward forward_episode(const FusionModel& model, const Episode& episode,
                               const DropoutMasks* masks) {
  check_episode(model, episode);
  const Eigen::Index way = episode.way;
  const Eigen::Index shot = episode.shot;
  const Eigen::Index n_support = episode.support.rows();
  const Eigen::Index n_query = episode.queries.rows();
  const auto mask_of = [](const std::optional<Mat64>& m) {
    return m ? &*m : nullptr;
  };

  EpisodeForward fwd;
  Mat64 raw(n_support + n_query, episode.support.cols());
  raw.topRows(n_support) = episode.support;
  if (n_query > 0) {
    raw.bottomRows(n_query) = episode.queries;
  }
  fwd.visual_cache = mlp_forward_batch(
      model.visual_head, raw, masks != nullptr ? mask_of(masks->visual) : nullptr);
  const Mat64& embedded = fwd.visual_cache.output;
  const Eigen::Index e = embedded.cols();

  fwd.visual_prototypes.resize(way, e);
  for (Eigen::Index c = 0; c < way; ++c) {
    fwd.visual_prototypes.row(c) =
        embedded.middleRows(c * shot, shot).colwise().mean();
  }
  fwd.query_embeddings = embedded.bottomRows(n_query);

  const std::size_t k = model.branches.size();
  fwd.semantic_caches.resize(k);
  for (std::size_t i = 0; i < k; ++i) {
    const auto& b = model.branches[i];
    if (b.semantic) {
      fwd.semantic_caches[i] = mlp_forward_batch(
          *b.semantic, episode.semantics.at(b.spec.input),
          masks != nullptr ? mask_of(masks->semantic.at(i)) : nullptr);
      fwd.semantic_prototypes.push_back(fwd.semantic_caches[i]->output);
    } else {
      fwd.semantic_prototypes.push_back(fwd.visual_prototypes);
    }
  }
  for (std::size_t i = 0; i < k; ++i) {
    const auto& b = model.branches[i];
    const Mat64& attend = b.attend_source < 0
                              ? fwd.visual_prototypes
                              : fwd.semantic_prototypes[b.attend_source];
    fwd.attention_caches.push_back(mlp_forward_batch(
        b.attention, attend,
        masks != nullptr ? mask_of(masks->attention.at(i)) : nullptr));
    fwd.alphas.push_back(fwd.attention_caches.back().output.col(0));
  }

  fwd.partial_prototypes.push_back(fwd.visual_prototypes);
  for (std::size_t r = 0; r < k; ++r) {
    const Vec64& alpha = fwd.alphas[r];
    Mat64 next = alpha.asDiagonal() * fwd.partial_prototypes.back();
    next += (1.0 - alpha.array()).matrix().asDiagonal() *
            fwd.semantic_prototypes[r];
    fwd.partial_prototypes.push_back(std::move(next));
  }
  return fwd;
}

std::vector<std::size_t> active_loss_terms(const BranchConfig& config) {
  const std::size_t k = config.branches.size();
  if (!config.branch_losses) {
    return {k};
  }
  std::vector<std::size_t> terms(k + 1);
  for (std::size_t r = 0; r <= k; ++r) {
    terms[r] = r;
  }
  return terms;
}

namespace {

double loss_from_forward(const FusionModel& model, const Episode& episode,
                         const EpisodeForward& fwd) {
  const Eigen::Index n_query = fwd.query_embeddings.rows();
  if (n_query == 0) {
    return 0.0;
  }
  double total = 0.0;
  for (const std::size_t r : active_loss_terms(model.config)) {
    const Mat64 d =
        pairwise_sq_distances(fwd.query_embeddings, fwd.partial_prototypes[r]);
    // Running mean: exact when every query contributes the same value.
    double term = 0.0;
    for (Eigen::Index q = 0; q < n_query; ++q) {
      term += (cross_entropy(d.row(q), episode.query_labels[q]) - term) /
              static_cast<double>(q + 1);
    }
    total += term;
  }
  return total;
}

}  // namespace

double episode_loss(const FusionModel& model, const Episode& episode,
                    const DropoutMasks* masks) {
  return loss_from_forward(model, episode,
                           forward_episode(model, episode, masks));
}

double episode_loss(const FusionModel& model, const Episode& episode, Mode mode,
                    Rng& rng) {
  if (mode == Mode::kInfer) {
    return episode_loss(model, episode, nullptr);
  }
  const DropoutMasks masks = draw_dropout_masks(model, episode, rng);
  return episode_loss(model, episode, &masks);
}

LossAndGrads episode_loss_and_grads(const FusionModel& model,
                                    const Episode& episode,
                                    const DropoutMasks& masks) {
  const EpisodeForward fwd = forward_episode(model, episode, &masks);
  const std::size_t k = model.branches.size();
  const Eigen::Index way = episode.way;
  const Eigen::Index shot = episode.shot;
  const Eigen::Index n_query = fwd.query_embeddings.rows();
  const Eigen::Index e = model.embed_dim();

  LossAndGrads out;
  out.loss = loss_from_forward(model, episode, fwd);
  out.grads = FusionGrads::zeros_like(model);

  // dL/dQ and dL/dP_r from every active cross-entropy term.
  Mat64 grad_query = Mat64::Zero(n_query, e);
  std::vector<Mat64> grad_partial(k + 1, Mat64::Zero(way, e));
  if (n_query > 0) {
    const double inv_n = 1.0 / static_cast<double>(n_query);
    for (const std::size_t r : active_loss_terms(model.config)) {
      const Mat64& protos = fwd.partial_prototypes[r];
      Mat64 g = row_softmax_neg(
          pairwise_sq_distances(fwd.query_embeddings, protos));
      for (Eigen::Index q = 0; q < n_query; ++q) {
        g(q, episode.query_labels[q]) -= 1.0;
      }
      g *= inv_n;
      // logit = −‖Q − P‖²: ∂/∂Q = −2(Q − P), ∂/∂P = 2(Q − P).
      const Vec64 row_sums = g.rowwise().sum();
      const Vec64 col_sums = g.colwise().sum().transpose();
      grad_query.noalias() -= 2.0 * (row_sums.asDiagonal() * fwd.query_embeddings);
      grad_query.noalias() += 2.0 * (g * protos);
      grad_partial[r].noalias() += 2.0 * (g.transpose() * fwd.query_embeddings);
      grad_partial[r].noalias() -= 2.0 * (col_sums.asDiagonal() * protos);
    }
  }

  // Unroll the cascade P_r = α_r·P_{r−1} + (1−α_r)·S_r.
  std::vector<Mat64> grad_semantic(k, Mat64::Zero(way, e));
  std::vector<Vec64> grad_alpha(k);
  for (std::size_t r = k; r >= 1; --r) {
    const Vec64& alpha = fwd.alphas[r - 1];
    const Mat64 diff = fwd.partial_prototypes[r - 1] - fwd.semantic_prototypes[r - 1];
    grad_alpha[r - 1] = grad_partial[r].cwiseProduct(diff).rowwise().sum();
    grad_semantic[r - 1] +=
        (1.0 - alpha.array()).matrix().asDiagonal() * grad_partial[r];
    grad_partial[r - 1] += alpha.asDiagonal() * grad_partial[r];
  }
  Mat64 grad_visual = std::move(grad_partial[0]);

  // Attention MLPs feed gradients back into their attend prototypes, which
  // are V or an earlier-or-same semantic prototype.
  for (std::size_t i = 0; i < k; ++i) {
    const auto& b = model.branches[i];
    const Mat64 grad_alpha_col = grad_alpha[i];
    auto back = mlp_backward(b.attention, fwd.attention_caches[i], grad_alpha_col);
    out.grads.attention[i] = std::move(back.grads);
    if (b.attend_source < 0) {
      grad_visual += back.grad_input;
    } else {
      grad_semantic[b.attend_source] += back.grad_input;
    }
  }

  for (std::size_t i = 0; i < k; ++i) {
    const auto& b = model.branches[i];
    if (b.semantic) {
      auto back = mlp_backward(*b.semantic, *fwd.semantic_caches[i],
                               grad_semantic[i]);
      out.grads.semantic[i] = std::move(back.grads);
    } else {
      grad_visual += grad_semantic[i];
    }
  }

  Mat64 grad_embedded(way * shot + n_query, e);
  const double inv_shot = 1.0 / static_cast<double>(shot);
  for (Eigen::Index c = 0; c < way; ++c) {
    for (Eigen::Index s = 0; s < shot; ++s) {
      grad_embedded.row(c * shot + s) = grad_visual.row(c) * inv_shot;
    }
  }
  if (n_query > 0) {
    grad_embedded.bottomRows(n_query) = grad_query;
  }
  out.grads.visual_head =
      mlp_backward(model.visual_head, fwd.visual_cache, grad_embedded).grads;
  return out;
}

LossAndGrads episode_loss_and_grads(const FusionModel& model,
                                    const Episode& episode, Rng& rng) {
  const DropoutMasks masks = draw_dropout_masks(model, episode, rng);
  return episode_loss_and_grads(model, episode, masks);
}

std::vector<int> predict(const FusionModel& model, const Episode& episode) {
  return predict_from_forward(forward_episode(model, episode, nullptr));
}

std::vector<int> predict_from_forward(const EpisodeForward& fwd) {
  const Mat64 d = pairwise_sq_distances(fwd.query_embeddings,
                                        fwd.partial_prototypes.back());
  std::vector<int> labels(static_cast<std::size_t>(d.rows()));
  for (Eigen::Index q = 0; q < d.rows(); ++q) {
    // Probabilities are monotone in −distance, so the argmax probability is
    // the argmin distance; strict comparison keeps the lowest index on ties.
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < d.cols(); ++c) {
      if (d(q, c) < d(q, best)) {
        best = c;
      }
    }
    labels[static_cast<std::size_t>(q)] = static_cast<int>(best);
  }
  return labels;
}

}  // namespace protofuse
