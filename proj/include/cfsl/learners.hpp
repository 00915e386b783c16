#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cfsl/error.hpp"
#include "cfsl/image.hpp"
#include "cfsl/metrics.hpp"
#include "cfsl/rng.hpp"
#include "cfsl/session.hpp"

namespace cfsl {

enum class LearnerKind { Random, Prototype, LinearFineTune };

constexpr std::string_view learner_kind_name(LearnerKind kind) {
  switch (kind) {
    case LearnerKind::Random: return "random";
    case LearnerKind::Prototype: return "prototype";
    case LearnerKind::LinearFineTune: return "linear";
  }
  return "?";
}

inline LearnerKind parse_learner_kind(std::string_view name) {
  if (name == "random") return LearnerKind::Random;
  if (name == "prototype") return LearnerKind::Prototype;
  if (name == "linear") return LearnerKind::LinearFineTune;
  throw Error(ErrorCode::Config, "unknown learner '" + std::string(name) + "'");
}

struct LearnerParams {
  LearnerKind kind = LearnerKind::Prototype;
  std::uint32_t steps = 5;    // gradient steps per support set (linear)
  double lr = 0.01;           // step size (linear)
  bool standardize = true;    // per-image zero mean / unit variance features
  std::uint32_t pool = 8;     // features: pool x pool gray box means; 0 = raw pixels
  std::uint64_t seed = 0;     // learner-side seed (random)
};

/// Feature vector of one image, scaled to [0, 1] before optional standardization.
inline std::vector<float> extract_features(const ImageView& img, const LearnerParams& p) {
  std::vector<float> f;
  if (p.pool > 0) {
    f = box_pool_gray(img, p.pool, p.pool);
  } else {
    f.resize(img.pixels.size());
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = static_cast<float>(img.pixels[i]) / 255.0f;
  }
  if (p.standardize && !f.empty()) {
    double mean = 0.0;
    for (float v : f) mean += v;
    mean /= static_cast<double>(f.size());
    double var = 0.0;
    for (float v : f) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / static_cast<double>(f.size()));
    for (auto& v : f) v = static_cast<float>(sd > 0 ? (v - mean) / sd : v - mean);
  }
  return f;
}

inline std::size_t feature_dim(const InputGeometry& g, const LearnerParams& p) {
  if (p.pool == 0) return g.scalars();
  return std::size_t{std::min(p.pool, g.height)} * std::min(p.pool, g.width);
}

struct Prototype {
  std::vector<double> sum;  // running sum; centroid = sum / count
  std::uint64_t count = 0;

  std::vector<float> centroid() const {
    std::vector<float> c(sum.size());
    for (std::size_t i = 0; i < sum.size(); ++i)
      c[i] = static_cast<float>(sum[i] / static_cast<double>(count));
    return c;
  }
};

/// Fitted parameters of one of the baseline learners.
struct LearnerModel {
  LearnerParams params;
  bool fitted = false;
  std::uint32_t label_count = 0;
  std::size_t dim = 0;
  std::uint64_t random_seed = 0;
  std::vector<std::optional<Prototype>> prototypes;  // by label
  std::vector<float> weights;                        // label_count x dim, row-major
  std::vector<float> bias;                           // label_count
  MacMeter macs;

  std::size_t weight_rows() const { return dim == 0 ? 0 : weights.size() / dim; }
};

namespace detail {

inline void fit_prototype_set(LearnerModel& m, const SupportSet& s, EpisodeSession& session) {
  std::vector<std::uint32_t> touched;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto f = extract_features(s.image(i), m.params);
    m.macs.fma(s.geometry.scalars(), Phase::Learning);
    auto& slot = m.prototypes.at(s.labels[i]);
    if (!slot) slot = Prototype{std::vector<double>(m.dim, 0.0), 0};
    for (std::size_t k = 0; k < m.dim; ++k) slot->sum[k] += f[k];
    ++slot->count;
    if (std::find(touched.begin(), touched.end(), s.labels[i]) == touched.end())
      touched.push_back(s.labels[i]);
  }
  for (auto label : touched) {
    std::uint64_t k = 0;
    for (auto l : s.labels) k += l == label ? 1 : 0;
    m.macs.mean(k, m.dim, Phase::Learning);
    const auto c = m.prototypes[label]->centroid();
    session.store("prototype/" + std::to_string(label),
                  std::as_bytes(std::span<const float>(c)), sizeof(float));
  }
}

inline void fit_linear_set(LearnerModel& m, const SupportSet& s) {
  const std::size_t L = m.label_count, d = m.dim, n = s.size();
  std::vector<std::vector<float>> feats;
  feats.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    feats.push_back(extract_features(s.image(i), m.params));
    m.macs.fma(s.geometry.scalars(), Phase::Learning);
  }
  std::vector<double> logits(L), grad_w(L * d), grad_b(L);
  for (std::uint32_t step = 0; step < m.params.steps; ++step) {
    std::fill(grad_w.begin(), grad_w.end(), 0.0);
    std::fill(grad_b.begin(), grad_b.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& f = feats[i];
      double max_logit = -INFINITY;
      for (std::size_t r = 0; r < L; ++r) {
        double z = m.bias[r];
        for (std::size_t k = 0; k < d; ++k) z += static_cast<double>(m.weights[r * d + k]) * f[k];
        logits[r] = z;
        max_logit = std::max(max_logit, z);
        m.macs.dot(d, Phase::Learning);
      }
      double norm = 0.0;
      for (auto& z : logits) norm += (z = std::exp(z - max_logit));
      for (std::size_t r = 0; r < L; ++r) {
        const double err = logits[r] / norm - (r == s.labels[i] ? 1.0 : 0.0);
        grad_b[r] += err;
        for (std::size_t k = 0; k < d; ++k) grad_w[r * d + k] += err * f[k];
      }
      m.macs.fma(L * d, Phase::Learning);
    }
    const double scale = m.params.lr / static_cast<double>(n);
    for (std::size_t r = 0; r < L; ++r) {
      m.bias[r] = static_cast<float>(m.bias[r] - scale * grad_b[r]);
      for (std::size_t k = 0; k < d; ++k)
        m.weights[r * d + k] = static_cast<float>(m.weights[r * d + k] - scale * grad_w[r * d + k]);
    }
    m.macs.fma(L * d, Phase::Learning);
  }
}

}  // namespace detail

/// Consumes every support set of a fresh session, in order, exactly once.
/// Prototype keeps per-label running means and writes each updated centroid
/// (float32) to the memory bank after every support set. LinearFineTune runs
/// `steps` full-batch softmax-regression steps per set with no replay and
/// stores nothing. Random stores nothing.
inline LearnerModel fit_stream(const LearnerParams& params, EpisodeSession& session) {
  LearnerModel m;
  m.params = params;
  m.label_count = session.output_label_count();
  m.dim = feature_dim(session.geometry(), params);
  m.random_seed = stream_seed(session.seed(), params.seed);
  if (params.kind == LearnerKind::Prototype) m.prototypes.resize(m.label_count);
  if (params.kind == LearnerKind::LinearFineTune) {
    m.weights.assign(std::size_t{m.label_count} * m.dim, 0.0f);
    m.bias.assign(m.label_count, 0.0f);
  }
  while (session.cursor() < session.nss()) {
    const auto s = session.next_support();
    switch (params.kind) {
      case LearnerKind::Random: break;
      case LearnerKind::Prototype: detail::fit_prototype_set(m, s, session); break;
      case LearnerKind::LinearFineTune: detail::fit_linear_set(m, s); break;
    }
  }
  m.fitted = true;
  return m;
}

/// Prototype: nearest centroid by squared Euclidean distance. Linear: largest
/// logit. Ties go to the lowest label. Random: uniform over the label space.
inline std::vector<std::uint32_t> predict(LearnerModel& m, std::span<const ImageView> inputs) {
  if (!m.fitted) throw Error(ErrorCode::ModelNotFitted, "predict before fit");
  std::vector<std::uint32_t> out;
  out.reserve(inputs.size());
  Xoshiro256ss rng(m.random_seed);
  std::vector<std::vector<float>> centroids(m.prototypes.size());
  for (std::size_t l = 0; l < m.prototypes.size(); ++l)
    if (m.prototypes[l]) centroids[l] = m.prototypes[l]->centroid();

  for (const auto& img : inputs) {
    if (m.params.kind == LearnerKind::Random) {
      out.push_back(static_cast<std::uint32_t>(rng.below(m.label_count)));
      continue;
    }
    const auto f = extract_features(img, m.params);
    if (f.size() != m.dim) throw Error(ErrorCode::Config, "input resolution does not match model");
    m.macs.fma(img.pixels.size(), Phase::Inference);
    std::uint32_t best = 0;
    double best_score = 0.0;
    bool any = false;
    for (std::uint32_t l = 0; l < m.label_count; ++l) {
      double score = 0.0;
      if (m.params.kind == LearnerKind::Prototype) {
        if (!m.prototypes[l]) continue;
        for (std::size_t k = 0; k < m.dim; ++k) {
          const double diff = static_cast<double>(f[k]) - centroids[l][k];
          score -= diff * diff;
        }
        m.macs.sqdist(m.dim, Phase::Inference);
      } else {
        score = m.bias[l];
        for (std::size_t k = 0; k < m.dim; ++k)
          score += static_cast<double>(m.weights[l * m.dim + k]) * f[k];
        m.macs.dot(m.dim, Phase::Inference);
      }
      if (!any || score > best_score) {
        best = l;
        best_score = score;
        any = true;
      }
    }
    out.push_back(best);
  }
  return out;
}

inline std::vector<std::uint32_t> predict(LearnerModel& m, const TargetSet& target) {
  std::vector<ImageView> views;
  views.reserve(target.count);
  for (std::size_t i = 0; i < target.count; ++i) views.push_back(target.image(i));
  return predict(m, views);
}

struct EpisodeOutcome {
  EpisodeScore score;
  MacCounter macs;
};

/// Full protocol for one episode: fit on the stream, fetch the target, score.
inline EpisodeOutcome run_episode(const LearnerParams& params, EpisodeSession& session) {
  auto model = fit_stream(params, session);
  const auto target = session.request_target();
  const auto labels = predict(model, target);
  EpisodeOutcome outcome;
  outcome.score = session.submit_predictions(labels);
  outcome.macs = model.macs.counter();
  return outcome;
}

}  // namespace cfsl
