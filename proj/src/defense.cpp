#include "scc/defense.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <string>

#include "scc/errors.hpp"
#include "scc/rng.hpp"

namespace scc {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

/// Zeroes gradient entries where clip(x + delta) is saturated.
Image mask_clipped(const Image& pre, const Image& grad) {
  return (pre.array() > 0.0 && pre.array() < 1.0).select(grad, 0.0);
}

Image random_signs(Eigen::Index rows, Eigen::Index cols, Engine& engine) {
  std::bernoulli_distribution coin(0.5);
  Image s(rows, cols);
  for (Eigen::Index i = 0; i < s.size(); ++i) s.data()[i] = coin(engine) ? 1.0 : -1.0;
  return s;
}

/// sign(grad), or a random sign vector when the gradient is identically zero.
Image ascent_direction(const Image& grad, Engine& engine) {
  if ((grad.array() == 0.0).all()) return random_signs(grad.rows(), grad.cols(), engine);
  return grad.array().sign().matrix();
}

double deviation_norm(const DualEncoder& enc, const Image& x, const Image& delta, FeatureSpace space) {
  return std::sqrt(feature_deviation(enc, x, delta, space).value);
}

/// Generic sign-gradient loop on a deviation-tracked objective.
template <typename GradFn>
Perturbation sign_pgd(const DualEncoder& enc, const Image& x, double eps, double alpha, int steps, FeatureSpace space,
                      Engine& engine, GradFn&& grad_fn) {
  Perturbation out;
  out.eps = eps;
  Image delta = Image::Zero(x.rows(), x.cols());
  for (int s = 0; s < steps; ++s) {
    const Image grad = grad_fn(delta);
    delta = project_linf(delta + alpha * ascent_direction(grad, engine), eps);
    out.trace.push_back({delta, deviation_norm(enc, x, delta, space)});
  }
  out.delta = delta;
  return out;
}

DefenseReport report_for(const DualEncoder& enc, const TextBank& bank, const Image& x, const Image& delta, double eps,
                         double logit_scale) {
  const Image composite = clip_unit(x + delta);
  const ZeroShotPrediction pred = zero_shot_predict(enc, bank, composite, logit_scale);
  DefenseReport r;
  r.label = pred.label;
  r.prob = pred.prob;
  r.margin = semantic_margin(enc, bank, composite, pred.label);
  r.confidence_w = confidence_weight(pred.prob);
  r.delta = delta;
  r.budget = eps;
  return r;
}

}  // namespace

std::string_view to_string(FeatureSpace space) {
  return space == FeatureSpace::normalized ? "normalized" : "raw";
}

FeatureSpace feature_space_from_string(std::string_view name) {
  if (name == "normalized") return FeatureSpace::normalized;
  if (name == "raw") return FeatureSpace::raw;
  throw PreconditionError("unknown feature space '" + std::string(name) + "'");
}

void validate(const DefenseConfig& cfg) {
  if (cfg.eps_d < 0) throw PreconditionError("eps_d must be >= 0");
  if (!(cfg.alpha_d > 0)) throw PreconditionError("alpha_d must be > 0");
  if (cfg.steps < 1) throw PreconditionError("steps must be >= 1");
  if (cfg.warm_steps < 0) throw PreconditionError("warm_steps must be >= 0");
  if (cfg.warm_eps < 0) throw PreconditionError("warm_eps must be >= 0");
  if (!(cfg.warm_alpha > 0)) throw PreconditionError("warm_alpha must be > 0");
  if (cfg.lambda_cm < 0) throw PreconditionError("lambda_cm must be >= 0");
  if (!(cfg.temp_sharpen > 0 && cfg.temp_sharpen <= 1)) throw PreconditionError("temp_sharpen must lie in (0,1]");
  if (cfg.fuse_tau < 0) throw PreconditionError("fuse_tau must be >= 0");
  if (!(cfg.fuse_beta > 0 && cfg.fuse_beta <= 1)) throw PreconditionError("fuse_beta must lie in (0,1]");
  if (!(cfg.logit_scale > 0)) throw PreconditionError("logit_scale must be > 0");
  validate(cfg.proto_views);
  validate(cfg.final_views);
}

DefenseConfig ttc_config(DefenseConfig cfg) {
  cfg.lambda_cm = 0.0;
  cfg.warm_steps = 0;
  cfg.final_views = ViewSpec{1, 0.0, cfg.final_views.seed, false};
  return cfg;
}

ViewSpec proto_view_spec(const DefenseConfig& cfg, std::uint64_t seed) {
  ViewSpec spec = cfg.proto_views;
  spec.seed = stream_seed(cfg.proto_views.seed, "proto-views", seed);
  return spec;
}

ViewSpec final_view_spec(const DefenseConfig& cfg, std::uint64_t seed) {
  ViewSpec spec = cfg.final_views;
  spec.seed = stream_seed(cfg.final_views.seed, "final-views", seed);
  return spec;
}

Vector sharpen(const Vector& p, double temp) {
  if (!(temp > 0)) throw PreconditionError("sharpen: temperature must be positive");
  // Work in log space so tiny probabilities survive large exponents.
  const Vector logs = (p.array().max(0.0).log() / temp).matrix();
  const double top = logs.maxCoeff();
  Vector q = (logs.array() - top).exp().matrix();
  return q / q.sum();
}

double confidence_weight(const Vector& p_bar) {
  const auto k = p_bar.size();
  if (k < 2) throw SingleClassError();
  double entropy = 0.0;
  for (Eigen::Index i = 0; i < k; ++i) {
    if (p_bar[i] > 0) entropy -= p_bar[i] * std::log(p_bar[i]);
  }
  const double w = 1.0 - entropy / std::log(static_cast<double>(k));
  return std::clamp(w, 0.0, 1.0);
}

LossAndGrad feature_deviation(const DualEncoder& enc, const Image& x, const Image& delta, FeatureSpace space) {
  const Image pre = x + delta;
  const Image composite = clip_unit(pre);
  const Vector f = enc.forward(composite);
  const Vector f0 = enc.forward(x);
  LossAndGrad out;
  Vector grad_f;
  if (space == FeatureSpace::raw) {
    const Vector diff = f - f0;
    out.value = diff.squaredNorm();
    grad_f = 2.0 * diff;
  } else {
    const double norm = f.norm();
    if (!(norm > kNormFloor)) throw ZeroNormError();
    const Vector unit = f / norm;
    const Vector diff = unit - l2_normalize(f0).values();
    out.value = diff.squaredNorm();
    const Vector u = 2.0 * diff;
    grad_f = (u - unit.dot(u) * unit) / norm;
  }
  out.grad = mask_clipped(pre, enc.vjp(composite, grad_f));
  return out;
}

LossAndGrad cross_modal_loss(const DualEncoder& enc, const TextBank& bank, const Image& x_c,
                             const SoftPrototype& proto) {
  if (bank.num_classes() < 2) throw SingleClassError();
  const Vector e = enc.forward(x_c);
  const UnitEmbedding<double> unit = l2_normalize(e);
  const UnitEmbedding<double> anchor = l2_normalize(proto.t_soft);
  const Vector sims = bank.embeddings * unit.values();
  const auto [rival, rival_cos] = max_excluding(sims, proto.y_hat);

  LossAndGrad out;
  out.value = cosine(unit, anchor) - rival_cos;
  const Vector rival_row = bank.row(rival);
  const Vector grad_e = grad_cosine_wrt_embedding(e, anchor) - grad_cosine_wrt_embedding(e, Eigen::Ref<const Vector>(rival_row));
  out.grad = enc.vjp(x_c, grad_e);
  return out;
}

LossAndGrad scc_objective(const DualEncoder& enc, const TextBank& bank, const Image& x_adv, const Image& delta,
                          const SoftPrototype& proto, const DefenseConfig& cfg, const ViewPlan& views) {
  LossAndGrad out = feature_deviation(enc, x_adv, delta, cfg.feature_space);
  double lambda = cfg.lambda_cm;
  if (cfg.confidence_weighting && lambda > 0) lambda *= confidence_weight(proto.p_bar);
  if (lambda == 0.0) return out;

  const Image pre = x_adv + delta;
  const Image composite = clip_unit(pre);
  double cm_value = 0.0;
  Image cm_grad;
  if (cfg.coupled_views && views.size() > 0) {
    cm_grad = Image::Zero(x_adv.rows(), x_adv.cols());
    for (std::size_t i = 0; i < views.size(); ++i) {
      const LossAndGrad v = cross_modal_loss(enc, bank, apply_view(composite, views, i), proto);
      cm_value += v.value;
      cm_grad += view_pullback(composite, views, i, v.grad);
    }
    const double inv = 1.0 / static_cast<double>(views.size());
    cm_value *= inv;
    cm_grad *= inv;
  } else {
    const LossAndGrad v = cross_modal_loss(enc, bank, composite, proto);
    cm_value = v.value;
    cm_grad = v.grad;
  }
  out.value += lambda * cm_value;
  out.grad += lambda * mask_clipped(pre, cm_grad);
  return out;
}

Image scc_objective_grad(const DualEncoder& enc, const TextBank& bank, const Image& x_adv, const Image& delta,
                         const SoftPrototype& proto, const DefenseConfig& cfg, const ViewPlan& views) {
  return scc_objective(enc, bank, x_adv, delta, proto, cfg, views).grad;
}

Image step_weighted_fuse(const std::vector<TraceEntry>& trace, double fuse_tau, double fuse_beta, double eps) {
  if (trace.empty()) throw EmptyTraceError();
  const std::size_t steps = trace.size();
  std::vector<std::size_t> kept;
  for (std::size_t s = 0; s < steps; ++s) {
    if (trace[s].deviation >= fuse_tau) kept.push_back(s);
  }
  if (kept.empty()) {
    for (std::size_t s = 0; s < steps; ++s) kept.push_back(s);
  }
  Image sum = Image::Zero(trace.front().delta.rows(), trace.front().delta.cols());
  double total = 0.0;
  for (std::size_t s : kept) {
    const double index = static_cast<double>(s + 1);
    const double w = index * std::pow(fuse_beta, static_cast<double>(steps - (s + 1)));
    sum += w * trace[s].delta;
    total += w;
  }
  return project_linf(Image(sum / total), eps);
}

Perturbation warmup_perturbation(const DualEncoder& enc, const Image& x_adv, const DefenseConfig& cfg,
                                 std::uint64_t seed) {
  if (cfg.warm_steps < 1) throw PreconditionError("warmup_counterattack: warm_steps must be >= 1");
  Engine engine = make_engine(seed, "warm-start");
  Perturbation p = sign_pgd(enc, x_adv, cfg.warm_eps, cfg.warm_alpha, cfg.warm_steps, cfg.feature_space, engine,
                            [&](const Image& delta) { return feature_deviation(enc, x_adv, delta, cfg.feature_space).grad; });
  p.delta = step_weighted_fuse(p.trace, cfg.fuse_tau, cfg.fuse_beta, cfg.warm_eps);
  return p;
}

Image warmup_counterattack(const DualEncoder& enc, const Image& x_adv, const DefenseConfig& cfg, std::uint64_t seed) {
  return clip_unit(x_adv + warmup_perturbation(enc, x_adv, cfg, seed).delta);
}

SoftPrototype soft_prototype_from_probs(const TextBank& bank, const Vector& p_bar, double temp_sharpen) {
  SoftPrototype proto;
  proto.p_bar = p_bar;
  proto.p_sharp = sharpen(p_bar, temp_sharpen);
  proto.t_soft = bank.embeddings.transpose() * proto.p_sharp;
  proto.y_hat = static_cast<int>(argmax(proto.p_sharp));
  return proto;
}

SoftPrototype build_soft_prototype(const DualEncoder& enc, const TextBank& bank, const Image& x_warm,
                                   const DefenseConfig& cfg, std::uint64_t seed) {
  const std::vector<Image> views = make_views(x_warm, proto_view_spec(cfg, seed));
  Vector p_bar = Vector::Zero(bank.num_classes());
  for (const Image& v : views) p_bar += zero_shot_predict(enc, bank, v, cfg.logit_scale).prob;
  p_bar /= static_cast<double>(views.size());
  return soft_prototype_from_probs(bank, p_bar, cfg.temp_sharpen);
}

Perturbation scc_counterattack(const DualEncoder& enc, const TextBank& bank, const Image& x_in,
                               const SoftPrototype& proto, const DefenseConfig& cfg, std::uint64_t seed) {
  const ViewPlan views = make_view_plan(final_view_spec(cfg, seed), x_in.rows(), x_in.cols());
  Engine engine = make_engine(seed, "counter-start");
  Perturbation p = sign_pgd(enc, x_in, cfg.eps_d, cfg.alpha_d, cfg.steps, cfg.feature_space, engine,
                            [&](const Image& delta) { return scc_objective_grad(enc, bank, x_in, delta, proto, cfg, views); });
  p.delta = step_weighted_fuse(p.trace, cfg.fuse_tau, cfg.fuse_beta, cfg.eps_d);
  return p;
}

DefenseReport predict_with_views(const DualEncoder& enc, const TextBank& bank, const Image& x, const ViewPlan& views,
                                 double logit_scale) {
  Vector logits = Vector::Zero(bank.num_classes());
  for (std::size_t i = 0; i < views.size(); ++i) {
    logits += zero_shot_predict(enc, bank, apply_view(x, views, i), logit_scale).logits;
  }
  logits /= static_cast<double>(views.size());
  DefenseReport r;
  r.prob = softmax_with_temp(logits, 1.0);
  r.label = static_cast<int>(argmax(logits));
  r.margin = semantic_margin(enc, bank, x, r.label);
  r.confidence_w = confidence_weight(r.prob);
  return r;
}

DefenseReport scc_defend(const DualEncoder& enc, const TextBank& bank, const Image& x_in, const DefenseConfig& cfg,
                         std::uint64_t seed) {
  validate(cfg);
  const auto start = Clock::now();

  Image x_warm = x_in;
  Image warm_delta;
  if (cfg.warm_steps > 0) {
    warm_delta = warmup_perturbation(enc, x_in, cfg, seed).delta;
    x_warm = clip_unit(x_in + warm_delta);
  }

  SoftPrototype proto;
  bool have_proto = false;
  if (cfg.lambda_cm > 0) {
    proto = build_soft_prototype(enc, bank, x_warm, cfg, seed);
    have_proto = true;
  }

  const Perturbation counter = scc_counterattack(enc, bank, x_in, proto, cfg, seed);
  const ViewPlan final_views = make_view_plan(final_view_spec(cfg, seed), x_in.rows(), x_in.cols());
  DefenseReport r = predict_with_views(enc, bank, clip_unit(x_in + counter.delta), final_views, cfg.logit_scale);
  if (have_proto) r.confidence_w = confidence_weight(proto.p_bar);
  r.delta = counter.delta;
  r.budget = cfg.eps_d;
  r.warm_delta = std::move(warm_delta);
  r.wall_time = seconds_since(start);
  return r;
}

DefenseReport ttc_defend(const DualEncoder& enc, const TextBank& bank, const Image& x, const DefenseConfig& cfg,
                         std::uint64_t seed) {
  return scc_defend(enc, bank, x, ttc_config(cfg), seed);
}

DefenseReport rn_defend(const DualEncoder& enc, const TextBank& bank, const Image& x, double eps, std::uint64_t seed,
                        double logit_scale) {
  if (eps < 0) throw PreconditionError("rn_defend: eps must be >= 0");
  const auto start = Clock::now();
  Image noise = Image::Zero(x.rows(), x.cols());
  if (eps > 0) {
    Engine engine = make_engine(seed, "rn-noise");
    std::uniform_real_distribution<double> uniform(-eps, eps);
    for (Eigen::Index i = 0; i < noise.size(); ++i) noise.data()[i] = uniform(engine);
  }
  DefenseReport r = report_for(enc, bank, x, noise, eps, logit_scale);
  r.wall_time = seconds_since(start);
  return r;
}

DefenseReport anti_adv_defend(const DualEncoder& enc, const TextBank& bank, const Image& x, const DefenseConfig& cfg) {
  validate(cfg);
  const auto start = Clock::now();
  const int y0 = zero_shot_predict(enc, bank, x, cfg.logit_scale).label;
  const Vector target = bank.row(y0);
  Image delta = Image::Zero(x.rows(), x.cols());
  for (int s = 0; s < cfg.steps; ++s) {
    const Image pre = x + delta;
    const Image composite = clip_unit(pre);
    const Vector e = enc.forward(composite);
    const Image grad = mask_clipped(pre, enc.vjp(composite, grad_cosine_wrt_embedding(e, Eigen::Ref<const Vector>(target))));
    delta = project_linf(delta + cfg.alpha_d * grad.array().sign().matrix(), cfg.eps_d);
  }
  DefenseReport r = report_for(enc, bank, x, delta, cfg.eps_d, cfg.logit_scale);
  r.wall_time = seconds_since(start);
  return r;
}

DefenseReport hd_defend(const DualEncoder& enc, const TextBank& bank, const Image& x, const DefenseConfig& cfg) {
  validate(cfg);
  const auto start = Clock::now();
  const double k = static_cast<double>(bank.num_classes());
  Image delta = Image::Zero(x.rows(), x.cols());
  for (int s = 0; s < cfg.steps; ++s) {
    const Image pre = x + delta;
    const Image composite = clip_unit(pre);
    const Vector e = enc.forward(composite);
    const ZeroShotPrediction pred = predict_from_embedding(bank, e, cfg.logit_scale);
    // d/dz of (1/K) sum_k CE(softmax(z), k) = p - 1/K
    const Vector grad_logits = (pred.prob.array() - 1.0 / k).matrix();
    const Image grad =
        mask_clipped(pre, enc.vjp(composite, logit_pullback(bank, e, grad_logits, cfg.logit_scale)));
    delta = project_linf(delta - cfg.alpha_d * grad.array().sign().matrix(), cfg.eps_d);
  }
  DefenseReport r = report_for(enc, bank, x, delta, cfg.eps_d, cfg.logit_scale);
  r.wall_time = seconds_since(start);
  return r;
}

DefenseReport no_defense(const DualEncoder& enc, const TextBank& bank, const Image& x, double logit_scale) {
  const auto start = Clock::now();
  DefenseReport r = report_for(enc, bank, x, Image::Zero(x.rows(), x.cols()), 0.0, logit_scale);
  r.wall_time = seconds_since(start);
  return r;
}

}  // namespace scc
