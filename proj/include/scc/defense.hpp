#pragma once

// Test-time defenses. All of them search for a corrective perturbation delta
// inside an l-infinity ball around the (possibly attacked) input and predict
// on the corrected image; none of them sees the true label.
//
// The full pipeline runs in four stages:
//   1. warm-up: feature-deviation ascent, fused into a warmed image x^w;
//   2. soft prototype: multi-view, sharpened pseudo-label distribution on x^w
//      and the matching convex combination of text embeddings;
//   3. counterattack: sign ascent on lambda * L_cm + |f(x + delta) - f(x)|^2;
//   4. logit averaging over views of the corrected image.

#include <cstdint>
#include <string_view>
#include <vector>

#include "scc/augment.hpp"
#include "scc/encoder.hpp"
#include "scc/world.hpp"
#include "scc/zero_shot.hpp"

namespace scc {

enum class FeatureSpace { normalized, raw };

std::string_view to_string(FeatureSpace space);
FeatureSpace feature_space_from_string(std::string_view name);

struct DefenseConfig {
  double eps_d = 4.0 / 255.0;
  double alpha_d = 2.0 / 255.0;
  int steps = 2;
  int warm_steps = 5;  // 0 disables the warm-up
  double warm_eps = 4.0 / 255.0;
  double warm_alpha = 1.0 / 255.0;
  double lambda_cm = 4.0;
  double temp_sharpen = 0.5;
  ViewSpec proto_views{2, 6.0, 0x70726f746fULL, true};
  ViewSpec final_views{2, 6.0, 0x66696e616cULL, true};
  double fuse_tau = 0.2;
  double fuse_beta = 1.0;
  bool confidence_weighting = false;
  bool coupled_views = true;
  FeatureSpace feature_space = FeatureSpace::normalized;
  double logit_scale = kDefaultLogitScale;
};

void validate(const DefenseConfig& cfg);

/// The TTC baseline expressed as a restriction of the full pipeline: no
/// cross-modal term, no warm-up, one unflipped noise-free view.
DefenseConfig ttc_config(DefenseConfig cfg);

struct SoftPrototype {
  Vector p_bar;    // view-averaged distribution before sharpening
  Vector p_sharp;  // sharpened distribution
  Vector t_soft;   // sum_k p_sharp_k t_k (not unit norm in general)
  int y_hat = 0;
};

struct TraceEntry {
  Image delta;
  double deviation = 0.0;  // |f*(x + delta) - f*(x)|
};

struct Perturbation {
  Image delta;
  double eps = 0.0;
  std::vector<TraceEntry> trace;
};

struct DefenseReport {
  int label = 0;
  Vector prob;
  double margin = 0.0;  // semantic margin of the corrected image w.r.t. `label`
  double confidence_w = 0.0;
  double wall_time = 0.0;  // seconds
  Image delta;             // corrective perturbation actually applied
  double budget = 0.0;     // l-infinity budget delta must respect
  Image warm_delta;        // warm-up perturbation (empty when unused)
};

struct LossAndGrad {
  double value = 0.0;
  Image grad;
};

/// Sharpen a distribution: p_k^(1/T) / sum_j p_j^(1/T).
Vector sharpen(const Vector& p, double temp);

/// 1 - H(p) / ln K.
double confidence_weight(const Vector& p_bar);

/// |f*(clip(x + delta)) - f*(x)|^2 and its gradient in delta.
LossAndGrad feature_deviation(const DualEncoder& enc, const Image& x, const Image& delta, FeatureSpace space);

/// L_cm = cos(f(x_c), t_soft) - max_{k != y_hat} cos(f(x_c), t_k), with the
/// gradient w.r.t. x_c. The max contributes its active (smallest-index) term.
LossAndGrad cross_modal_loss(const DualEncoder& enc, const TextBank& bank, const Image& x_c,
                             const SoftPrototype& proto);

/// Value and delta-gradient of lambda * L_cm + feature deviation. With
/// coupled views the L_cm term is averaged over `views` applied to the
/// composite image; the deviation term is always measured on the base image.
LossAndGrad scc_objective(const DualEncoder& enc, const TextBank& bank, const Image& x_adv, const Image& delta,
                          const SoftPrototype& proto, const DefenseConfig& cfg, const ViewPlan& views);

Image scc_objective_grad(const DualEncoder& enc, const TextBank& bank, const Image& x_adv, const Image& delta,
                         const SoftPrototype& proto, const DefenseConfig& cfg, const ViewPlan& views);

/// Retains steps with deviation >= tau (all steps when none qualify), weights
/// step s (1-based) by s * beta^(S - s), and projects the average to `eps`.
Image step_weighted_fuse(const std::vector<TraceEntry>& trace, double fuse_tau, double fuse_beta, double eps);

/// Feature-deviation-only ascent with the warm-up budget; returns the fused
/// perturbation and its trace. The first step takes a seeded random sign
/// because the deviation gradient vanishes at delta = 0.
Perturbation warmup_perturbation(const DualEncoder& enc, const Image& x_adv, const DefenseConfig& cfg,
                                 std::uint64_t seed);

Image warmup_counterattack(const DualEncoder& enc, const Image& x_adv, const DefenseConfig& cfg, std::uint64_t seed);

SoftPrototype soft_prototype_from_probs(const TextBank& bank, const Vector& p_bar, double temp_sharpen);

SoftPrototype build_soft_prototype(const DualEncoder& enc, const TextBank& bank, const Image& x_warm,
                                   const DefenseConfig& cfg, std::uint64_t seed);

/// Counterattack loop of the full pipeline (stage 3), fused.
Perturbation scc_counterattack(const DualEncoder& enc, const TextBank& bank, const Image& x_in,
                               const SoftPrototype& proto, const DefenseConfig& cfg, std::uint64_t seed);

/// Logit averaging over views of `x`, then softmax.
DefenseReport predict_with_views(const DualEncoder& enc, const TextBank& bank, const Image& x, const ViewPlan& views,
                                 double logit_scale);

DefenseReport scc_defend(const DualEncoder& enc, const TextBank& bank, const Image& x_in, const DefenseConfig& cfg,
                         std::uint64_t seed);

DefenseReport rn_defend(const DualEncoder& enc, const TextBank& bank, const Image& x, double eps, std::uint64_t seed,
                        double logit_scale = kDefaultLogitScale);
DefenseReport anti_adv_defend(const DualEncoder& enc, const TextBank& bank, const Image& x, const DefenseConfig& cfg);
DefenseReport hd_defend(const DualEncoder& enc, const TextBank& bank, const Image& x, const DefenseConfig& cfg);
DefenseReport ttc_defend(const DualEncoder& enc, const TextBank& bank, const Image& x, const DefenseConfig& cfg,
                         std::uint64_t seed);
/// Undefended zero-shot prediction, wrapped as a report.
DefenseReport no_defense(const DualEncoder& enc, const TextBank& bank, const Image& x,
                         double logit_scale = kDefaultLogitScale);

/// View specs with seeds derived from a per-sample seed; prototype and final
/// views draw from independent streams.
ViewSpec proto_view_spec(const DefenseConfig& cfg, std::uint64_t seed);
ViewSpec final_view_spec(const DefenseConfig& cfg, std::uint64_t seed);

}  // namespace scc
