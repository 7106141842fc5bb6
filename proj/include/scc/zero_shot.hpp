#pragma once

// Zero-shot head shared by attacks and defenses: logits are the scaled
// cosines between the normalized image embedding and each text embedding.

#include "scc/encoder.hpp"
#include "scc/numgrad.hpp"
#include "scc/world.hpp"

namespace scc {

inline constexpr double kDefaultLogitScale = 100.0;

struct ZeroShotPrediction {
  int label = 0;
  Vector prob;
  Vector logits;
};

/// Cosines between the normalized embedding `e` and every bank row.
Vector cosines(const TextBank& bank, const Vector& embedding);

ZeroShotPrediction predict_from_embedding(const TextBank& bank, const Vector& embedding, double logit_scale);

ZeroShotPrediction zero_shot_predict(const DualEncoder& enc, const TextBank& bank, const Image& x,
                                     double logit_scale = kDefaultLogitScale);

/// cos to the labelled class minus the best competing cosine.
double semantic_margin(const DualEncoder& enc, const TextBank& bank, const Image& x, int label);
double semantic_margin_from_embedding(const TextBank& bank, const Vector& embedding, int label);

/// Chains dL/dlogits through the cosine head: returns dL/d(embedding) for
/// logits_k = scale * cos(e, t_k).
Vector logit_pullback(const TextBank& bank, const Vector& embedding, const Vector& grad_logits,
                      double logit_scale);

}  // namespace scc
