#include "scc/zero_shot.hpp"

#include "scc/errors.hpp"

namespace scc {

Vector cosines(const TextBank& bank, const Vector& embedding) {
  if (embedding.size() != bank.dim()) throw ShapeMismatchError("embedding dimension != text bank dimension");
  const UnitEmbedding<double> unit = l2_normalize(embedding);
  return bank.embeddings * unit.values();
}

ZeroShotPrediction predict_from_embedding(const TextBank& bank, const Vector& embedding, double logit_scale) {
  ZeroShotPrediction out;
  out.logits = logit_scale * cosines(bank, embedding);
  out.prob = softmax_with_temp(out.logits, 1.0);
  out.label = static_cast<int>(argmax(out.logits));
  return out;
}

ZeroShotPrediction zero_shot_predict(const DualEncoder& enc, const TextBank& bank, const Image& x,
                                     double logit_scale) {
  return predict_from_embedding(bank, enc.forward(x), logit_scale);
}

double semantic_margin_from_embedding(const TextBank& bank, const Vector& embedding, int label) {
  if (bank.num_classes() < 2) throw SingleClassError();
  if (label < 0 || label >= bank.num_classes()) throw PreconditionError("semantic_margin: label out of range");
  const Vector sims = cosines(bank, embedding);
  return sims[label] - max_excluding(sims, label).second;
}

double semantic_margin(const DualEncoder& enc, const TextBank& bank, const Image& x, int label) {
  return semantic_margin_from_embedding(bank, enc.forward(x), label);
}

Vector logit_pullback(const TextBank& bank, const Vector& embedding, const Vector& grad_logits,
                      double logit_scale) {
  const double norm = embedding.norm();
  if (!(norm > kNormFloor)) throw ZeroNormError();
  const Vector unit = embedding / norm;
  const Vector sims = bank.embeddings * unit;
  // sum_k g_k (t_k - c_k u) / |e|
  return logit_scale * (bank.embeddings.transpose() * grad_logits - grad_logits.dot(sims) * unit) / norm;
}

}  // namespace scc
