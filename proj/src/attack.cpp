#include "scc/attack.hpp"

#include <string>

#include "scc/errors.hpp"

namespace scc {

std::string_view to_string(AttackKind kind) { return kind == AttackKind::pgd ? "pgd" : "cw"; }

AttackKind attack_kind_from_string(std::string_view name) {
  if (name == "pgd") return AttackKind::pgd;
  if (name == "cw") return AttackKind::cw;
  throw PreconditionError("unknown attack kind '" + std::string(name) + "'");
}

void validate(const AttackConfig& cfg) {
  if (cfg.eps_a < 0) throw PreconditionError("attack eps_a must be >= 0");
  if (!(cfg.alpha > 0)) throw PreconditionError("attack alpha must be > 0");
  if (cfg.steps < 1) throw PreconditionError("attack steps must be >= 1");
  if (cfg.cw_kappa < 0) throw PreconditionError("attack cw_kappa must be >= 0");
  if (!(cfg.logit_scale > 0)) throw PreconditionError("attack logit_scale must be > 0");
}

Image attack_loss_gradient(const DualEncoder& enc, const TextBank& bank, const Image& x, int label,
                           const AttackConfig& cfg) {
  const Vector embedding = enc.forward(x);
  const ZeroShotPrediction pred = predict_from_embedding(bank, embedding, cfg.logit_scale);
  Vector grad_logits = Vector::Zero(bank.num_classes());
  if (cfg.kind == AttackKind::pgd) {
    grad_logits = pred.prob;
    grad_logits[label] -= 1.0;
  } else {
    const auto [rival, rival_logit] = max_excluding(pred.logits, label);
    if (pred.logits[label] - rival_logit > -cfg.cw_kappa) {
      grad_logits[label] = -1.0;
      grad_logits[rival] = 1.0;
    }
  }
  return enc.vjp(x, logit_pullback(bank, embedding, grad_logits, cfg.logit_scale));
}

namespace {

Image sign_ascent(const DualEncoder& enc, const TextBank& bank, const Image& x, int label, const AttackConfig& cfg) {
  validate(cfg);
  Image adv = x;
  if (cfg.eps_a == 0.0) return adv;
  for (int step = 0; step < cfg.steps; ++step) {
    const Image grad = attack_loss_gradient(enc, bank, adv, label, cfg);
    const Image moved = adv + cfg.alpha * grad.array().sign().matrix();
    adv = clip_unit(x + project_linf(moved - x, cfg.eps_a));
  }
  return adv;
}

}  // namespace

Image pgd_attack(const DualEncoder& enc, const TextBank& bank, const Image& x, int label, const AttackConfig& cfg) {
  if (cfg.kind != AttackKind::pgd) throw PreconditionError("pgd_attack: config kind is not pgd");
  return sign_ascent(enc, bank, x, label, cfg);
}

Image cw_attack(const DualEncoder& enc, const TextBank& bank, const Image& x, int label, const AttackConfig& cfg) {
  if (cfg.kind != AttackKind::cw) throw PreconditionError("cw_attack: config kind is not cw");
  return sign_ascent(enc, bank, x, label, cfg);
}

Image run_attack(const DualEncoder& enc, const TextBank& bank, const Image& x, int label, const AttackConfig& cfg) {
  return cfg.kind == AttackKind::pgd ? pgd_attack(enc, bank, x, label, cfg) : cw_attack(enc, bank, x, label, cfg);
}

ImageBatch attack_batch(const DualEncoder& enc, const TextBank& bank, const ImageBatch& batch,
                        const AttackConfig& cfg) {
  ImageBatch out = batch;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    out.images[i] = run_attack(enc, bank, batch.images[i], batch.labels[i], cfg);
  }
  return out;
}

}  // namespace scc
