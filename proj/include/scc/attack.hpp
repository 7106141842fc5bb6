#pragma once

// White-box l-infinity attacks on the undefended zero-shot head. The attacker
// sees encoder weights and gradients but not the test-time defense.

#include <string_view>

#include "scc/encoder.hpp"
#include "scc/world.hpp"
#include "scc/zero_shot.hpp"

namespace scc {

enum class AttackKind { pgd, cw };

std::string_view to_string(AttackKind kind);
AttackKind attack_kind_from_string(std::string_view name);

struct AttackConfig {
  AttackKind kind = AttackKind::pgd;
  double eps_a = 8.0 / 255.0;
  double alpha = 2.0 / 255.0;  // eps_a / 4
  int steps = 10;
  double cw_kappa = 0.0;
  double logit_scale = kDefaultLogitScale;
};

void validate(const AttackConfig& cfg);

/// Gradient of the attack loss at `x` (cross-entropy for pgd, negated
/// clamped margin for cw).
Image attack_loss_gradient(const DualEncoder& enc, const TextBank& bank, const Image& x, int label,
                           const AttackConfig& cfg);

/// Sign-gradient ascent from x, projected to the eps_a ball and [0,1] after
/// every step. No random start; the final iterate is returned.
Image pgd_attack(const DualEncoder& enc, const TextBank& bank, const Image& x, int label, const AttackConfig& cfg);

/// Same loop on the margin loss max(z_y - max_{j != y} z_j, -kappa), descended.
Image cw_attack(const DualEncoder& enc, const TextBank& bank, const Image& x, int label, const AttackConfig& cfg);

/// Dispatches on cfg.kind.
Image run_attack(const DualEncoder& enc, const TextBank& bank, const Image& x, int label, const AttackConfig& cfg);

ImageBatch attack_batch(const DualEncoder& enc, const TextBank& bank, const ImageBatch& batch,
                        const AttackConfig& cfg);

}  // namespace scc
