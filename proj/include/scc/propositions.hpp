#pragma once

// Executable property checks: gradient contracts against central differences
// and the margin, variance-reduction, suppression and sharpening properties.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "scc/numgrad.hpp"
#include "scc/rng.hpp"

namespace scc {

inline constexpr double kFiniteDiffStep = 1e-6;
inline constexpr double kGradientTolerance = 1e-5;

struct CheckResult {
  std::string name;
  bool passed = false;
  double metric = 0.0;  // worst error or violation count, per check
  std::string detail;
};

struct PropositionReport {
  std::vector<CheckResult> checks;

  bool all_passed() const {
    for (const auto& c : checks) {
      if (!c.passed) return false;
    }
    return !checks.empty();
  }
  const CheckResult* find(const std::string& name) const {
    for (const auto& c : checks) {
      if (c.name == name) return &c;
    }
    return nullptr;
  }
};

/// |analytic - central difference| / max(|central difference|, 1e-8).
template <typename Value, typename Grad>
double gradient_relative_error(Value&& value, Grad&& grad, const Vector& x, double h = kFiniteDiffStep) {
  const Vector numeric = finite_diff_gradient(value, x, h);
  const Vector analytic = grad(x);
  return (analytic - numeric).norm() / std::max(numeric.norm(), 1e-8);
}

CheckResult summarize_gradient_check(std::string name, const std::vector<double>& errors,
                                     double tolerance = kGradientTolerance);

/// Compares `model.vjp(x, u)` with the finite-difference gradient of
/// x -> u . model.forward(x) on random interior inputs. Works for any type
/// exposing flat `forward` and `vjp`, including deliberately broken ones.
template <typename Model>
CheckResult check_vjp(std::string name, const Model& model, Eigen::Index input_size, Eigen::Index embed_dim,
                      std::uint64_t seed, int instances = 5) {
  Engine engine = make_engine(seed, "vjp-check");
  std::uniform_real_distribution<double> pixel(0.2, 0.8);
  std::normal_distribution<double> normal;
  std::vector<double> errors;
  for (int n = 0; n < instances; ++n) {
    Vector x(input_size);
    Vector u(embed_dim);
    for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = pixel(engine);
    for (Eigen::Index i = 0; i < u.size(); ++i) u[i] = normal(engine);
    errors.push_back(gradient_relative_error([&](const Vector& v) { return u.dot(model.forward(v)); },
                                             [&](const Vector& v) { return Vector(model.vjp(v, u)); }, x));
  }
  return summarize_gradient_check(std::move(name), errors);
}

struct PropositionOptions {
  int margin_starts = 128;
  int margin_steps = 8;
  double margin_alpha = 1e-3;
  int variance_draws = 100000;
  int suppression_trials = 10000;
  int sharpen_samples = 10000;
  int gradient_instances = 5;
};

CheckResult check_grad_cosine(std::uint64_t seed, int instances = 5);
CheckResult check_margin_monotonicity(std::uint64_t seed, const PropositionOptions& opts = {});
CheckResult check_variance_reduction(std::uint64_t seed, int draws, int views);
CheckResult check_suppression(std::uint64_t seed, int trials, int views = 0);  // views 0: random 1..8
CheckResult check_suppression_equality(std::uint64_t seed, int trials);
CheckResult check_sharpening(std::uint64_t seed, int samples, double temp = 0.5);
CheckResult check_cross_modal_gradient(std::uint64_t seed, int instances = 5);
CheckResult check_objective_gradient(std::uint64_t seed, bool coupled, int instances = 5);

/// All checks; `all_passed()` is the suite verdict.
PropositionReport run_proposition_suite(std::uint64_t seed, const PropositionOptions& opts = {});

}  // namespace scc
