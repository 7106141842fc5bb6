#include "scc/propositions.hpp"

#include <cmath>
#include <cstdio>

#include "scc/augment.hpp"
#include "scc/defense.hpp"
#include "scc/encoder.hpp"
#include "scc/world.hpp"
#include "scc/zero_shot.hpp"

namespace scc {

namespace {

constexpr double kTieGap = 1e-4;

std::string format(const char* pattern, double a, double b = 0.0) {
  char buf[160];
  std::snprintf(buf, sizeof buf, pattern, a, b);
  return buf;
}

struct Fixture {
  TextBank bank;
  ImageBatch batch;
  DualEncoder linear;
  DualEncoder mlp;
};

Fixture make_fixture(std::uint64_t seed) {
  TextBank bank = make_text_bank(10, 16, stream_seed(seed, "fixture-bank"), 0.9);
  ImageBatch batch = sample_images(bank, stream_seed(seed, "fixture-decoder"), 4, 0.05, stream_seed(seed, "fixture-images"));
  DualEncoder linear = fit_linear_encoder(batch, bank, 1e-3);
  MlpTrainOptions options;
  options.steps = 100;
  options.seed = stream_seed(seed, "fixture-mlp");
  DualEncoder mlp = train_mlp_encoder(batch, bank, options);
  return {std::move(bank), std::move(batch), std::move(linear), std::move(mlp)};
}

Vector dirichlet(Engine& engine, const Vector& alpha) {
  Vector q(alpha.size());
  for (Eigen::Index k = 0; k < alpha.size(); ++k) {
    std::gamma_distribution<double> gamma(alpha[k], 1.0);
    q[k] = gamma(engine);
  }
  return q / q.sum();
}

Vector uniform_simplex(Engine& engine, Eigen::Index k) { return dirichlet(engine, Vector::Ones(k)); }

Image random_image(Engine& engine, Eigen::Index h, Eigen::Index w, double lo, double hi) {
  std::uniform_real_distribution<double> pixel(lo, hi);
  Image x(h, w);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = pixel(engine);
  return x;
}

/// Gap between the best and second-best competitor of `skip`.
double competitor_gap(const TextBank& bank, const Vector& embedding, int skip) {
  const Vector sims = cosines(bank, embedding);
  const auto [best, top] = max_excluding(sims, skip);
  double second = -std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < sims.size(); ++k) {
    if (k != skip && k != best) second = std::max(second, sims[k]);
  }
  return sims.size() > 2 ? top - second : std::numeric_limits<double>::infinity();
}

double entropy(const Vector& p) {
  double h = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p[i] > 0) h -= p[i] * std::log(p[i]);
  }
  return h;
}

SoftPrototype random_prototype(Engine& engine, const TextBank& bank) {
  return soft_prototype_from_probs(bank, uniform_simplex(engine, bank.num_classes()), 0.5);
}

struct FlatMlp {
  const MlpEncoder& m;
  Vector forward(const Vector& x) const { return m.forward(x); }
  Vector vjp(const Vector& x, const Vector& u) const { return m.vjp(x, u); }
};

struct FlatLinear {
  const LinearEncoder& m;
  Vector forward(const Vector& x) const { return m.forward(x); }
  Vector vjp(const Vector& x, const Vector& u) const { return m.vjp(x, u); }
};

}  // namespace

CheckResult summarize_gradient_check(std::string name, const std::vector<double>& errors, double tolerance) {
  CheckResult r;
  r.name = std::move(name);
  for (double e : errors) r.metric = std::max(r.metric, std::isfinite(e) ? e : INFINITY);
  r.passed = !errors.empty() && r.metric < tolerance;
  r.detail = format("worst relative error %.3g over %.0f instances", r.metric, static_cast<double>(errors.size()));
  return r;
}

CheckResult check_grad_cosine(std::uint64_t seed, int instances) {
  Engine engine = make_engine(seed, "grad-cosine-check");
  std::uniform_int_distribution<int> dims(2, 16);
  std::normal_distribution<double> normal;
  std::vector<double> errors;
  for (int n = 0; n < instances; ++n) {
    const int d = dims(engine);
    Vector e(d);
    Vector t(d);
    for (int i = 0; i < d; ++i) {
      e[i] = normal(engine);
      t[i] = normal(engine);
    }
    const UnitEmbedding<double> unit = l2_normalize(t);
    errors.push_back(gradient_relative_error(
        [&](const Vector& v) { return v.normalized().dot(unit.values()); },
        [&](const Vector& v) { return grad_cosine_wrt_embedding(v, unit); }, e));
  }
  return summarize_gradient_check("grad_cosine_fd", errors);
}

CheckResult check_cross_modal_gradient(std::uint64_t seed, int instances) {
  const Fixture fx = make_fixture(seed);
  Engine engine = make_engine(seed, "cross-modal-check");
  const Eigen::Index h = fx.batch.height;
  const Eigen::Index w = fx.batch.width;
  std::vector<double> errors;
  while (static_cast<int>(errors.size()) < instances) {
    const Image x = random_image(engine, h, w, 0.2, 0.8);
    const SoftPrototype proto = random_prototype(engine, fx.bank);
    if (competitor_gap(fx.bank, fx.mlp.forward(x), proto.y_hat) < kTieGap) continue;
    errors.push_back(gradient_relative_error(
        [&](const Vector& v) { return cross_modal_loss(fx.mlp, fx.bank, unflatten(v, h, w), proto).value; },
        [&](const Vector& v) {
          const Image g = cross_modal_loss(fx.mlp, fx.bank, unflatten(v, h, w), proto).grad;
          return Vector(flatten(g));
        },
        flatten(x)));
  }
  return summarize_gradient_check("cross_modal_grad_fd", errors);
}

CheckResult check_objective_gradient(std::uint64_t seed, bool coupled, int instances) {
  const Fixture fx = make_fixture(seed);
  Engine engine = make_engine(seed, coupled ? "objective-check-coupled" : "objective-check");
  const Eigen::Index h = fx.batch.height;
  const Eigen::Index w = fx.batch.width;
  DefenseConfig cfg;
  cfg.coupled_views = coupled;
  std::vector<double> errors;
  for (std::uint64_t n = 0; static_cast<int>(errors.size()) < instances; ++n) {
    const Image x = random_image(engine, h, w, 0.2, 0.8);
    const Image delta = random_image(engine, h, w, -cfg.eps_d, cfg.eps_d);
    const SoftPrototype proto = random_prototype(engine, fx.bank);
    const ViewPlan views = make_view_plan(final_view_spec(cfg, n), h, w);
    const Image composite = x + delta;
    bool tie = competitor_gap(fx.bank, fx.mlp.forward(composite), proto.y_hat) < kTieGap;
    for (std::size_t i = 0; coupled && i < views.size(); ++i) {
      tie = tie || competitor_gap(fx.bank, fx.mlp.forward(apply_view(composite, views, i)), proto.y_hat) < kTieGap;
    }
    if (tie) continue;
    auto objective = [&](const Vector& d) {
      return scc_objective(fx.mlp, fx.bank, x, unflatten(d, h, w), proto, cfg, views);
    };
    errors.push_back(gradient_relative_error([&](const Vector& d) { return objective(d).value; },
                                             [&](const Vector& d) {
                                               const Image g = objective(d).grad;
                                               return Vector(flatten(g));
                                             },
                                             flatten(delta)));
  }
  return summarize_gradient_check(coupled ? "objective_grad_fd_coupled" : "objective_grad_fd", errors);
}

CheckResult check_margin_monotonicity(std::uint64_t seed, const PropositionOptions& opts) {
  const Fixture fx = make_fixture(seed);
  Engine engine = make_engine(seed, "margin-check");
  std::uniform_int_distribution<std::size_t> pick(0, fx.batch.size() - 1);
  const double eps = 4.0 / 255.0;
  const double alpha = opts.margin_alpha;
  const double tolerance = 10.0 * alpha * alpha;
  const DualEncoder& enc = fx.linear;

  int failures = 0;
  int evaluated_steps = 0;
  int evaluated_starts = 0;
  double worst_drop = 0.0;
  for (int start = 0; start < opts.margin_starts; ++start) {
    const Image& x = fx.batch.images[pick(engine)];
    const SoftPrototype proto = random_prototype(engine, fx.bank);
    Image delta = random_image(engine, x.rows(), x.cols(), -eps / 2, eps / 2);
    bool counted = false;
    for (int step = 0; step < opts.margin_steps; ++step) {
      const Image before = x + delta;
      const LossAndGrad cur = cross_modal_loss(enc, fx.bank, before, proto);
      const Image raw = delta + alpha * cur.grad.array().sign().matrix();
      const Image next = project_linf(raw, eps);
      const Image after = x + next;
      const bool projection_binds = (raw - next).cwiseAbs().maxCoeff() > 0.0;
      const bool clip_binds = after.minCoeff() < 0.0 || after.maxCoeff() > 1.0;
      const Vector e0 = enc.forward(before);
      const Vector e1 = enc.forward(after);
      const bool index_changes = max_excluding(cosines(fx.bank, e0), proto.y_hat).first !=
                                 max_excluding(cosines(fx.bank, e1), proto.y_hat).first;
      delta = next;
      if (projection_binds || clip_binds || index_changes) continue;
      const double m0 = cur.value;
      const double m1 = cross_modal_loss(enc, fx.bank, after, proto).value;
      ++evaluated_steps;
      counted = true;
      worst_drop = std::max(worst_drop, m0 - m1);
      if (m1 < m0 - tolerance) ++failures;
    }
    if (counted) ++evaluated_starts;
  }
  CheckResult r;
  r.name = "margin_monotone";
  r.metric = failures;
  r.passed = failures == 0 && evaluated_starts >= 100;
  r.detail = format("%.0f failures, largest drop %.3g", failures, worst_drop) +
             format(", %.0f interior steps over %.0f starts", evaluated_steps, evaluated_starts);
  return r;
}

CheckResult check_variance_reduction(std::uint64_t seed, int draws, int views) {
  Vector alpha(5);
  alpha << 2.0, 1.0, 0.5, 3.0, 1.5;
  const double a0 = alpha.sum();
  // Var(q_k) = a_k (a0 - a_k) / (a0^2 (a0 + 1)) for a single Dirichlet draw.
  const double trace = (alpha.array() * (a0 - alpha.array())).sum() / (a0 * a0 * (a0 + 1.0));

  Engine engine = make_engine(seed, "variance-check", static_cast<std::uint64_t>(views));
  Vector sum = Vector::Zero(alpha.size());
  Vector sum_sq = Vector::Zero(alpha.size());
  for (int n = 0; n < draws; ++n) {
    Vector q = Vector::Zero(alpha.size());
    for (int l = 0; l < views; ++l) q += dirichlet(engine, alpha);
    q /= static_cast<double>(views);
    sum += q;
    sum_sq += q.cwiseAbs2();
  }
  const double count = static_cast<double>(draws);
  const Vector mean = sum / count;
  const double empirical = ((sum_sq - count * mean.cwiseAbs2()) / (count - 1.0)).sum();
  const double expected = trace / static_cast<double>(views);

  CheckResult r;
  r.name = "variance_reduction_L" + std::to_string(views);
  r.metric = std::abs(empirical - expected) / expected;
  r.passed = r.metric < 0.05;
  r.detail = format("trace Cov = %.6g, trace Sigma / L = %.6g", empirical, expected);
  return r;
}

CheckResult check_suppression(std::uint64_t seed, int trials, int views) {
  Engine engine = make_engine(seed, "suppression-check", static_cast<std::uint64_t>(views));
  std::uniform_int_distribution<int> classes(2, 10);
  std::uniform_int_distribution<int> view_count(1, 8);
  std::normal_distribution<double> normal(0.0, 3.0);
  int violations = 0;
  double worst = -INFINITY;
  for (int t = 0; t < trials; ++t) {
    const int k = classes(engine);
    const int l = views > 0 ? views : view_count(engine);
    const int y = std::uniform_int_distribution<int>(0, k - 1)(engine);
    Vector z_bar = Vector::Zero(k);
    double mean_max = 0.0;
    for (int i = 0; i < l; ++i) {
      Vector z(k);
      for (int j = 0; j < k; ++j) z[j] = normal(engine);
      z_bar += z;
      mean_max += max_excluding(z, y).second;
    }
    z_bar /= static_cast<double>(l);
    mean_max /= static_cast<double>(l);
    const double lhs = max_excluding(z_bar, y).second;
    worst = std::max(worst, lhs - mean_max);
    if (lhs > mean_max + 1e-12) ++violations;
  }
  CheckResult r;
  r.name = views > 0 ? "suppression_L" + std::to_string(views) : "suppression";
  r.metric = violations;
  r.passed = violations == 0;
  r.detail = format("%.0f violations, largest lhs - rhs %.3g", violations, worst);
  return r;
}

CheckResult check_suppression_equality(std::uint64_t seed, int trials) {
  Engine engine = make_engine(seed, "suppression-equality");
  std::uniform_int_distribution<int> classes(2, 10);
  std::normal_distribution<double> normal(0.0, 3.0);
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    const int k = classes(engine);
    const int y = std::uniform_int_distribution<int>(0, k - 1)(engine);
    Vector z(k);
    for (int j = 0; j < k; ++j) z[j] = normal(engine);
    const Vector z_bar = z / 1.0;
    worst = std::max(worst, std::abs(max_excluding(z_bar, y).second - max_excluding(z, y).second));
  }
  CheckResult r;
  r.name = "suppression_single_view_equality";
  r.metric = worst;
  r.passed = worst <= 1e-12;
  r.detail = format("largest |lhs - rhs| %.3g", worst);
  return r;
}

CheckResult check_sharpening(std::uint64_t seed, int samples, double temp) {
  Engine engine = make_engine(seed, "sharpen-check");
  std::uniform_int_distribution<int> classes(2, 10);
  int failures = 0;
  for (int n = 0; n < samples; ++n) {
    const Vector p = uniform_simplex(engine, classes(engine));
    const Vector q = sharpen(p, temp);
    const bool argmax_kept = argmax(q) == argmax(p);
    const bool entropy_down = entropy(q) <= entropy(p) + 1e-12;
    const bool simplex = std::abs(q.sum() - 1.0) <= 1e-12 && q.minCoeff() >= 0.0;
    if (!(argmax_kept && entropy_down && simplex)) ++failures;
  }
  CheckResult r;
  r.name = "sharpening";
  r.metric = failures;
  r.passed = failures == 0;
  r.detail = format("%.0f failures over %.0f samples", failures, samples);
  return r;
}

PropositionReport run_proposition_suite(std::uint64_t seed, const PropositionOptions& opts) {
  PropositionReport report;
  auto& c = report.checks;
  c.push_back(check_grad_cosine(seed, opts.gradient_instances));
  {
    const Fixture fx = make_fixture(seed);
    const auto pixels = fx.batch.height * fx.batch.width;
    c.push_back(check_vjp("linear_vjp_fd", FlatLinear{std::get<LinearEncoder>(fx.linear.model())}, pixels,
                          fx.bank.dim(), seed, opts.gradient_instances));
    c.push_back(check_vjp("mlp_vjp_fd", FlatMlp{std::get<MlpEncoder>(fx.mlp.model())}, pixels, fx.bank.dim(), seed,
                          opts.gradient_instances));
  }
  c.push_back(check_cross_modal_gradient(seed, opts.gradient_instances));
  c.push_back(check_objective_gradient(seed, false, opts.gradient_instances));
  c.push_back(check_objective_gradient(seed, true, opts.gradient_instances));
  c.push_back(check_margin_monotonicity(seed, opts));
  for (int l : {1, 2, 4, 8}) c.push_back(check_variance_reduction(seed, opts.variance_draws, l));
  c.push_back(check_suppression(seed, opts.suppression_trials));
  c.push_back(check_suppression_equality(seed, opts.suppression_trials));
  c.push_back(check_sharpening(seed, opts.sharpen_samples));
  return report;
}

}  // namespace scc
