#include "scc/augment.hpp"

#include <random>

#include "scc/errors.hpp"
#include "scc/rng.hpp"

namespace scc {

void validate(const ViewSpec& spec) {
  if (spec.count < 1) throw PreconditionError("view count must be >= 1");
  if (spec.sigma < 0) throw PreconditionError("view sigma must be >= 0");
}

Image flip_horizontal(const Image& x) { return x.rowwise().reverse(); }

ViewPlan make_view_plan(const ViewSpec& spec, Eigen::Index height, Eigen::Index width) {
  validate(spec);
  ViewPlan plan;
  const double std_dev = spec.sigma / 255.0;
  for (int i = 1; i <= spec.count; ++i) {
    plan.flipped.push_back(spec.flip && (i % 2 == 1));
    Image noise = Image::Zero(height, width);
    if (std_dev > 0) {
      Engine engine = make_engine(spec.seed, "view-noise", static_cast<std::uint64_t>(i));
      std::normal_distribution<double> normal(0.0, std_dev);
      for (Eigen::Index p = 0; p < noise.size(); ++p) noise.data()[p] = normal(engine);
    }
    plan.noise.push_back(std::move(noise));
  }
  return plan;
}

Image apply_view(const Image& x, const ViewPlan& plan, std::size_t i) {
  const Image& noise = plan.noise.at(i);
  if (noise.rows() != x.rows() || noise.cols() != x.cols()) {
    throw ShapeMismatchError("apply_view: plan was built for a different image shape");
  }
  if (plan.flipped[i]) return clip_unit(flip_horizontal(x) + noise);
  return clip_unit(x + noise);
}

Image view_pullback(const Image& x, const ViewPlan& plan, std::size_t i, const Image& grad_view) {
  const Image pre = plan.flipped[i] ? Image(flip_horizontal(x) + plan.noise[i]) : Image(x + plan.noise[i]);
  const Image masked = (pre.array() > 0.0 && pre.array() < 1.0).select(grad_view, 0.0);
  return plan.flipped[i] ? flip_horizontal(masked) : masked;
}

std::vector<Image> make_views(const Image& x, const ViewSpec& spec) {
  const ViewPlan plan = make_view_plan(spec, x.rows(), x.cols());
  std::vector<Image> views;
  views.reserve(plan.size());
  for (std::size_t i = 0; i < plan.size(); ++i) views.push_back(apply_view(x, plan, i));
  return views;
}

}  // namespace scc
