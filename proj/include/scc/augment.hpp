#pragma once

#include <cstdint>
#include <vector>

#include "scc/numgrad.hpp"

namespace scc {

/// Semantics-preserving views: view i (1-based) is mirrored when i is odd
/// (and `flip` is set), then receives N(0, (sigma/255)^2) pixel noise and is
/// clipped to [0,1].
struct ViewSpec {
  int count = 2;
  double sigma = 6.0;  // in 1/255 pixel units
  std::uint64_t seed = 0;
  bool flip = true;
};

void validate(const ViewSpec& spec);

Image flip_horizontal(const Image& x);

/// The random part of a view set, drawn once so that the same views can be
/// re-applied to different images (and differentiated through).
struct ViewPlan {
  std::vector<bool> flipped;
  std::vector<Image> noise;

  std::size_t size() const { return flipped.size(); }
};

ViewPlan make_view_plan(const ViewSpec& spec, Eigen::Index height, Eigen::Index width);

Image apply_view(const Image& x, const ViewPlan& plan, std::size_t i);

/// Pulls a gradient taken at view i back to the image the view was built from.
Image view_pullback(const Image& x, const ViewPlan& plan, std::size_t i, const Image& grad_view);

std::vector<Image> make_views(const Image& x, const ViewSpec& spec);

}  // namespace scc
