#pragma once

// Synthetic zero-shot universe: a fixed bank of class text embeddings and an
// image generator that renders each class embedding through a random linear
// decoder. Decoded content is mirror-symmetric, so horizontal flips preserve
// class semantics exactly and only the pixel noise breaks the symmetry.

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "scc/numgrad.hpp"

namespace scc {

struct TextBank {
  Matrix embeddings;  // K x d, unit rows
  std::vector<std::string> class_names;
  std::optional<std::pair<Eigen::Index, Eigen::Index>> hard_pair;

  Eigen::Index num_classes() const { return embeddings.rows(); }
  Eigen::Index dim() const { return embeddings.cols(); }
  Vector row(Eigen::Index k) const { return embeddings.row(k).transpose(); }

  /// The other member of the hard pair, if `k` belongs to it.
  std::optional<Eigen::Index> hard_partner(Eigen::Index k) const;
};

struct ImageBatch {
  Eigen::Index height = 0;
  Eigen::Index width = 0;
  std::vector<Image> images;
  std::vector<int> labels;

  std::size_t size() const { return images.size(); }
};

/// Fixed affine map from embedding space to pixels: pixel = offset + D t.
struct ImageDecoder {
  Eigen::Index height = 0;
  Eigen::Index width = 0;
  Matrix weights;  // (height*width) x d
  double offset = 0.5;

  Image decode(const Eigen::Ref<const Vector>& embedding) const;
};

/// K unit vectors with pairwise |cos| <= 0.5, except an optional hard pair
/// (classes 0 and 1) whose cosine is exactly `hard_pair_cos`.
TextBank make_text_bank(int num_classes, int dim, std::uint64_t seed,
                        std::optional<double> hard_pair_cos = std::nullopt);

/// Random decoder whose columns are symmetrized under horizontal flip.
ImageDecoder make_decoder(Eigen::Index dim, Eigen::Index height, Eigen::Index width,
                          std::uint64_t decoder_seed, double scale);

struct SampleOptions {
  Eigen::Index height = 16;
  Eigen::Index width = 16;
  double decoder_scale = 0.08;
};

/// n_per_class images per class, class-major order, clipped to [0,1].
ImageBatch sample_images(const TextBank& bank, std::uint64_t decoder_seed, int n_per_class,
                         double pixel_noise, std::uint64_t seed, const SampleOptions& options = {});

void validate(const TextBank& bank);
void validate(const ImageBatch& batch, const TextBank& bank);

}  // namespace scc
