#pragma once

// Differentiable image encoders standing in for the image tower of a
// dual-encoder model. Both expose the same white-box contract: a forward pass
// returning the unnormalized embedding and a vector-Jacobian product.

#include <cstdint>
#include <string_view>
#include <variant>
#include <vector>

#include "scc/numgrad.hpp"
#include "scc/world.hpp"

namespace scc {

struct LinearEncoder {
  Matrix weights;  // d x P

  Vector forward(const Eigen::Ref<const Vector>& x) const { return weights * x; }
  Vector vjp(const Eigen::Ref<const Vector>& /*x*/, const Eigen::Ref<const Vector>& u) const {
    return weights.transpose() * u;
  }
};

/// One tanh hidden layer: f(x) = W2 tanh(W1 x + b1) + b2.
struct MlpEncoder {
  Matrix w1;  // h x P
  Vector b1;
  Matrix w2;  // d x h
  Vector b2;

  Vector forward(const Eigen::Ref<const Vector>& x) const;
  Vector vjp(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& u) const;
};

enum class EncoderKind { linear, mlp };

std::string_view to_string(EncoderKind kind);
EncoderKind encoder_kind_from_string(std::string_view name);

/// Immutable after construction; forward/vjp are pure and thread-safe.
class DualEncoder {
 public:
  DualEncoder(LinearEncoder linear, Eigen::Index height, Eigen::Index width);
  DualEncoder(MlpEncoder mlp, Eigen::Index height, Eigen::Index width);

  EncoderKind kind() const;
  Eigen::Index height() const { return height_; }
  Eigen::Index width() const { return width_; }
  Eigen::Index input_size() const { return height_ * width_; }
  Eigen::Index embed_dim() const { return embed_dim_; }

  Vector forward(const Image& x) const;
  /// Gradient of u . forward(x) with respect to x.
  Image vjp(const Image& x, const Vector& u) const;

  // Flattened variants for inner loops.
  Vector forward_flat(const Eigen::Ref<const Vector>& x) const;
  Vector vjp_flat(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& u) const;

  const std::variant<LinearEncoder, MlpEncoder>& model() const { return model_; }

 private:
  void check_input(Eigen::Index size) const;

  std::variant<LinearEncoder, MlpEncoder> model_;
  Eigen::Index height_;
  Eigen::Index width_;
  Eigen::Index embed_dim_;
};

/// Ridge least squares from flattened pixels to the label embeddings:
/// W = argmin sum_i |W x_i - t_{y_i}|^2 + ridge |W|_F^2.
DualEncoder fit_linear_encoder(const ImageBatch& batch, const TextBank& bank, double ridge);

struct MlpTrainOptions {
  int hidden = 32;
  int steps = 2000;
  double lr = 0.005;
  double init_scale = 0.4;
  std::uint64_t seed = 0;
};

/// Full-batch gradient descent on sum_i (1 - cos(f(x_i), t_{y_i})).
/// Throws DivergedError if the loss becomes non-finite. When `losses` is
/// given it receives the loss before every step.
DualEncoder train_mlp_encoder(const ImageBatch& batch, const TextBank& bank,
                              const MlpTrainOptions& options, std::vector<double>* losses = nullptr);

/// Fraction of images whose nearest text embedding (by cosine) is the label.
double zero_shot_accuracy(const DualEncoder& encoder, const TextBank& bank, const ImageBatch& batch);

}  // namespace scc
