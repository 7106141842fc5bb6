#pragma once

#include "scc/harness.hpp"
#include "scc/rng.hpp"

namespace scc::testing {

/// Default world and trained encoder for seed 0, built once per process.
struct DefaultWorld {
  WorldSnapshot world;
  DualEncoder enc;
};

inline const DefaultWorld& default_world() {
  static const DefaultWorld instance = [] {
    const ExperimentConfig cfg;
    WorldSnapshot world = build_world(cfg.world, 0);
    DualEncoder enc = build_encoder(world, cfg.encoder, 0);
    return DefaultWorld{std::move(world), std::move(enc)};
  }();
  return instance;
}

/// A 1 x n "image" mapped to itself by an identity linear encoder, so that
/// embeddings can be dictated directly.
inline DualEncoder identity_encoder(Eigen::Index n) {
  return DualEncoder(LinearEncoder{Matrix::Identity(n, n)}, 1, n);
}

inline Image row_image(std::initializer_list<double> values) {
  Image x(1, static_cast<Eigen::Index>(values.size()));
  Eigen::Index i = 0;
  for (double v : values) x(0, i++) = v;
  return x;
}

inline TextBank bank_from_rows(const Matrix& rows) {
  TextBank bank;
  bank.embeddings = rows;
  for (Eigen::Index k = 0; k < rows.rows(); ++k) bank.class_names.push_back("c" + std::to_string(k));
  return bank;
}

inline Image random_image(Engine& engine, Eigen::Index h, Eigen::Index w, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Image x(h, w);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = u(engine);
  return x;
}

inline Vector random_vector(Engine& engine, Eigen::Index n) {
  std::normal_distribution<double> normal;
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = normal(engine);
  return v;
}

}  // namespace scc::testing
