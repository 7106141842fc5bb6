#include "scc/world.hpp"

#include <cmath>
#include <random>

#include "scc/errors.hpp"
#include "scc/rng.hpp"

namespace scc {

namespace {

constexpr double kMaxRandomCos = 0.5;
constexpr int kMaxDraws = 100000;

Vector random_unit(Engine& engine, Eigen::Index dim) {
  std::normal_distribution<double> normal;
  Vector v(dim);
  for (;;) {
    for (Eigen::Index i = 0; i < dim; ++i) v[i] = normal(engine);
    const double n = v.norm();
    if (n > kNormFloor) return v / n;
  }
}

}  // namespace

std::optional<Eigen::Index> TextBank::hard_partner(Eigen::Index k) const {
  if (!hard_pair) return std::nullopt;
  if (hard_pair->first == k) return hard_pair->second;
  if (hard_pair->second == k) return hard_pair->first;
  return std::nullopt;
}

Image ImageDecoder::decode(const Eigen::Ref<const Vector>& embedding) const {
  Vector flat = (weights * embedding).array() + offset;
  return unflatten(flat, height, width);
}

TextBank make_text_bank(int num_classes, int dim, std::uint64_t seed,
                        std::optional<double> hard_pair_cos) {
  if (num_classes < 2) throw PreconditionError("make_text_bank: need K >= 2");
  if (dim < 1) throw PreconditionError("make_text_bank: need d >= 1");
  if (hard_pair_cos && (*hard_pair_cos < 0.8 || *hard_pair_cos > 0.99 || dim < 2)) {
    throw PreconditionError("make_text_bank: hard_pair_cos must lie in [0.8, 0.99] with d >= 2");
  }

  Engine engine = make_engine(seed, "text-bank");
  std::vector<Vector> rows;
  int draws = 0;

  auto accept = [&](const Vector& v) {
    for (const auto& r : rows) {
      if (std::abs(r.dot(v)) > kMaxRandomCos) return false;
    }
    return true;
  };
  auto draw = [&]() {
    if (++draws > kMaxDraws) throw UnsatisfiableError("make_text_bank: rejection sampling exhausted");
    return random_unit(engine, dim);
  };

  if (hard_pair_cos) {
    const Vector anchor = draw();
    Vector ortho = draw();
    ortho -= ortho.dot(anchor) * anchor;
    while (ortho.norm() <= kNormFloor) {
      ortho = draw();
      ortho -= ortho.dot(anchor) * anchor;
    }
    ortho.normalize();
    const double c = *hard_pair_cos;
    Vector partner = c * anchor + std::sqrt(1.0 - c * c) * ortho;
    rows.push_back(anchor);
    rows.push_back(partner.normalized());
  }
  while (static_cast<int>(rows.size()) < num_classes) {
    Vector v = draw();
    if (accept(v)) rows.push_back(std::move(v));
  }

  TextBank bank;
  bank.embeddings.resize(num_classes, dim);
  for (int k = 0; k < num_classes; ++k) {
    bank.embeddings.row(k) = rows[k].transpose();
    bank.class_names.push_back("class_" + std::to_string(k));
  }
  if (hard_pair_cos) bank.hard_pair = std::make_pair(Eigen::Index{0}, Eigen::Index{1});
  return bank;
}

ImageDecoder make_decoder(Eigen::Index dim, Eigen::Index height, Eigen::Index width,
                          std::uint64_t decoder_seed, double scale) {
  Engine engine = make_engine(decoder_seed, "decoder");
  std::normal_distribution<double> normal(0.0, scale);
  Matrix raw(height * width, dim);
  for (Eigen::Index i = 0; i < raw.rows(); ++i) {
    for (Eigen::Index j = 0; j < raw.cols(); ++j) raw(i, j) = normal(engine);
  }
  ImageDecoder decoder{height, width, Matrix(height * width, dim), 0.5};
  for (Eigen::Index r = 0; r < height; ++r) {
    for (Eigen::Index c = 0; c < width; ++c) {
      const Eigen::Index mirrored = r * width + (width - 1 - c);
      decoder.weights.row(r * width + c) = 0.5 * (raw.row(r * width + c) + raw.row(mirrored));
    }
  }
  return decoder;
}

ImageBatch sample_images(const TextBank& bank, std::uint64_t decoder_seed, int n_per_class,
                         double pixel_noise, std::uint64_t seed, const SampleOptions& options) {
  if (pixel_noise < 0) throw PreconditionError("sample_images: pixel_noise must be >= 0");
  if (n_per_class < 0) throw PreconditionError("sample_images: n_per_class must be >= 0");
  const ImageDecoder decoder =
      make_decoder(bank.dim(), options.height, options.width, decoder_seed, options.decoder_scale);

  ImageBatch batch;
  batch.height = options.height;
  batch.width = options.width;
  std::uint64_t index = 0;
  for (Eigen::Index k = 0; k < bank.num_classes(); ++k) {
    const Image clean = decoder.decode(bank.row(k));
    for (int j = 0; j < n_per_class; ++j, ++index) {
      Engine engine = make_engine(seed, "pixel-noise", index);
      std::normal_distribution<double> normal(0.0, pixel_noise > 0 ? pixel_noise : 1.0);
      Image img = clean;
      if (pixel_noise > 0) {
        for (Eigen::Index p = 0; p < img.size(); ++p) img.data()[p] += normal(engine);
      }
      batch.images.push_back(clip_unit(img));
      batch.labels.push_back(static_cast<int>(k));
    }
  }
  return batch;
}

void validate(const TextBank& bank) {
  if (bank.num_classes() < 2) throw PreconditionError("text bank needs K >= 2");
  for (Eigen::Index k = 0; k < bank.num_classes(); ++k) {
    if (std::abs(bank.embeddings.row(k).norm() - 1.0) > 1e-9) {
      throw PreconditionError("text bank row " + std::to_string(k) + " is not unit norm");
    }
  }
  if (static_cast<Eigen::Index>(bank.class_names.size()) != bank.num_classes()) {
    throw PreconditionError("text bank class_names size mismatch");
  }
}

void validate(const ImageBatch& batch, const TextBank& bank) {
  if (batch.images.size() != batch.labels.size()) {
    throw ShapeMismatchError("image batch: labels and images differ in count");
  }
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Image& img = batch.images[i];
    if (img.rows() != batch.height || img.cols() != batch.width) {
      throw ShapeMismatchError("image batch: image " + std::to_string(i) + " has wrong shape");
    }
    if (img.minCoeff() < 0.0 || img.maxCoeff() > 1.0) {
      throw PreconditionError("image batch: pixels outside [0,1]");
    }
    if (batch.labels[i] < 0 || batch.labels[i] >= bank.num_classes()) {
      throw PreconditionError("image batch: label out of range");
    }
  }
}

}  // namespace scc
