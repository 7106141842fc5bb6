#include "scc/encoder.hpp"

#include <cmath>
#include <random>
#include <string>

#include "scc/errors.hpp"
#include "scc/rng.hpp"

namespace scc {

Vector MlpEncoder::forward(const Eigen::Ref<const Vector>& x) const {
  const Vector hidden = ((w1 * x + b1).array().tanh()).matrix();
  return w2 * hidden + b2;
}

Vector MlpEncoder::vjp(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& u) const {
  const Vector hidden = ((w1 * x + b1).array().tanh()).matrix();
  const Vector upstream = ((w2.transpose() * u).array() * (1.0 - hidden.array().square())).matrix();
  return w1.transpose() * upstream;
}

std::string_view to_string(EncoderKind kind) {
  return kind == EncoderKind::linear ? "linear" : "mlp";
}

EncoderKind encoder_kind_from_string(std::string_view name) {
  if (name == "linear") return EncoderKind::linear;
  if (name == "mlp") return EncoderKind::mlp;
  throw PreconditionError("unknown encoder kind '" + std::string(name) + "'");
}

DualEncoder::DualEncoder(LinearEncoder linear, Eigen::Index height, Eigen::Index width)
    : model_(std::move(linear)), height_(height), width_(width) {
  const auto& w = std::get<LinearEncoder>(model_).weights;
  if (w.cols() != height * width) throw ShapeMismatchError("linear encoder: weight columns != H*W");
  embed_dim_ = w.rows();
}

DualEncoder::DualEncoder(MlpEncoder mlp, Eigen::Index height, Eigen::Index width)
    : model_(std::move(mlp)), height_(height), width_(width) {
  const auto& m = std::get<MlpEncoder>(model_);
  if (m.w1.cols() != height * width || m.b1.size() != m.w1.rows() || m.w2.cols() != m.w1.rows() ||
      m.b2.size() != m.w2.rows()) {
    throw ShapeMismatchError("mlp encoder: inconsistent parameter shapes");
  }
  embed_dim_ = m.w2.rows();
}

EncoderKind DualEncoder::kind() const {
  return std::holds_alternative<LinearEncoder>(model_) ? EncoderKind::linear : EncoderKind::mlp;
}

void DualEncoder::check_input(Eigen::Index size) const {
  if (size != input_size()) {
    throw ShapeMismatchError("encoder expects " + std::to_string(input_size()) + " pixels, got " +
                             std::to_string(size));
  }
}

Vector DualEncoder::forward_flat(const Eigen::Ref<const Vector>& x) const {
  check_input(x.size());
  return std::visit([&](const auto& m) { return m.forward(x); }, model_);
}

Vector DualEncoder::vjp_flat(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& u) const {
  check_input(x.size());
  if (u.size() != embed_dim_) throw ShapeMismatchError("vjp: cotangent has wrong dimension");
  return std::visit([&](const auto& m) { return m.vjp(x, u); }, model_);
}

Vector DualEncoder::forward(const Image& x) const {
  if (x.rows() != height_ || x.cols() != width_) throw ShapeMismatchError("forward: image shape mismatch");
  return forward_flat(flatten(x));
}

Image DualEncoder::vjp(const Image& x, const Vector& u) const {
  if (x.rows() != height_ || x.cols() != width_) throw ShapeMismatchError("vjp: image shape mismatch");
  return unflatten(vjp_flat(flatten(x), u), height_, width_);
}

namespace {

Matrix stack_pixels(const ImageBatch& batch) {
  Matrix x(batch.height * batch.width, static_cast<Eigen::Index>(batch.size()));
  for (std::size_t i = 0; i < batch.size(); ++i) x.col(static_cast<Eigen::Index>(i)) = flatten(batch.images[i]);
  return x;
}

Matrix stack_targets(const ImageBatch& batch, const TextBank& bank) {
  Matrix t(bank.dim(), static_cast<Eigen::Index>(batch.size()));
  for (std::size_t i = 0; i < batch.size(); ++i) {
    t.col(static_cast<Eigen::Index>(i)) = bank.embeddings.row(batch.labels[i]).transpose();
  }
  return t;
}

}  // namespace

DualEncoder fit_linear_encoder(const ImageBatch& batch, const TextBank& bank, double ridge) {
  if (!(ridge > 0)) throw PreconditionError("fit_linear_encoder: ridge must be positive");
  if (batch.size() == 0) throw PreconditionError("fit_linear_encoder: empty batch");
  const Matrix x = stack_pixels(batch);
  const Matrix t = stack_targets(batch, bank);
  // Push-through form W = T (X^T X + rI)^-1 X^T keeps the solve n x n.
  Matrix gram = x.transpose() * x;
  gram.diagonal().array() += ridge;
  const Matrix coeffs = gram.ldlt().solve(t.transpose());  // n x d
  LinearEncoder enc{coeffs.transpose() * x.transpose()};
  return DualEncoder(std::move(enc), batch.height, batch.width);
}

DualEncoder train_mlp_encoder(const ImageBatch& batch, const TextBank& bank,
                              const MlpTrainOptions& options, std::vector<double>* losses) {
  if (options.steps < 1) throw PreconditionError("train_mlp_encoder: steps must be >= 1");
  if (!(options.lr > 0)) throw PreconditionError("train_mlp_encoder: lr must be positive");
  if (options.hidden < 1) throw PreconditionError("train_mlp_encoder: hidden must be >= 1");
  if (batch.size() == 0) throw PreconditionError("train_mlp_encoder: empty batch");

  const Matrix x = stack_pixels(batch);
  const Matrix t = stack_targets(batch, bank);
  const Eigen::Index pixels = x.rows();
  const Eigen::Index dim = bank.dim();
  const Eigen::Index n = x.cols();

  Engine engine = make_engine(options.seed, "mlp-init");
  std::normal_distribution<double> first(0.0, options.init_scale);
  std::normal_distribution<double> second(0.0, 1.0 / std::sqrt(static_cast<double>(options.hidden)));
  MlpEncoder mlp{Matrix(options.hidden, pixels), Vector::Zero(options.hidden), Matrix(dim, options.hidden),
                 Vector::Zero(dim)};
  for (Eigen::Index i = 0; i < mlp.w1.size(); ++i) mlp.w1.data()[i] = first(engine);
  for (Eigen::Index i = 0; i < mlp.w2.size(); ++i) mlp.w2.data()[i] = second(engine);

  if (losses) losses->reserve(losses->size() + static_cast<std::size_t>(options.steps));
  Matrix grad_out(dim, n);
  for (int step = 0; step < options.steps; ++step) {
    const Matrix hidden = ((mlp.w1 * x).colwise() + mlp.b1).array().tanh().matrix();
    const Matrix out = (mlp.w2 * hidden).colwise() + mlp.b2;

    double loss = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double norm = out.col(i).norm();
      if (!(norm > kNormFloor) || !std::isfinite(norm)) {
        throw DivergedError("train_mlp_encoder: degenerate embedding at step " + std::to_string(step));
      }
      const Vector unit = out.col(i) / norm;
      const double c = unit.dot(t.col(i));
      loss += 1.0 - c;
      grad_out.col(i) = -(t.col(i) - c * unit) / norm;
    }
    if (!std::isfinite(loss)) throw DivergedError("train_mlp_encoder: loss is not finite");
    if (losses) losses->push_back(loss);

    const Matrix grad_hidden = ((mlp.w2.transpose() * grad_out).array() * (1.0 - hidden.array().square())).matrix();
    mlp.w2.noalias() -= options.lr * grad_out * hidden.transpose();
    mlp.b2.noalias() -= options.lr * grad_out.rowwise().sum();
    mlp.w1.noalias() -= options.lr * grad_hidden * x.transpose();
    mlp.b1.noalias() -= options.lr * grad_hidden.rowwise().sum();
  }
  if (!mlp.w1.allFinite() || !mlp.w2.allFinite()) throw DivergedError("train_mlp_encoder: parameters not finite");
  return DualEncoder(std::move(mlp), batch.height, batch.width);
}

double zero_shot_accuracy(const DualEncoder& encoder, const TextBank& bank, const ImageBatch& batch) {
  if (batch.size() == 0) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Vector sims = bank.embeddings * encoder.forward(batch.images[i]).normalized();
    if (argmax(sims) == batch.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(batch.size());
}

}  // namespace scc
