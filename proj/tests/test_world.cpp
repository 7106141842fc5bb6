#include "doctest.h"

#include "fixtures.hpp"
#include "scc/encoder.hpp"
#include "scc/propositions.hpp"
#include "scc/snapshot.hpp"
#include "scc/world.hpp"
#include "scc/zero_shot.hpp"

using namespace scc;
using scc::testing::default_world;
using scc::testing::random_image;
using scc::testing::random_vector;

namespace {

ImageBatch single_image_batch(const TextBank& bank) {
  ImageBatch b = sample_images(bank, 11, 1, 0.0, 12);
  b.images.resize(1);
  b.labels.resize(1);
  return b;
}

}  // namespace

TEST_SUITE("world") {

TEST_CASE("make_text_bank without a hard pair") {
  const TextBank bank = make_text_bank(2, 2, 0);
  CHECK(bank.num_classes() == 2);
  CHECK(bank.dim() == 2);
  CHECK(std::abs(bank.embeddings.row(0).norm() - 1.0) <= 1e-9);
  CHECK(std::abs(bank.embeddings.row(1).norm() - 1.0) <= 1e-9);
  CHECK(std::abs(bank.embeddings.row(0).dot(bank.embeddings.row(1))) <= 0.5);
  CHECK_FALSE(bank.hard_pair);
  CHECK_NOTHROW(validate(bank));
}

TEST_CASE("make_text_bank builds the hard pair constructively") {
  const TextBank bank = make_text_bank(2, 4, 0, 0.9);
  const double c = bank.embeddings.row(0).dot(bank.embeddings.row(1));
  CHECK(c >= 0.89);
  CHECK(c <= 0.91);
  REQUIRE(bank.hard_pair);
  CHECK(bank.hard_partner(0) == 1);
  CHECK(bank.hard_partner(1) == 0);

  const TextBank big = make_text_bank(10, 16, 5, 0.9);
  for (Eigen::Index i = 0; i < 10; ++i) {
    for (Eigen::Index j = i + 1; j < 10; ++j) {
      if (i == 0 && j == 1) continue;
      CHECK(std::abs(big.embeddings.row(i).dot(big.embeddings.row(j))) <= 0.5);
    }
  }
  CHECK_FALSE(big.hard_partner(4));
}

TEST_CASE("make_text_bank preconditions") {
  CHECK_THROWS_AS(make_text_bank(1, 4, 0), PreconditionError);
  CHECK_THROWS_AS(make_text_bank(2, 4, 0, 0.5), PreconditionError);
  CHECK_THROWS_AS(make_text_bank(2, 4, 0, 0.995), PreconditionError);
  CHECK_THROWS_AS(make_text_bank(20, 2, 0), UnsatisfiableError);
}

TEST_CASE("make_text_bank is deterministic in its seed") {
  CHECK(make_text_bank(6, 8, 42).embeddings == make_text_bank(6, 8, 42).embeddings);
  CHECK(make_text_bank(6, 8, 42).embeddings != make_text_bank(6, 8, 43).embeddings);
}

TEST_CASE("sample_images without noise repeats each class image") {
  const TextBank bank = make_text_bank(3, 4, 1);
  const ImageBatch batch = sample_images(bank, 7, 2, 0.0, 9);
  REQUIRE(batch.size() == 6);
  for (int k = 0; k < 3; ++k) {
    CHECK(batch.labels[2 * k] == k);
    CHECK(batch.images[2 * k] == batch.images[2 * k + 1]);
  }
  CHECK_NOTHROW(validate(batch, bank));
}

TEST_CASE("sample_images is deterministic and order independent") {
  const TextBank bank = make_text_bank(3, 4, 1);
  const ImageBatch a1 = sample_images(bank, 7, 3, 0.05, 9);
  const ImageBatch b1 = sample_images(bank, 8, 3, 0.05, 10);
  const ImageBatch b2 = sample_images(bank, 8, 3, 0.05, 10);
  const ImageBatch a2 = sample_images(bank, 7, 3, 0.05, 9);
  for (std::size_t i = 0; i < a1.size(); ++i) {
    CHECK(a1.images[i] == a2.images[i]);
    CHECK(b1.images[i] == b2.images[i]);
  }
  CHECK_THROWS_AS(sample_images(bank, 7, 3, -0.1, 9), PreconditionError);
}

TEST_CASE("sample_images noise stays within five standard deviations") {
  const TextBank bank = make_text_bank(10, 16, 2);
  const ImageBatch clean = sample_images(bank, 3, 20, 0.0, 4);
  const ImageBatch noisy = sample_images(bank, 3, 20, 0.05, 4);
  std::size_t within = 0;
  std::size_t total = 0;
  for (std::size_t i = 0; i < noisy.size(); ++i) {
    const Image diff = (noisy.images[i] - clean.images[i]).cwiseAbs();
    within += (diff.array() <= 0.25).count();
    total += static_cast<std::size_t>(diff.size());
    CHECK(noisy.images[i].minCoeff() >= 0.0);
    CHECK(noisy.images[i].maxCoeff() <= 1.0);
  }
  CHECK(static_cast<double>(within) / static_cast<double>(total) >= 0.9999);
}

TEST_CASE("decoder is mirror symmetric") {
  const ImageDecoder dec = make_decoder(4, 3, 5, 1, 0.1);
  const Image img = dec.decode(Vector::Ones(4));
  CHECK(img.isApprox(img.rowwise().reverse(), 1e-15));
}

TEST_CASE("fit_linear_encoder interpolates a single image") {
  const TextBank bank = make_text_bank(2, 4, 3);
  const ImageBatch one = single_image_batch(bank);
  const DualEncoder enc = fit_linear_encoder(one, bank, 1e-12);
  CHECK((enc.forward(one.images[0]) - bank.row(0)).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("fit_linear_encoder with a dominant ridge shrinks to zero") {
  const auto& fx = default_world();
  const DualEncoder enc = fit_linear_encoder(fx.world.train, fx.world.bank, 1e6);
  CHECK(std::get<LinearEncoder>(enc.model()).weights.norm() < 1e-2);
  CHECK_THROWS_AS(fit_linear_encoder(fx.world.train, fx.world.bank, 0.0), PreconditionError);
}

TEST_CASE("linear encoder vjp is constant and matches differences") {
  const auto& fx = default_world();
  const DualEncoder enc = fit_linear_encoder(fx.world.train, fx.world.bank, 1e-3);
  Engine engine = make_engine(7, "test");
  const Vector u = random_vector(engine, enc.embed_dim());
  const Image x1 = random_image(engine, 16, 16, 0, 1);
  const Image x2 = random_image(engine, 16, 16, 0, 1);
  CHECK(enc.vjp(x1, u) == enc.vjp(x2, u));
  const Vector numeric =
      finite_diff_gradient([&](const Vector& v) { return u.dot(enc.forward_flat(v)); }, Vector(flatten(x1)), 1e-6);
  CHECK((numeric - flatten(enc.vjp(x1, u))).cwiseAbs().maxCoeff() <= 1e-6);
  CHECK(enc.vjp(x1, Vector::Zero(enc.embed_dim())).isZero(0));
}

TEST_CASE("linear encoder separates a low-noise world") {
  const TextBank bank = make_text_bank(10, 16, 8, 0.9);
  const ImageBatch batch = sample_images(bank, 9, 20, 0.02, 10);
  const DualEncoder enc = fit_linear_encoder(batch, bank, 1e-3);
  CHECK(zero_shot_accuracy(enc, bank, batch) >= 0.99);
}

TEST_CASE("mlp encoder reaches high held-out accuracy on the default world") {
  const auto& fx = default_world();
  CHECK(zero_shot_accuracy(fx.enc, fx.world.bank, fx.world.test) >= 0.95);
}

TEST_CASE("mlp training is deterministic and its loss settles") {
  const TextBank bank = make_text_bank(4, 8, 1);
  const ImageBatch batch = sample_images(bank, 2, 5, 0.05, 3);
  MlpTrainOptions options;
  options.steps = 400;
  options.seed = 5;
  std::vector<double> losses;
  const DualEncoder a = train_mlp_encoder(batch, bank, options, &losses);
  const DualEncoder b = train_mlp_encoder(batch, bank, options);
  const auto& ma = std::get<MlpEncoder>(a.model());
  const auto& mb = std::get<MlpEncoder>(b.model());
  CHECK(ma.w1 == mb.w1);
  CHECK(ma.w2 == mb.w2);
  CHECK(ma.b1 == mb.b1);
  CHECK(ma.b2 == mb.b2);
  REQUIRE(losses.size() == 400);
  CHECK(losses.back() <= losses[360]);
  CHECK(losses.back() < losses.front());
}

TEST_CASE("mlp training preconditions and divergence") {
  const TextBank bank = make_text_bank(2, 4, 1);
  const ImageBatch batch = sample_images(bank, 2, 2, 0.05, 3);
  MlpTrainOptions bad;
  bad.steps = 0;
  CHECK_THROWS_AS(train_mlp_encoder(batch, bank, bad), PreconditionError);
  bad.steps = 5;
  bad.lr = 0.0;
  CHECK_THROWS_AS(train_mlp_encoder(batch, bank, bad), PreconditionError);
  bad.lr = 1e300;
  CHECK_THROWS_AS(train_mlp_encoder(batch, bank, bad), DivergedError);
}

TEST_CASE("mlp vjp matches central differences") {
  const auto& fx = default_world();
  const auto& mlp = std::get<MlpEncoder>(fx.enc.model());
  struct Flat {
    const MlpEncoder& m;
    Vector forward(const Vector& x) const { return m.forward(x); }
    Vector vjp(const Vector& x, const Vector& u) const { return m.vjp(x, u); }
  };
  const CheckResult r = check_vjp("mlp", Flat{mlp}, 256, 16, 3, 5);
  CHECK_MESSAGE(r.passed, r.detail);
}

TEST_CASE("vjp is linear in the cotangent") {
  const auto& fx = default_world();
  Engine engine = make_engine(8, "test");
  const Image x = random_image(engine, 16, 16, 0.2, 0.8);
  const Vector u = random_vector(engine, 16);
  const Vector v = random_vector(engine, 16);
  const Image lhs = fx.enc.vjp(x, 2.5 * u - 0.75 * v);
  const Image rhs = 2.5 * fx.enc.vjp(x, u) - 0.75 * fx.enc.vjp(x, v);
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK(fx.enc.vjp(x, Vector::Zero(16)).isZero(0));
  CHECK(fx.enc.forward(x) == fx.enc.forward(x));
}

TEST_CASE("encoder shape checks") {
  const auto& fx = default_world();
  CHECK_THROWS_AS(fx.enc.forward(Image::Zero(15, 16)), ShapeMismatchError);
  CHECK_THROWS_AS(fx.enc.vjp(Image::Zero(16, 16), Vector::Zero(3)), ShapeMismatchError);
  CHECK_THROWS_AS(DualEncoder(LinearEncoder{Matrix::Zero(4, 10)}, 3, 3), ShapeMismatchError);
}

TEST_CASE("world snapshot round trip is exact") {
  const auto& fx = default_world();
  const nlohmann::json j = nlohmann::json::parse(to_json(fx.world).dump());
  const WorldSnapshot back = world_from_json(j);
  CHECK(back.bank.embeddings == fx.world.bank.embeddings);
  CHECK(back.bank.hard_pair == fx.world.bank.hard_pair);
  CHECK(back.bank.class_names == fx.world.bank.class_names);
  REQUIRE(back.test.size() == fx.world.test.size());
  for (std::size_t i = 0; i < back.test.size(); ++i) CHECK(back.test.images[i] == fx.world.test.images[i]);
  CHECK(back.train.labels == fx.world.train.labels);
  CHECK(j.at("schema_version") == kSnapshotSchemaVersion);
}

TEST_CASE("encoder snapshot round trip is exact") {
  const auto& fx = default_world();
  const DualEncoder mlp = encoder_from_json(nlohmann::json::parse(to_json(fx.enc).dump()));
  const Image& x = fx.world.test.images[3];
  CHECK(mlp.forward(x) == fx.enc.forward(x));

  const DualEncoder lin = fit_linear_encoder(fx.world.train, fx.world.bank, 1e-3);
  const DualEncoder lin_back = encoder_from_json(nlohmann::json::parse(to_json(lin).dump()));
  CHECK(lin_back.kind() == EncoderKind::linear);
  CHECK(lin_back.forward(x) == lin.forward(x));
}

TEST_CASE("snapshot readers reject malformed documents") {
  const auto& fx = default_world();
  nlohmann::json j = to_json(fx.enc);
  j["schema_version"] = 99;
  CHECK_THROWS_AS(encoder_from_json(j), PreconditionError);
  nlohmann::json k = to_json(fx.world.test);
  k["pixels"].erase(0);
  CHECK_THROWS_AS(image_batch_from_json(k), ShapeMismatchError);
  CHECK_THROWS_AS(text_bank_from_json(to_json(fx.world.test)), PreconditionError);
}

}
