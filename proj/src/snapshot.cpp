#include "scc/snapshot.hpp"

#include <fstream>
#include <string>

#include "scc/errors.hpp"

namespace scc {

using nlohmann::json;

namespace {

json matrix_json(const Matrix& m) {
  json data = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

Matrix matrix_from(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto& data = j.at("data");
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) {
    throw ShapeMismatchError("snapshot matrix: data length != rows*cols");
  }
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[static_cast<std::size_t>(r * cols + c)].get<double>();
  }
  return m;
}

json vector_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector vector_from(const json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

void check_header(const json& j, const char* kind) {
  if (!j.contains("schema_version")) throw PreconditionError(std::string(kind) + ": missing schema_version");
  if (j.at("schema_version").get<int>() != kSnapshotSchemaVersion) {
    throw PreconditionError(std::string(kind) + ": unsupported schema_version");
  }
  if (j.at("kind").get<std::string>() != kind) throw PreconditionError(std::string("expected document kind ") + kind);
}

json header(const char* kind) { return {{"schema_version", kSnapshotSchemaVersion}, {"kind", kind}}; }

}  // namespace

json to_json(const TextBank& bank) {
  json j = header("scc.text_bank");
  j["embeddings"] = matrix_json(bank.embeddings);
  j["class_names"] = bank.class_names;
  j["hard_pair"] = bank.hard_pair ? json::array({bank.hard_pair->first, bank.hard_pair->second}) : json(nullptr);
  return j;
}

TextBank text_bank_from_json(const json& j) {
  check_header(j, "scc.text_bank");
  TextBank bank;
  bank.embeddings = matrix_from(j.at("embeddings"));
  bank.class_names = j.at("class_names").get<std::vector<std::string>>();
  if (!j.at("hard_pair").is_null()) {
    const auto pair = j.at("hard_pair").get<std::vector<Eigen::Index>>();
    if (pair.size() != 2) throw PreconditionError("text bank: hard_pair must have two entries");
    bank.hard_pair = std::make_pair(pair[0], pair[1]);
  }
  validate(bank);
  return bank;
}

json to_json(const ImageBatch& batch) {
  json j = header("scc.images");
  j["height"] = batch.height;
  j["width"] = batch.width;
  j["labels"] = batch.labels;
  json pixels = json::array();
  for (const Image& img : batch.images) {
    for (Eigen::Index p = 0; p < img.size(); ++p) pixels.push_back(img.data()[p]);
  }
  j["pixels"] = std::move(pixels);
  return j;
}

ImageBatch image_batch_from_json(const json& j) {
  check_header(j, "scc.images");
  ImageBatch batch;
  batch.height = j.at("height").get<Eigen::Index>();
  batch.width = j.at("width").get<Eigen::Index>();
  batch.labels = j.at("labels").get<std::vector<int>>();
  const auto pixels = j.at("pixels").get<std::vector<double>>();
  const auto per_image = static_cast<std::size_t>(batch.height * batch.width);
  if (pixels.size() != per_image * batch.labels.size()) throw ShapeMismatchError("images: pixel count mismatch");
  for (std::size_t i = 0; i < batch.labels.size(); ++i) {
    batch.images.push_back(Eigen::Map<const Image>(pixels.data() + i * per_image, batch.height, batch.width));
  }
  return batch;
}

json to_json(const WorldSnapshot& world) {
  json j = header("scc.world");
  j["text_bank"] = to_json(world.bank);
  j["train"] = to_json(world.train);
  j["test"] = to_json(world.test);
  return j;
}

WorldSnapshot world_from_json(const json& j) {
  check_header(j, "scc.world");
  WorldSnapshot w{text_bank_from_json(j.at("text_bank")), image_batch_from_json(j.at("train")),
                  image_batch_from_json(j.at("test"))};
  validate(w.train, w.bank);
  validate(w.test, w.bank);
  return w;
}

json to_json(const DualEncoder& encoder) {
  json j = header("scc.encoder");
  j["type"] = std::string(to_string(encoder.kind()));
  j["height"] = encoder.height();
  j["width"] = encoder.width();
  j["embed_dim"] = encoder.embed_dim();
  if (const auto* lin = std::get_if<LinearEncoder>(&encoder.model())) {
    j["parameters"] = {{"weights", matrix_json(lin->weights)}};
  } else {
    const auto& mlp = std::get<MlpEncoder>(encoder.model());
    j["parameters"] = {{"w1", matrix_json(mlp.w1)},
                       {"b1", vector_json(mlp.b1)},
                       {"w2", matrix_json(mlp.w2)},
                       {"b2", vector_json(mlp.b2)}};
  }
  return j;
}

DualEncoder encoder_from_json(const json& j) {
  check_header(j, "scc.encoder");
  const auto height = j.at("height").get<Eigen::Index>();
  const auto width = j.at("width").get<Eigen::Index>();
  const auto& params = j.at("parameters");
  const EncoderKind kind = encoder_kind_from_string(j.at("type").get<std::string>());
  if (kind == EncoderKind::linear) {
    return DualEncoder(LinearEncoder{matrix_from(params.at("weights"))}, height, width);
  }
  MlpEncoder mlp{matrix_from(params.at("w1")), vector_from(params.at("b1")), matrix_from(params.at("w2")),
                 vector_from(params.at("b2"))};
  return DualEncoder(std::move(mlp), height, width);
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const json& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(1) << '\n';
}

}  // namespace scc
