#pragma once

// JSON snapshots of worlds, image batches and encoders so harness runs can be
// replayed. Every document carries "schema_version" and "kind"; matrices are
// stored as {"rows", "cols", "data"} with row-major data. Doubles are written
// with round-trip precision.

#include <filesystem>
#include "json.hpp"

#include "scc/encoder.hpp"
#include "scc/world.hpp"

namespace scc {

inline constexpr int kSnapshotSchemaVersion = 1;

struct WorldSnapshot {
  TextBank bank;
  ImageBatch train;
  ImageBatch test;
};

nlohmann::json to_json(const TextBank& bank);
TextBank text_bank_from_json(const nlohmann::json& j);

nlohmann::json to_json(const ImageBatch& batch);
ImageBatch image_batch_from_json(const nlohmann::json& j);

nlohmann::json to_json(const WorldSnapshot& world);
WorldSnapshot world_from_json(const nlohmann::json& j);

nlohmann::json to_json(const DualEncoder& encoder);
DualEncoder encoder_from_json(const nlohmann::json& j);

nlohmann::json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);

}  // namespace scc
