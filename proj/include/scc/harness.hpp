#pragma once

// Experiment plumbing: JSON configs, seeded world construction, the
// attack/defend loop, fragility diagnostics and CSV emission.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "scc/attack.hpp"
#include "scc/defense.hpp"
#include "scc/encoder.hpp"
#include "scc/snapshot.hpp"
#include "scc/world.hpp"

namespace scc {

inline constexpr int kConfigSchemaVersion = 1;

struct WorldParams {
  int num_classes = 10;
  int dim = 16;
  int height = 16;
  int width = 16;
  int n_train_per_class = 20;
  int n_test_per_class = 20;
  double pixel_noise = 0.05;
  std::optional<double> hard_pair_cos = 0.9;
  double decoder_scale = 0.08;
};

struct EncoderParams {
  EncoderKind kind = EncoderKind::mlp;
  int hidden = 32;
  int steps = 2000;
  double lr = 0.005;
  double init_scale = 0.4;
  double ridge = 1e-3;  // linear encoder only
};

enum class Method { none, rn, antiadv, hd, ttc, scc };

std::string_view to_string(Method method);
Method method_from_string(std::string_view name);

enum class Stage { clean, adversarial };

std::string_view to_string(Stage stage);

struct ExperimentConfig {
  WorldParams world;
  EncoderParams encoder;
  AttackConfig attack;
  DefenseConfig defense;
  std::map<Method, nlohmann::json> overrides;  // partial defense objects per method
  std::vector<Method> methods{Method::none, Method::rn, Method::antiadv, Method::hd, Method::ttc, Method::scc};
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  bool record_wall_time = false;
  std::string output_dir = "results";

  /// The defense configuration for `method`: the shared block plus overrides.
  DefenseConfig defense_for(Method method) const;
};

/// Strict parse: unknown keys, wrong types and invalid values raise
/// ConfigError naming the offending field path. Budgets accept either numbers
/// or "a/b" fraction strings such as "8/255".
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentConfig& cfg);

/// Apply a "dotted.key.path=value" assignment; the value is parsed as JSON and
/// falls back to a plain string.
void apply_assignment(nlohmann::json& j, std::string_view assignment);

/// FNV-1a of the canonical resolved config, as 16 hex digits.
std::string config_hash(const ExperimentConfig& cfg);

/// Per-purpose seeds derived from an experiment seed.
struct SeedPlan {
  std::uint64_t bank;
  std::uint64_t decoder;
  std::uint64_t train;
  std::uint64_t test;
  std::uint64_t encoder;

  explicit SeedPlan(std::uint64_t seed);
  std::uint64_t sample(std::size_t sample_id) const;

 private:
  std::uint64_t root_;
};

WorldSnapshot build_world(const WorldParams& params, std::uint64_t seed);
DualEncoder build_encoder(const WorldSnapshot& world, const EncoderParams& params, std::uint64_t seed);

/// Run one defense method on one input.
DefenseReport defend(Method method, const DualEncoder& enc, const TextBank& bank, const Image& x,
                     const DefenseConfig& cfg, std::uint64_t sample_seed);

struct SampleRow {
  std::uint64_t seed = 0;
  Method method = Method::none;
  Stage stage = Stage::clean;
  std::size_t sample_id = 0;
  int true_label = 0;
  int pred_label = 0;
  double margin = 0.0;  // true-label semantic margin of the corrected image
  double confidence_w = 0.0;
  double wall_time = 0.0;
};

struct MethodSummary {
  std::uint64_t seed = 0;
  Method method = Method::none;
  double acc = 0.0;
  double rob = 0.0;
  double mean_wall_time = 0.0;
};

/// Exhaustive budget and pixel-domain bookkeeping over every attack and
/// defense output.
struct SafetyStats {
  std::size_t checked = 0;
  std::size_t violations = 0;
  double worst_excess = 0.0;  // largest |delta|_inf - budget seen

  void record(const Image& delta, double budget, const Image& composite);
};

struct ExperimentResult {
  std::string config_hash;
  std::vector<SampleRow> rows;  // ordered by (seed, method, stage, sample_id)
  std::vector<MethodSummary> summaries;
  std::vector<double> train_accuracy;  // per seed
  SafetyStats safety;

  /// Mean over seeds for one method.
  MethodSummary mean(Method method) const;
};

ExperimentResult run_experiment(const ExperimentConfig& cfg);

std::string results_csv(const ExperimentResult& result, bool with_wall_time);
std::string summary_csv(const ExperimentResult& result, bool with_wall_time);
std::string timing_csv(const ExperimentResult& result);

/// Writes results.csv, summary.csv, timing.csv and resolved_config.json.
void write_experiment(const ExperimentResult& result, const ExperimentConfig& cfg,
                      const std::filesystem::path& dir);

enum class DiagnosticStage { clean, adversarial, defended };

std::string_view to_string(DiagnosticStage stage);

struct DiagnosticsReport {
  double bias = 0.0;                   // mean |E_views[q] - onehot(y)|_1
  double var = 0.0;                    // mean sum_k Var_views[q_k]
  double margin_mean = 0.0;            // mean true-label semantic margin
  double hardest_negative_rate = 0.0;  // hardest competitor == hard-pair partner
  double view_gap_var = 0.0;           // mean Var_views[top1 - top2 logit]
};

struct StageDiagnostics {
  std::uint64_t seed = 0;
  DiagnosticStage stage = DiagnosticStage::clean;
  DiagnosticsReport report;
};

/// Clean, attacked and SCC-defended statistics per seed. View statistics use
/// the SCC method's final view spec.
std::vector<StageDiagnostics> run_diagnostics(const ExperimentConfig& cfg);

DiagnosticsReport diagnose_batch(const DualEncoder& enc, const TextBank& bank, const std::vector<Image>& images,
                                 const std::vector<int>& labels, const DefenseConfig& cfg, std::uint64_t seed);

std::string diagnostics_csv(const std::vector<StageDiagnostics>& diagnostics);

}  // namespace scc
