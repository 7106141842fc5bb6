#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "scc/attack.hpp"
#include "scc/errors.hpp"
#include "scc/harness.hpp"
#include "scc/propositions.hpp"
#include "scc/snapshot.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitConfigError = 2;

struct ConfigFlags {
  std::string config_path;
  std::vector<std::string> assignments;
  std::vector<std::uint64_t> seeds;

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "experiment config (JSON)")->check(CLI::ExistingFile);
    app->add_option("--set", assignments, "override a config key, e.g. --set defense.steps=5")->take_all();
    app->add_option("--seed", seeds, "replace the config's seed list")->take_all();
  }

  scc::ExperimentConfig load() const {
    nlohmann::json j = config_path.empty() ? scc::to_json(scc::ExperimentConfig{}) : scc::read_json_file(config_path);
    for (const auto& a : assignments) scc::apply_assignment(j, a);
    if (!seeds.empty()) j["seeds"] = seeds;
    return scc::config_from_json(j);
  }
};

void print_summary(const scc::ExperimentResult& result, const scc::ExperimentConfig& cfg) {
  std::printf("%-8s %8s %8s\n", "method", "acc", "rob");
  for (scc::Method m : cfg.methods) {
    const scc::MethodSummary s = result.mean(m);
    std::printf("%-8s %8.4f %8.4f\n", std::string(scc::to_string(m)).c_str(), s.acc, s.rob);
  }
  std::printf("safety: %zu outputs checked, %zu violations\n", result.safety.checked, result.safety.violations);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Test-time counterattack laboratory on a synthetic dual-encoder world"};
  app.require_subcommand(1);

  ConfigFlags world_flags;
  std::string world_out = "world.json";
  auto* gen = app.add_subcommand("gen-world", "sample a text bank and train/test images");
  world_flags.attach(gen);
  gen->add_option("--out", world_out, "output snapshot path");

  ConfigFlags train_flags;
  std::string train_world;
  std::string encoder_out = "encoder.json";
  auto* train = app.add_subcommand("train", "fit the image encoder on a world snapshot");
  train_flags.attach(train);
  train->add_option("--world", train_world, "world snapshot from gen-world")->required()->check(CLI::ExistingFile);
  train->add_option("--out", encoder_out, "output encoder path");

  ConfigFlags attack_flags;
  std::string attack_world;
  std::string attack_encoder;
  std::string attack_out = "adversarial.json";
  auto* attack = app.add_subcommand("attack", "attack the test images of a world snapshot");
  attack_flags.attach(attack);
  attack->add_option("--world", attack_world, "world snapshot")->required()->check(CLI::ExistingFile);
  attack->add_option("--encoder", attack_encoder, "encoder snapshot")->required()->check(CLI::ExistingFile);
  attack->add_option("--out", attack_out, "output image batch path");

  ConfigFlags eval_flags;
  std::string eval_dir;
  auto* evaluate = app.add_subcommand("evaluate", "run the full attack/defense experiment and write CSVs");
  eval_flags.attach(evaluate);
  evaluate->add_option("--out", eval_dir, "output directory (defaults to the config's output_dir)");

  ConfigFlags diag_flags;
  std::string diag_out;
  auto* diagnose = app.add_subcommand("diagnose", "bias/variance/margin diagnostics per stage");
  diag_flags.attach(diagnose);
  diagnose->add_option("--out", diag_out, "write diagnostics CSV here instead of stdout");

  std::uint64_t props_seed = 0;
  auto* props = app.add_subcommand("props", "run the gradient and proposition property suite");
  props->add_option("--seed", props_seed, "suite seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfigError;
  }

  try {
    if (*gen) {
      const scc::ExperimentConfig cfg = world_flags.load();
      const scc::WorldSnapshot world = scc::build_world(cfg.world, cfg.seeds.front());
      scc::write_json_file(world_out, scc::to_json(world));
      std::printf("wrote %s (%zu train, %zu test images)\n", world_out.c_str(), world.train.size(), world.test.size());
    } else if (*train) {
      const scc::ExperimentConfig cfg = train_flags.load();
      const scc::WorldSnapshot world = scc::world_from_json(scc::read_json_file(train_world));
      const scc::DualEncoder enc = scc::build_encoder(world, cfg.encoder, cfg.seeds.front());
      scc::write_json_file(encoder_out, scc::to_json(enc));
      std::printf("wrote %s (train acc %.4f, test acc %.4f)\n", encoder_out.c_str(),
                  scc::zero_shot_accuracy(enc, world.bank, world.train),
                  scc::zero_shot_accuracy(enc, world.bank, world.test));
    } else if (*attack) {
      const scc::ExperimentConfig cfg = attack_flags.load();
      const scc::WorldSnapshot world = scc::world_from_json(scc::read_json_file(attack_world));
      const scc::DualEncoder enc = scc::encoder_from_json(scc::read_json_file(attack_encoder));
      const scc::ImageBatch adv = scc::attack_batch(enc, world.bank, world.test, cfg.attack);
      scc::write_json_file(attack_out, scc::to_json(adv));
      std::printf("wrote %s (%s robust acc %.4f)\n", attack_out.c_str(),
                  std::string(scc::to_string(cfg.attack.kind)).c_str(), scc::zero_shot_accuracy(enc, world.bank, adv));
    } else if (*evaluate) {
      const scc::ExperimentConfig cfg = eval_flags.load();
      const scc::ExperimentResult result = scc::run_experiment(cfg);
      const std::string dir = eval_dir.empty() ? cfg.output_dir : eval_dir;
      scc::write_experiment(result, cfg, dir);
      print_summary(result, cfg);
      std::printf("wrote %s/results.csv (config %s)\n", dir.c_str(), result.config_hash.c_str());
      if (result.safety.violations > 0) return kExitCheckFailed;
    } else if (*diagnose) {
      const scc::ExperimentConfig cfg = diag_flags.load();
      const std::string csv = scc::diagnostics_csv(scc::run_diagnostics(cfg));
      if (diag_out.empty()) {
        std::cout << csv;
      } else {
        std::ofstream(diag_out) << csv;
      }
    } else if (*props) {
      const scc::PropositionReport report = scc::run_proposition_suite(props_seed);
      for (const auto& c : report.checks) {
        std::printf("%s %-34s %s\n", c.passed ? "PASS" : "FAIL", c.name.c_str(), c.detail.c_str());
      }
      return report.all_passed() ? kExitOk : kExitCheckFailed;
    }
  } catch (const scc::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfigError;
  } catch (const nlohmann::json::exception& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfigError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitCheckFailed;
  }
  return kExitOk;
}
