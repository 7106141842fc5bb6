#include "scc/harness.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <type_traits>

#include "scc/errors.hpp"
#include "scc/rng.hpp"
#include "scc/zero_shot.hpp"

namespace scc {

using nlohmann::json;

namespace {

std::string join(const std::string& path, std::string_view key) {
  return path.empty() ? std::string(key) : path + "." + std::string(key);
}

double parse_fraction(const std::string& text, const std::string& path) {
  const auto slash = text.find('/');
  auto number = [&](std::string_view part) {
    double v = 0.0;
    const auto [end, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
    if (ec != std::errc() || end != part.data() + part.size()) throw ConfigError(path, "not a number: '" + text + "'");
    return v;
  };
  if (slash == std::string::npos) return number(text);
  const double den = number(std::string_view(text).substr(slash + 1));
  if (den == 0.0) throw ConfigError(path, "zero denominator");
  return number(std::string_view(text).substr(0, slash)) / den;
}

/// Reads the fields of one JSON object and rejects any key left unread.
class Fields {
 public:
  Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  std::string path(std::string_view key) const { return join(path_, key); }

  const json* find(std::string_view key) {
    const auto it = j_.find(std::string(key));
    if (it == j_.end()) return nullptr;
    seen_.insert(std::string(key));
    return &*it;
  }

  void number(std::string_view key, double& out) {
    if (const json* v = find(key)) out = as_number(*v, path(key));
  }

  void optional_number(std::string_view key, std::optional<double>& out) {
    if (const json* v = find(key)) out = v->is_null() ? std::nullopt : std::optional<double>(as_number(*v, path(key)));
  }

  template <class Int>
  void integer(std::string_view key, Int& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer()) throw ConfigError(path(key), "expected an integer");
      if (std::is_unsigned_v<Int> && v->is_number_integer() && !v->is_number_unsigned() && v->get<std::int64_t>() < 0) {
        throw ConfigError(path(key), "expected a non-negative integer");
      }
      out = v->get<Int>();
    }
  }

  void boolean(std::string_view key, bool& out) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) throw ConfigError(path(key), "expected true or false");
      out = v->get<bool>();
    }
  }

  template <class Fn>
  void string(std::string_view key, Fn&& assign) {
    if (const json* v = find(key)) {
      if (!v->is_string()) throw ConfigError(path(key), "expected a string");
      try {
        assign(v->get<std::string>());
      } catch (const PreconditionError& e) {
        throw ConfigError(path(key), e.what());
      }
    }
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError(path(key), "unknown key");
    }
  }

  static double as_number(const json& v, const std::string& path) {
    if (v.is_number()) return v.get<double>();
    if (v.is_string()) return parse_fraction(v.get<std::string>(), path);
    throw ConfigError(path, "expected a number or an \"a/b\" fraction");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <class Fn>
void checked(const std::string& path, Fn&& fn) {
  try {
    fn();
  } catch (const PreconditionError& e) {
    throw ConfigError(path, e.what());
  }
}

json view_json(const ViewSpec& v) {
  return {{"count", v.count}, {"sigma", v.sigma}, {"seed", v.seed}, {"flip", v.flip}};
}

void read_view(const json& j, const std::string& path, ViewSpec& v) {
  Fields f(j, path);
  f.integer("count", v.count);
  f.number("sigma", v.sigma);
  f.integer("seed", v.seed);
  f.boolean("flip", v.flip);
  f.finish();
  checked(path, [&] { validate(v); });
}

json defense_json(const DefenseConfig& d) {
  return {{"eps_d", d.eps_d},
          {"alpha_d", d.alpha_d},
          {"steps", d.steps},
          {"warm_steps", d.warm_steps},
          {"warm_eps", d.warm_eps},
          {"warm_alpha", d.warm_alpha},
          {"lambda_cm", d.lambda_cm},
          {"temp_sharpen", d.temp_sharpen},
          {"proto_views", view_json(d.proto_views)},
          {"final_views", view_json(d.final_views)},
          {"fuse_tau", d.fuse_tau},
          {"fuse_beta", d.fuse_beta},
          {"confidence_weighting", d.confidence_weighting},
          {"coupled_views", d.coupled_views},
          {"feature_space", std::string(to_string(d.feature_space))},
          {"logit_scale", d.logit_scale}};
}

void read_defense(const json& j, const std::string& path, DefenseConfig& d) {
  Fields f(j, path);
  f.number("eps_d", d.eps_d);
  f.number("alpha_d", d.alpha_d);
  f.integer("steps", d.steps);
  f.integer("warm_steps", d.warm_steps);
  f.number("warm_eps", d.warm_eps);
  f.number("warm_alpha", d.warm_alpha);
  f.number("lambda_cm", d.lambda_cm);
  f.number("temp_sharpen", d.temp_sharpen);
  if (const json* v = f.find("proto_views")) read_view(*v, f.path("proto_views"), d.proto_views);
  if (const json* v = f.find("final_views")) read_view(*v, f.path("final_views"), d.final_views);
  f.number("fuse_tau", d.fuse_tau);
  f.number("fuse_beta", d.fuse_beta);
  f.boolean("confidence_weighting", d.confidence_weighting);
  f.boolean("coupled_views", d.coupled_views);
  f.string("feature_space", [&](const std::string& s) { d.feature_space = feature_space_from_string(s); });
  f.number("logit_scale", d.logit_scale);
  f.finish();
  checked(path, [&] { validate(d); });
}

json attack_json(const AttackConfig& a) {
  return {{"kind", std::string(to_string(a.kind))},
          {"eps_a", a.eps_a},
          {"alpha", a.alpha},
          {"steps", a.steps},
          {"cw_kappa", a.cw_kappa},
          {"logit_scale", a.logit_scale}};
}

void read_attack(const json& j, const std::string& path, AttackConfig& a) {
  Fields f(j, path);
  f.string("kind", [&](const std::string& s) { a.kind = attack_kind_from_string(s); });
  f.number("eps_a", a.eps_a);
  f.number("alpha", a.alpha);
  f.integer("steps", a.steps);
  f.number("cw_kappa", a.cw_kappa);
  f.number("logit_scale", a.logit_scale);
  f.finish();
  checked(path, [&] { validate(a); });
}

json world_json(const WorldParams& w) {
  return {{"num_classes", w.num_classes},
          {"dim", w.dim},
          {"height", w.height},
          {"width", w.width},
          {"n_train_per_class", w.n_train_per_class},
          {"n_test_per_class", w.n_test_per_class},
          {"pixel_noise", w.pixel_noise},
          {"hard_pair_cos", w.hard_pair_cos ? json(*w.hard_pair_cos) : json(nullptr)},
          {"decoder_scale", w.decoder_scale}};
}

void read_world(const json& j, const std::string& path, WorldParams& w) {
  Fields f(j, path);
  f.integer("num_classes", w.num_classes);
  f.integer("dim", w.dim);
  f.integer("height", w.height);
  f.integer("width", w.width);
  f.integer("n_train_per_class", w.n_train_per_class);
  f.integer("n_test_per_class", w.n_test_per_class);
  f.number("pixel_noise", w.pixel_noise);
  f.optional_number("hard_pair_cos", w.hard_pair_cos);
  f.number("decoder_scale", w.decoder_scale);
  f.finish();
  if (w.num_classes < 2) throw ConfigError(join(path, "num_classes"), "must be >= 2");
  if (w.dim < 1) throw ConfigError(join(path, "dim"), "must be >= 1");
  if (w.height < 1 || w.width < 1) throw ConfigError(join(path, "height"), "image sides must be >= 1");
  if (w.n_train_per_class < 1) throw ConfigError(join(path, "n_train_per_class"), "must be >= 1");
  if (w.n_test_per_class < 1) throw ConfigError(join(path, "n_test_per_class"), "must be >= 1");
  if (w.pixel_noise < 0) throw ConfigError(join(path, "pixel_noise"), "must be >= 0");
  if (w.hard_pair_cos && (*w.hard_pair_cos < 0.8 || *w.hard_pair_cos > 0.99)) {
    throw ConfigError(join(path, "hard_pair_cos"), "must lie in [0.8, 0.99] or be null");
  }
  if (!(w.decoder_scale > 0)) throw ConfigError(join(path, "decoder_scale"), "must be > 0");
}

json encoder_json(const EncoderParams& e) {
  return {{"kind", std::string(to_string(e.kind))},
          {"hidden", e.hidden},
          {"steps", e.steps},
          {"lr", e.lr},
          {"init_scale", e.init_scale},
          {"ridge", e.ridge}};
}

void read_encoder(const json& j, const std::string& path, EncoderParams& e) {
  Fields f(j, path);
  f.string("kind", [&](const std::string& s) { e.kind = encoder_kind_from_string(s); });
  f.integer("hidden", e.hidden);
  f.integer("steps", e.steps);
  f.number("lr", e.lr);
  f.number("init_scale", e.init_scale);
  f.number("ridge", e.ridge);
  f.finish();
  if (e.hidden < 1) throw ConfigError(join(path, "hidden"), "must be >= 1");
  if (e.steps < 1) throw ConfigError(join(path, "steps"), "must be >= 1");
  if (!(e.lr > 0)) throw ConfigError(join(path, "lr"), "must be > 0");
  if (!(e.init_scale > 0)) throw ConfigError(join(path, "init_scale"), "must be > 0");
  if (!(e.ridge > 0)) throw ConfigError(join(path, "ridge"), "must be > 0");
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double linf(const Image& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

std::string_view to_string(Method method) {
  switch (method) {
    case Method::none: return "none";
    case Method::rn: return "rn";
    case Method::antiadv: return "antiadv";
    case Method::hd: return "hd";
    case Method::ttc: return "ttc";
    case Method::scc: return "scc";
  }
  return "none";
}

Method method_from_string(std::string_view name) {
  for (Method m : {Method::none, Method::rn, Method::antiadv, Method::hd, Method::ttc, Method::scc}) {
    if (to_string(m) == name) return m;
  }
  throw PreconditionError("unknown method '" + std::string(name) + "'");
}

std::string_view to_string(Stage stage) { return stage == Stage::clean ? "clean" : "adversarial"; }

std::string_view to_string(DiagnosticStage stage) {
  switch (stage) {
    case DiagnosticStage::clean: return "clean";
    case DiagnosticStage::adversarial: return "adversarial";
    case DiagnosticStage::defended: return "defended";
  }
  return "clean";
}

DefenseConfig ExperimentConfig::defense_for(Method method) const {
  DefenseConfig cfg = defense;
  const auto it = overrides.find(method);
  if (it != overrides.end()) read_defense(it->second, "overrides." + std::string(to_string(method)), cfg);
  return cfg;
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig cfg;
  Fields f(j, "");
  const json* version = f.find("schema_version");
  if (!version) throw ConfigError("schema_version", "missing");
  if (!version->is_number_integer() || version->get<int>() != kConfigSchemaVersion) {
    throw ConfigError("schema_version", "unsupported version (expected " + std::to_string(kConfigSchemaVersion) + ")");
  }
  if (const json* v = f.find("world")) read_world(*v, "world", cfg.world);
  if (const json* v = f.find("encoder")) read_encoder(*v, "encoder", cfg.encoder);
  if (const json* v = f.find("attack")) read_attack(*v, "attack", cfg.attack);
  if (const json* v = f.find("defense")) read_defense(*v, "defense", cfg.defense);
  if (const json* v = f.find("overrides")) {
    if (!v->is_object()) throw ConfigError("overrides", "expected an object");
    for (const auto& [name, patch] : v->items()) {
      const std::string path = "overrides." + name;
      Method m{};
      checked(path, [&] { m = method_from_string(name); });
      DefenseConfig probe = cfg.defense;
      read_defense(patch, path, probe);
      cfg.overrides[m] = patch;
    }
  }
  if (const json* v = f.find("methods")) {
    if (!v->is_array()) throw ConfigError("methods", "expected an array");
    cfg.methods.clear();
    for (std::size_t i = 0; i < v->size(); ++i) {
      const std::string path = "methods[" + std::to_string(i) + "]";
      if (!(*v)[i].is_string()) throw ConfigError(path, "expected a method name");
      Method m{};
      checked(path, [&] { m = method_from_string((*v)[i].get<std::string>()); });
      if (std::find(cfg.methods.begin(), cfg.methods.end(), m) != cfg.methods.end()) {
        throw ConfigError(path, "duplicate method");
      }
      cfg.methods.push_back(m);
    }
  }
  if (const json* v = f.find("seeds")) {
    if (!v->is_array()) throw ConfigError("seeds", "expected an array");
    cfg.seeds.clear();
    for (std::size_t i = 0; i < v->size(); ++i) {
      if (!(*v)[i].is_number_unsigned()) throw ConfigError("seeds[" + std::to_string(i) + "]", "expected a seed >= 0");
      cfg.seeds.push_back((*v)[i].get<std::uint64_t>());
    }
  }
  f.boolean("record_wall_time", cfg.record_wall_time);
  f.string("output_dir", [&](const std::string& s) { cfg.output_dir = s; });
  f.finish();
  if (cfg.methods.empty()) throw ConfigError("methods", "at least one method is required");
  if (cfg.seeds.empty()) throw ConfigError("seeds", "at least one seed is required");
  return cfg;
}

json to_json(const ExperimentConfig& cfg) {
  json methods = json::array();
  for (Method m : cfg.methods) methods.push_back(std::string(to_string(m)));
  json overrides = json::object();
  for (const auto& [m, patch] : cfg.overrides) overrides[std::string(to_string(m))] = patch;
  return {{"schema_version", kConfigSchemaVersion},
          {"world", world_json(cfg.world)},
          {"encoder", encoder_json(cfg.encoder)},
          {"attack", attack_json(cfg.attack)},
          {"defense", defense_json(cfg.defense)},
          {"overrides", std::move(overrides)},
          {"methods", std::move(methods)},
          {"seeds", cfg.seeds},
          {"record_wall_time", cfg.record_wall_time},
          {"output_dir", cfg.output_dir}};
}

void apply_assignment(json& j, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw ConfigError(std::string(assignment), "expected key.path=value");
  }
  const std::string key(assignment.substr(0, eq));
  const std::string text(assignment.substr(eq + 1));
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  json* node = &j;
  std::size_t start = 0;
  for (;;) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError(key, "empty path component");
    if (!node->is_object()) throw ConfigError(key, "cannot descend into a non-object");
    if (dot == std::string::npos) {
      (*node)[part] = std::move(value);
      return;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
}

std::string config_hash(const ExperimentConfig& cfg) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, fnv1a(to_json(cfg).dump()));
  return buf;
}

SeedPlan::SeedPlan(std::uint64_t seed)
    : bank(stream_seed(seed, "world-bank")),
      decoder(stream_seed(seed, "world-decoder")),
      train(stream_seed(seed, "world-train")),
      test(stream_seed(seed, "world-test")),
      encoder(stream_seed(seed, "encoder")),
      root_(seed) {}

std::uint64_t SeedPlan::sample(std::size_t sample_id) const { return stream_seed(root_, "sample", sample_id); }

WorldSnapshot build_world(const WorldParams& params, std::uint64_t seed) {
  const SeedPlan plan(seed);
  TextBank bank = make_text_bank(params.num_classes, params.dim, plan.bank, params.hard_pair_cos);
  const SampleOptions options{params.height, params.width, params.decoder_scale};
  ImageBatch train = sample_images(bank, plan.decoder, params.n_train_per_class, params.pixel_noise, plan.train, options);
  ImageBatch test = sample_images(bank, plan.decoder, params.n_test_per_class, params.pixel_noise, plan.test, options);
  return {std::move(bank), std::move(train), std::move(test)};
}

DualEncoder build_encoder(const WorldSnapshot& world, const EncoderParams& params, std::uint64_t seed) {
  if (params.kind == EncoderKind::linear) return fit_linear_encoder(world.train, world.bank, params.ridge);
  MlpTrainOptions options;
  options.hidden = params.hidden;
  options.steps = params.steps;
  options.lr = params.lr;
  options.init_scale = params.init_scale;
  options.seed = SeedPlan(seed).encoder;
  return train_mlp_encoder(world.train, world.bank, options);
}

DefenseReport defend(Method method, const DualEncoder& enc, const TextBank& bank, const Image& x,
                     const DefenseConfig& cfg, std::uint64_t sample_seed) {
  switch (method) {
    case Method::none: return no_defense(enc, bank, x, cfg.logit_scale);
    case Method::rn: return rn_defend(enc, bank, x, cfg.eps_d, sample_seed, cfg.logit_scale);
    case Method::antiadv: return anti_adv_defend(enc, bank, x, cfg);
    case Method::hd: return hd_defend(enc, bank, x, cfg);
    case Method::ttc: return ttc_defend(enc, bank, x, cfg, sample_seed);
    case Method::scc: return scc_defend(enc, bank, x, cfg, sample_seed);
  }
  throw PreconditionError("unknown method");
}

void SafetyStats::record(const Image& delta, double budget, const Image& composite) {
  ++checked;
  const double excess = linf(delta) - budget;
  worst_excess = std::max(worst_excess, excess);
  const bool in_domain = composite.size() == 0 || (composite.minCoeff() >= 0.0 && composite.maxCoeff() <= 1.0);
  if (excess > 1e-12 || !in_domain || !delta.allFinite()) ++violations;
}

MethodSummary ExperimentResult::mean(Method method) const {
  MethodSummary out;
  out.method = method;
  std::size_t n = 0;
  for (const auto& s : summaries) {
    if (s.method != method) continue;
    out.acc += s.acc;
    out.rob += s.rob;
    out.mean_wall_time += s.mean_wall_time;
    ++n;
  }
  if (n > 0) {
    out.acc /= static_cast<double>(n);
    out.rob /= static_cast<double>(n);
    out.mean_wall_time /= static_cast<double>(n);
  }
  return out;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  ExperimentResult result;
  result.config_hash = config_hash(cfg);
  for (std::uint64_t seed : cfg.seeds) {
    const SeedPlan plan(seed);
    const WorldSnapshot world = build_world(cfg.world, seed);
    const DualEncoder enc = build_encoder(world, cfg.encoder, seed);
    result.train_accuracy.push_back(zero_shot_accuracy(enc, world.bank, world.train));

    const ImageBatch adv = attack_batch(enc, world.bank, world.test, cfg.attack);
    for (std::size_t i = 0; i < adv.size(); ++i) {
      result.safety.record(adv.images[i] - world.test.images[i], cfg.attack.eps_a, adv.images[i]);
    }

    for (Method method : cfg.methods) {
      const DefenseConfig dcfg = cfg.defense_for(method);
      MethodSummary summary;
      summary.seed = seed;
      summary.method = method;
      double wall = 0.0;
      for (Stage stage : {Stage::clean, Stage::adversarial}) {
        const ImageBatch& batch = stage == Stage::clean ? world.test : adv;
        std::size_t correct = 0;
        for (std::size_t i = 0; i < batch.size(); ++i) {
          const Image& x = batch.images[i];
          const auto start = std::chrono::steady_clock::now();
          const DefenseReport r = defend(method, enc, world.bank, x, dcfg, plan.sample(i));
          const double elapsed = seconds_since(start);

          const Image composite = clip_unit(x + r.delta);
          result.safety.record(r.delta, r.budget, composite);
          if (r.warm_delta.size() > 0) result.safety.record(r.warm_delta, dcfg.warm_eps, clip_unit(x + r.warm_delta));

          SampleRow row;
          row.seed = seed;
          row.method = method;
          row.stage = stage;
          row.sample_id = i;
          row.true_label = batch.labels[i];
          row.pred_label = r.label;
          row.margin = semantic_margin(enc, world.bank, composite, row.true_label);
          row.confidence_w = r.confidence_w;
          row.wall_time = elapsed;
          result.rows.push_back(row);
          wall += elapsed;
          if (row.pred_label == row.true_label) ++correct;
        }
        const double rate = static_cast<double>(correct) / static_cast<double>(batch.size());
        (stage == Stage::clean ? summary.acc : summary.rob) = rate;
      }
      summary.mean_wall_time = wall / static_cast<double>(2 * world.test.size());
      result.summaries.push_back(summary);
    }
  }
  return result;
}

std::string results_csv(const ExperimentResult& result, bool with_wall_time) {
  std::string out = "seed,method,stage,sample_id,true_label,pred_label,margin,confidence_w,wall_time_s,config_hash\n";
  for (const auto& r : result.rows) {
    out += std::to_string(r.seed) + ',' + std::string(to_string(r.method)) + ',' + std::string(to_string(r.stage)) +
           ',' + std::to_string(r.sample_id) + ',' + std::to_string(r.true_label) + ',' +
           std::to_string(r.pred_label) + ',' + fmt(r.margin) + ',' + fmt(r.confidence_w) + ',' +
           fmt(with_wall_time ? r.wall_time : 0.0) + ',' + result.config_hash + '\n';
  }
  return out;
}

std::string summary_csv(const ExperimentResult& result, bool with_wall_time) {
  std::string out = "seed,method,acc,rob,mean_wall_time_s,config_hash\n";
  auto line = [&](const std::string& seed, const MethodSummary& s) {
    out += seed + ',' + std::string(to_string(s.method)) + ',' + fmt(s.acc) + ',' + fmt(s.rob) + ',' +
           fmt(with_wall_time ? s.mean_wall_time : 0.0) + ',' + result.config_hash + '\n';
  };
  std::vector<Method> methods;
  for (const auto& s : result.summaries) {
    line(std::to_string(s.seed), s);
    if (std::find(methods.begin(), methods.end(), s.method) == methods.end()) methods.push_back(s.method);
  }
  for (Method m : methods) line("mean", result.mean(m));
  return out;
}

std::string timing_csv(const ExperimentResult& result) {
  std::string out = "seed,method,mean_wall_time_s\n";
  for (const auto& s : result.summaries) {
    out += std::to_string(s.seed) + ',' + std::string(to_string(s.method)) + ',' + fmt(s.mean_wall_time) + '\n';
  }
  return out;
}

void write_experiment(const ExperimentResult& result, const ExperimentConfig& cfg,
                      const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto write = [&](const char* name, const std::string& text) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw Error("cannot write " + (dir / name).string());
    out << text;
  };
  write("results.csv", results_csv(result, cfg.record_wall_time));
  write("summary.csv", summary_csv(result, cfg.record_wall_time));
  write("timing.csv", timing_csv(result));
  write_json_file(dir / "resolved_config.json", to_json(cfg));
}

DiagnosticsReport diagnose_batch(const DualEncoder& enc, const TextBank& bank, const std::vector<Image>& images,
                                 const std::vector<int>& labels, const DefenseConfig& cfg, std::uint64_t seed) {
  if (images.size() != labels.size() || images.empty()) {
    throw PreconditionError("diagnose_batch: need matching, non-empty images and labels");
  }
  const SeedPlan plan(seed);
  const Eigen::Index k = bank.num_classes();
  DiagnosticsReport rep;
  std::size_t hard_hits = 0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const Image& x = images[i];
    const int y = labels[i];
    const ViewPlan views = make_view_plan(final_view_spec(cfg, plan.sample(i)), x.rows(), x.cols());
    const auto n = static_cast<double>(views.size());

    Vector q_mean = Vector::Zero(k);
    Vector q_sq = Vector::Zero(k);
    double gap_mean = 0.0;
    double gap_sq = 0.0;
    for (std::size_t v = 0; v < views.size(); ++v) {
      const ZeroShotPrediction pred = zero_shot_predict(enc, bank, apply_view(x, views, v), cfg.logit_scale);
      q_mean += pred.prob;
      q_sq += pred.prob.cwiseAbs2();
      Vector sorted = pred.logits;
      std::partial_sort(sorted.begin(), sorted.begin() + 2, sorted.end(), std::greater<>());
      const double gap = sorted[0] - sorted[1];
      gap_mean += gap;
      gap_sq += gap * gap;
    }
    q_mean /= n;
    q_sq /= n;
    gap_mean /= n;
    gap_sq /= n;

    Vector onehot = Vector::Zero(k);
    onehot[y] = 1.0;
    rep.bias += (q_mean - onehot).lpNorm<1>();
    rep.var += (q_sq - q_mean.cwiseAbs2()).cwiseMax(0.0).sum();
    rep.view_gap_var += std::max(0.0, gap_sq - gap_mean * gap_mean);

    const Vector cos = cosines(bank, enc.forward(x));
    rep.margin_mean += semantic_margin_from_embedding(bank, enc.forward(x), y);
    const auto partner = bank.hard_partner(y);
    if (partner && max_excluding(cos, y).first == *partner) ++hard_hits;
  }
  const auto count = static_cast<double>(images.size());
  rep.bias /= count;
  rep.var /= count;
  rep.view_gap_var /= count;
  rep.margin_mean /= count;
  rep.hardest_negative_rate = static_cast<double>(hard_hits) / count;
  return rep;
}

std::vector<StageDiagnostics> run_diagnostics(const ExperimentConfig& cfg) {
  std::vector<StageDiagnostics> out;
  const DefenseConfig dcfg = cfg.defense_for(Method::scc);
  for (std::uint64_t seed : cfg.seeds) {
    const SeedPlan plan(seed);
    const WorldSnapshot world = build_world(cfg.world, seed);
    const DualEncoder enc = build_encoder(world, cfg.encoder, seed);
    const ImageBatch adv = attack_batch(enc, world.bank, world.test, cfg.attack);
    std::vector<Image> defended;
    for (std::size_t i = 0; i < adv.size(); ++i) {
      const DefenseReport r = scc_defend(enc, world.bank, adv.images[i], dcfg, plan.sample(i));
      defended.push_back(clip_unit(adv.images[i] + r.delta));
    }
    const auto& labels = world.test.labels;
    out.push_back({seed, DiagnosticStage::clean, diagnose_batch(enc, world.bank, world.test.images, labels, dcfg, seed)});
    out.push_back({seed, DiagnosticStage::adversarial, diagnose_batch(enc, world.bank, adv.images, labels, dcfg, seed)});
    out.push_back({seed, DiagnosticStage::defended, diagnose_batch(enc, world.bank, defended, labels, dcfg, seed)});
  }
  return out;
}

std::string diagnostics_csv(const std::vector<StageDiagnostics>& diagnostics) {
  std::string out = "seed,stage,bias,var,margin_mean,hardest_negative_rate,view_gap_var\n";
  for (const auto& d : diagnostics) {
    out += std::to_string(d.seed) + ',' + std::string(to_string(d.stage)) + ',' + fmt(d.report.bias) + ',' +
           fmt(d.report.var) + ',' + fmt(d.report.margin_mean) + ',' + fmt(d.report.hardest_negative_rate) + ',' +
           fmt(d.report.view_gap_var) + '\n';
  }
  return out;
}

}  // namespace scc
