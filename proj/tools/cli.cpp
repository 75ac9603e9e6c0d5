#include "cli.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "angiogan/archive.hpp"
#include "angiogan/dataset.hpp"
#include "angiogan/errors.hpp"
#include "angiogan/evaluation.hpp"
#include "angiogan/image_io.hpp"
#include "angiogan/model.hpp"
#include "angiogan/perturb.hpp"
#include "angiogan/resample.hpp"
#include "angiogan/trainer.hpp"

#ifndef ANGIOGAN_VERSION
#define ANGIOGAN_VERSION "unknown"
#endif

namespace angiogan::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::string group_thousands(std::size_t n) {
  std::string digits = std::to_string(n);
  for (int i = static_cast<int>(digits.size()) - 3; i > 0; i -= 3) digits.insert(static_cast<std::size_t>(i), ",");
  return digits;
}

namespace {

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

std::string file_hash(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw IoError("cannot read " + p.string());
  const std::string bytes{std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
  return hex64(fnv1a64(bytes.data(), bytes.size()));
}

json read_json_file(const fs::path& p) {
  std::ifstream is(p);
  if (!is) throw IoError("cannot read " + p.string());
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw ConfigError(p.string() + ": " + e.what());
  }
}

void write_json(const fs::path& p, const json& j) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream os(p);
  os << j.dump(2) << '\n';
  if (!os) throw IoError("cannot write " + p.string());
}

/// A run manifest contributes its "config" section; any other file is used whole.
json load_config_file(const std::string& path) {
  if (path.empty()) return json::object();
  json j = read_json_file(path);
  if (j.contains("config") && j["config"].is_object()) return j["config"];
  if (!j.is_object()) throw ConfigError(path + ": a config file must hold a JSON object");
  return j;
}

struct RunRecord {
  std::string command;
  std::vector<std::string> args;
  std::string started_at = utc_now();
  json config = json::object();
  std::uint64_t seed = 0;
  std::string dataset_hash;

  void write(const fs::path& path) const {
    write_json(path, {{"command", command},
                      {"argv", args},
                      {"config", config},
                      {"seed", seed},
                      {"dataset_hash", dataset_hash.empty() ? json(nullptr) : json(dataset_hash)},
                      {"code_version", ANGIOGAN_VERSION},
                      {"started_at", started_at},
                      {"finished_at", utc_now()}});
  }
};

/// Sets cfg[key] from a flag only when the flag was given, so flags override
/// the config file, which overrides the defaults.
template <typename T>
void overlay(json& cfg, const CLI::Option* opt, const std::string& key, const T& value) {
  if (opt->count() > 0) cfg[json::json_pointer(key)] = value;
}

std::optional<std::string> split_filter(const std::string& split) {
  if (split.empty() || split == "all") return std::nullopt;
  return split;
}

std::vector<fs::path> image_inputs(const fs::path& p) {
  static const std::vector<std::string> exts = {".png", ".jpg", ".jpeg", ".tif", ".tiff", ".bmp"};
  std::vector<fs::path> files;
  if (fs::is_directory(p)) {
    for (const auto& e : fs::directory_iterator(p)) {
      std::string ext = e.path().extension().string();
      std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
      if (e.is_regular_file() && std::find(exts.begin(), exts.end(), ext) != exts.end()) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
  } else if (fs::exists(p)) {
    files.push_back(p);
  } else {
    throw IoError("no such file or directory: " + p.string());
  }
  if (files.empty()) throw InputError("no images found in " + p.string());
  return files;
}

void set_workers(const CLI::Option* opt, int workers) {
  if (opt->count() == 0) return;
  if (workers < 1) throw ConfigError("--workers must be at least 1");
  omp_set_num_threads(workers);
}

ModelConfig resolve_model(json& cfg) {
  ModelConfig m;
  if (cfg.contains("model") && cfg["model"].is_object()) {
    m = model_config_from_json(cfg["model"]);
  } else {
    const std::string preset = cfg.at("model_preset").get<std::string>();
    if (preset == "full") {
      m = ModelConfig::full();
    } else if (preset == "toy") {
      m = ModelConfig::toy(cfg.at("toy_base").get<std::size_t>(), cfg.at("toy_size").get<std::size_t>());
    } else {
      throw ConfigError("unknown model preset '" + preset + "' (expected full or toy)");
    }
  }
  m.validate();
  cfg["model"] = to_json(m);
  return m;
}

std::vector<PairedSample> training_samples(const std::vector<SourcePair>& pairs, const std::string& cache,
                                           const SampleCacheKey& key, std::ostream& out) {
  if (!cache.empty()) {
    if (auto cached = load_sample_cache(cache, key)) {
      out << "loaded " << cached->size() << " samples from " << cache << '\n';
      return std::move(*cached);
    }
  }
  auto samples = build_training_set(pairs, key.crops_per_pair, key.size, key.seed);
  if (!cache.empty()) {
    save_sample_cache(cache, key, samples);
    out << "wrote sample cache " << cache << '\n';
  }
  return samples;
}

// --- subcommands -----------------------------------------------------------

struct SynthOptions {
  std::string out;
  std::size_t count = 17, height = 576, width = 720, eval_count = 0;
  std::uint64_t seed = 0;
};

void run_synth(const SynthOptions& o, RunRecord& rec, std::ostream& out) {
  write_synthetic_dataset(o.out, o.count, o.height, o.width, o.seed, o.eval_count);
  rec.config = {{"out", o.out},     {"count", o.count}, {"height", o.height},
                {"width", o.width}, {"seed", o.seed},   {"eval_count", o.eval_count}};
  rec.seed = o.seed;
  rec.dataset_hash = manifest_hash(o.out);
  rec.write(fs::path(o.out) / "run_manifest.json");
  out << "wrote " << o.count << " synthetic pairs (" << o.height << "x" << o.width << ") to " << o.out << '\n';
}

struct PrepareOptions {
  std::string data_root, manifest, split = "train", out;
  std::size_t crops = 50, size = 512;
  std::uint64_t seed = 0;
};

void run_prepare(const PrepareOptions& o, RunRecord& rec, std::ostream& out) {
  const auto pairs = load_pairs(o.data_root, split_filter(o.split), o.manifest);
  if (pairs.empty()) throw InputError("no pairs selected from " + o.data_root);
  const SampleCacheKey key{manifest_hash(o.data_root, o.manifest), o.seed, o.crops, o.size};
  fs::remove(o.out);
  const auto samples = training_samples(pairs, o.out, key, out);
  rec.config = {{"data_root", o.data_root}, {"manifest", o.manifest}, {"split", o.split},
                {"crops", o.crops},         {"size", o.size},         {"out", o.out}};
  rec.seed = o.seed;
  rec.dataset_hash = key.manifest_hash;
  rec.write(o.out + ".run.json");
  out << pairs.size() << " pairs x " << o.crops << " crops = " << samples.size() << " samples\n";
}

struct TrainOptions {
  std::string config, data_root, manifest, split = "train", cache, out, resume, model = "full";
  std::size_t toy_base = 4, toy_size = 64, crops = 50, interval = 0, epochs = 100, batch = 4, d_steps = 2;
  double lambda = 10.0, lr = 2e-4;
  std::uint64_t seed = 0;
  bool joint_tail = false, quiet = false;
  int workers = 1;
  CLI::App* app = nullptr;
};

json train_defaults() {
  return {{"data_root", ""},
          {"manifest", ""},
          {"split", "train"},
          {"cache", ""},
          {"model_preset", "full"},
          {"toy_base", 4},
          {"toy_size", 64},
          {"crops_per_pair", 50},
          {"checkpoint_interval", 0},
          {"schedule", to_json(TrainingSchedule{})},
          {"objective", to_json(ObjectiveConfig{})}};
}

void run_train(const TrainOptions& o, RunRecord& rec, std::ostream& out) {
  const CLI::App& a = *o.app;
  json cfg = train_defaults();
  cfg.merge_patch(load_config_file(o.config));
  overlay(cfg, a.get_option("--data-root"), "/data_root", o.data_root);
  overlay(cfg, a.get_option("--manifest"), "/manifest", o.manifest);
  overlay(cfg, a.get_option("--split"), "/split", o.split);
  overlay(cfg, a.get_option("--cache"), "/cache", o.cache);
  overlay(cfg, a.get_option("--crops-per-pair"), "/crops_per_pair", o.crops);
  overlay(cfg, a.get_option("--checkpoint-interval"), "/checkpoint_interval", o.interval);
  overlay(cfg, a.get_option("--epochs"), "/schedule/epochs", o.epochs);
  overlay(cfg, a.get_option("--batch-size"), "/schedule/batch_size", o.batch);
  overlay(cfg, a.get_option("--d-steps"), "/schedule/d_steps_per_cycle", o.d_steps);
  overlay(cfg, a.get_option("--lr"), "/schedule/learning_rate", o.lr);
  overlay(cfg, a.get_option("--seed"), "/schedule/seed", o.seed);
  overlay(cfg, a.get_option("--lambda"), "/objective/lambda", o.lambda);
  if (o.joint_tail) cfg["schedule"]["joint_every_cycle"] = false;
  if (a.get_option("--model")->count() + a.get_option("--toy-base")->count() + a.get_option("--toy-size")->count()) {
    cfg.erase("model");
    overlay(cfg, a.get_option("--model"), "/model_preset", o.model);
    overlay(cfg, a.get_option("--toy-base"), "/toy_base", o.toy_base);
    overlay(cfg, a.get_option("--toy-size"), "/toy_size", o.toy_size);
  }

  const std::string root = cfg.at("data_root").get<std::string>();
  if (root.empty()) throw ConfigError("train needs --data-root (or data_root in --config)");
  std::optional<TrainingState> state;
  if (!o.resume.empty()) {
    state.emplace(TrainingState::load(o.resume));
    if (a.get_option("--epochs")->count()) state->schedule.epochs = o.epochs;
    cfg["model"] = to_json(state->model.config());
    cfg["schedule"] = to_json(state->schedule);
    cfg["objective"] = to_json(state->objective);
    cfg["resume"] = o.resume;
    out << "resuming from cycle " << state->cycle << '\n';
  } else {
    const ModelConfig model = resolve_model(cfg);
    state.emplace(model, schedule_from_json(cfg.at("schedule")), objective_from_json(cfg.at("objective")));
  }

  const std::string manifest = cfg.at("manifest").get<std::string>();
  const auto pairs = load_pairs(root, split_filter(cfg.at("split").get<std::string>()), manifest);
  if (pairs.empty()) throw InputError("no training pairs selected from " + root);
  const SampleCacheKey key{manifest_hash(root, manifest), state->schedule.seed,
                           cfg.at("crops_per_pair").get<std::size_t>(), state->model.config().image_size()};
  const auto samples = training_samples(pairs, cfg.at("cache").get<std::string>(), key, out);
  out << samples.size() << " training samples of " << key.size << "x" << key.size << '\n';

  FitOptions fo;
  fo.output_dir = o.out;
  fo.checkpoint_interval = cfg.at("checkpoint_interval").get<std::size_t>();
  if (!o.quiet) {
    fo.on_cycle = [&out](const CycleLosses& l) {
      out << "cycle " << l.cycle << " d_fine " << l.d_fine_loss << " d_coarse " << l.d_coarse_loss << " l2_fine " << l.l2_fine
          << " total " << l.total << '\n';
    };
  }
  const FitResult result = fit(*state, samples, fo);

  rec.config = cfg;
  rec.seed = state->schedule.seed;
  rec.dataset_hash = key.manifest_hash;
  rec.write(fs::path(o.out) / "run_manifest.json");
  out << "trained to cycle " << state->cycle << "; final checkpoint " << result.checkpoints.back().string() << '\n';
}

struct InferOptions {
  std::string checkpoint, input, out, fit = "crop";
  bool coarse = false;
  int workers = 1;
};

void run_infer(const InferOptions& o, RunRecord& rec, std::ostream& out) {
  TrainingState state = TrainingState::load(o.checkpoint);
  GanModel& model = state.model;
  const std::size_t s = model.config().image_size();
  const auto inputs = image_inputs(o.input);
  fs::create_directories(o.out);
  for (const fs::path& p : inputs) {
    const Image8 img = read_image(p, 3);
    Tensor crop;
    if (o.fit == "crop") {
      if (img.height < s || img.width < s) {
        throw InputError(p.string() + " is smaller than the model input " + std::to_string(s));
      }
      crop = normalize_crop(img, {(img.height - s) / 2, (img.width - s) / 2}, s);
    } else {
      crop = lanczos_resize(normalize(img), s, s);
    }
    const Translation t = translate(model, crop);
    Tensor fine = t.fine_angiogram;
    if (o.fit == "resize") fine = lanczos_resize(fine, img.height, img.width);
    const fs::path dst = fs::path(o.out) / (p.stem().string() + ".png");
    write_image(dst, denormalize(fine));
    if (o.coarse) write_image(fs::path(o.out) / (p.stem().string() + "_coarse.png"), denormalize(t.coarse_angiogram));
    out << p.string() << " -> " << dst.string() << '\n';
  }
  rec.config = {{"checkpoint", o.checkpoint}, {"checkpoint_hash", file_hash(o.checkpoint)},
                {"input", o.input},           {"fit", o.fit},
                {"coarse", o.coarse}};
  rec.seed = state.schedule.seed;
  rec.write(fs::path(o.out) / "run_manifest.json");
}

struct PerturbOptions {
  std::string input, out, kind;
  double amount = 0.0, radius_fraction = 1.0;
  std::uint64_t seed = 0;
  CLI::App* app = nullptr;
};

void run_perturb(const PerturbOptions& o, RunRecord& rec, std::ostream& out) {
  PerturbationSpec base = PerturbationSpec::defaults(parse_perturbation(o.kind), o.seed);
  if (o.app->get_option("--amount")->count()) base.amount = o.amount;
  base.radius_fraction = o.radius_fraction;
  base.validate();
  const auto inputs = image_inputs(o.input);
  fs::create_directories(o.out);
  json files = json::array();
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    PerturbationSpec spec = base;
    spec.seed = base.seed + i;
    const Image8 img = read_image(inputs[i], 3);
    const std::string name = inputs[i].stem().string() + ".png";
    write_image(fs::path(o.out) / name, denormalize(apply_perturbation(normalize(img), spec)));
    files.push_back({{"output", name}, {"source", inputs[i].string()}, {"spec", to_json(spec)}});
  }
  write_json(fs::path(o.out) / "perturbations.json", {{"files", files}});
  rec.config = {{"input", o.input}, {"out", o.out}, {"spec", to_json(base)}};
  rec.seed = o.seed;
  rec.write(fs::path(o.out) / "run_manifest.json");
  out << "perturbed " << inputs.size() << " image(s) with " << perturbation_name(base.kind) << " amount "
      << base.amount << '\n';
}

struct EvaluateOptions {
  std::string config, checkpoint, data_root, manifest, split = "eval", embedder = "random-projection", out;
  std::uint64_t seed = 0;
  int workers = 1;
  CLI::App* app = nullptr;
};

void run_evaluate(const EvaluateOptions& o, RunRecord& rec, std::ostream& out) {
  const CLI::App& a = *o.app;
  json conditions = json::array();
  for (const auto& spec : default_conditions(0)) conditions.push_back(to_json(spec));
  json cfg = {{"data_root", ""},           {"manifest", ""}, {"split", "eval"},
              {"embedder", o.embedder},    {"seed", 0},      {"conditions", conditions}};
  cfg.merge_patch(load_config_file(o.config));
  overlay(cfg, a.get_option("--data-root"), "/data_root", o.data_root);
  overlay(cfg, a.get_option("--manifest"), "/manifest", o.manifest);
  overlay(cfg, a.get_option("--split"), "/split", o.split);
  overlay(cfg, a.get_option("--embedder"), "/embedder", o.embedder);
  overlay(cfg, a.get_option("--seed"), "/seed", o.seed);
  cfg["checkpoint"] = o.checkpoint;
  cfg["checkpoint_hash"] = file_hash(o.checkpoint);

  const std::uint64_t seed = cfg.at("seed").get<std::uint64_t>();
  std::vector<PerturbationSpec> specs;
  for (const auto& c : cfg.at("conditions")) {
    PerturbationSpec spec = perturbation_from_json(c);
    if (!c.contains("seed")) spec.seed = seed;
    specs.push_back(spec);
  }
  const std::string root = cfg.at("data_root").get<std::string>();
  if (root.empty()) throw ConfigError("evaluate needs --data-root (or data_root in --config)");
  const std::string manifest = cfg.at("manifest").get<std::string>();

  TrainingState state = TrainingState::load(o.checkpoint);
  const auto pairs = load_pairs(root, split_filter(cfg.at("split").get<std::string>()), manifest);
  if (pairs.empty()) throw InputError("no evaluation pairs selected from " + root);
  std::vector<PairedSample> crops;
  for (const auto& p : pairs) {
    const auto q = eval_quadrant_crops(p, state.model.config().image_size());
    crops.insert(crops.end(), q.begin(), q.end());
  }
  const auto embedder = make_embedder(cfg.at("embedder").get<std::string>(), seed);
  const EvaluationReport report = evaluate_conditions(state.model, crops, specs, *embedder);

  fs::create_directories(o.out);
  std::ofstream(fs::path(o.out) / "report.csv") << report.to_csv();
  write_json(fs::path(o.out) / "report.json", report.to_json());
  rec.config = cfg;
  rec.seed = seed;
  rec.dataset_hash = manifest_hash(root, manifest);
  rec.write(fs::path(o.out) / "run_manifest.json");

  out << "Frechet distance, " << report.embedder << " embedder, " << report.real_count << " real crops\n";
  out << std::left << std::setw(10) << "condition" << std::right << std::setw(16) << "distance" << std::setw(16)
      << "delta" << '\n';
  out << std::fixed << std::setprecision(4);
  for (const auto& c : report.conditions) {
    out << std::left << std::setw(10) << condition_label(c.spec.kind) << std::right;
    if (c.distance) {
      out << std::setw(16) << *c.distance << std::setw(16) << std::showpos << c.delta.value_or(0.0) << std::noshowpos
          << '\n';
    } else {
      out << "  failed: " << c.error << '\n';
    }
  }
  out.unsetf(std::ios::fixed);
}

struct StudyMakeOptions {
  std::string real, fake, checkpoint, data_root, manifest, split = "eval", out, key;
  std::size_t n = 40;
  std::uint64_t seed = 0;
};

std::vector<Image8> read_gray_images(const std::string& dir) {
  std::vector<Image8> out;
  for (const auto& p : image_inputs(dir)) out.push_back(read_image(p, 1));
  return out;
}

void run_study_make(const StudyMakeOptions& o, RunRecord& rec, std::ostream& out) {
  std::vector<Image8> real, fake;
  if (!o.real.empty() || !o.fake.empty()) {
    if (o.real.empty() || o.fake.empty()) throw ConfigError("--real and --fake must be given together");
    real = read_gray_images(o.real);
    fake = read_gray_images(o.fake);
  } else {
    if (o.checkpoint.empty() || o.data_root.empty()) {
      throw ConfigError("study make needs --real/--fake directories or --checkpoint with --data-root");
    }
    TrainingState state = TrainingState::load(o.checkpoint);
    const std::size_t s = state.model.config().image_size();
    for (const auto& p : load_pairs(o.data_root, split_filter(o.split), o.manifest)) {
      for (const auto& c : eval_quadrant_crops(p, s)) {
        real.push_back(denormalize(c.angio_crop()));
        fake.push_back(denormalize(infer(state.model, c.fundus_crop())));
      }
    }
    rec.dataset_hash = manifest_hash(o.data_root, o.manifest);
  }
  const StudyKit kit = build_study_kit(real, fake, o.n, o.seed);
  const fs::path key = o.key.empty() ? fs::path(o.out) / "key.json" : fs::path(o.key);
  write_study_kit(kit, fs::path(o.out) / "items", key);
  rec.config = {{"real", o.real},   {"fake", o.fake},   {"checkpoint", o.checkpoint}, {"data_root", o.data_root},
                {"manifest", o.manifest}, {"split", o.split}, {"n", o.n},            {"key", key.string()}};
  rec.seed = o.seed;
  rec.write(fs::path(o.out) / "run_manifest.json");
  out << o.n / 2 << " real + " << o.n / 2 << " fake items written to " << (fs::path(o.out) / "items").string()
      << "; key " << key.string() << '\n';
}

struct StudyScoreOptions {
  std::string key, responses, out;
};

void run_study_score(const StudyScoreOptions& o, std::ostream& out) {
  const StudyReport r = score_study(read_study_responses(o.responses), read_study_key(o.key));
  if (!o.out.empty()) write_json(o.out, r.to_json());
  const auto pct = [](double v) {
    std::ostringstream os;
    os << std::setprecision(6) << v << "%";
    return os.str();
  };
  out << "items         " << r.fake_items << " fake, " << r.real_items << " real\n"
      << "fake correct  " << pct(r.fake_correct_rate) << '\n'
      << "real correct  " << pct(r.real_correct_rate) << '\n'
      << "missed        " << pct(r.missed) << " (" << std::round(r.missed) << "%)\n"
      << "found         " << pct(r.found) << " (" << std::round(r.found) << "%)\n"
      << "confusion     " << pct(r.confusion) << '\n';
}

struct InspectOptions {
  std::string block, model = "full", checkpoint;
  std::size_t channels = 32, kernel = 3, toy_base = 4, toy_size = 64;
};

std::string shape3(std::size_t s, std::size_t c) {
  return std::to_string(s) + "x" + std::to_string(s) + "x" + std::to_string(c);
}

void run_inspect(const InspectOptions& o, std::ostream& out) {
  const auto block_line = [&](ResidualVariant v) {
    ResidualBlockConfig bc;
    bc.channels = o.channels;
    bc.kernel = o.kernel;
    bc.variant = v;
    const LayerParameterCount n = count_parameters(bc);
    out << std::left << std::setw(10) << (v == ResidualVariant::proposed ? "proposed" : "original") << std::right
        << std::setw(10) << group_thousands(n.total) << "  (convolution " << group_thousands(n.convolution_weights)
        << ", normalization " << group_thousands(n.normalization_params) << ")\n";
  };
  if (!o.block.empty()) {
    if (o.block != "proposed" && o.block != "original") {
      throw ConfigError("--block must be proposed or original, got '" + o.block + "'");
    }
    out << "residual block, C=" << o.channels << ", K=" << o.kernel << '\n';
    block_line(o.block == "proposed" ? ResidualVariant::proposed : ResidualVariant::original);
    return;
  }

  std::optional<GanModel> model;
  if (!o.checkpoint.empty()) {
    model.emplace(TrainingState::load(o.checkpoint).model.config());
  } else if (o.model == "full") {
    model.emplace(ModelConfig::full());
  } else if (o.model == "toy") {
    model.emplace(ModelConfig::toy(o.toy_base, o.toy_size));
  } else {
    throw ConfigError("--model must be full or toy, got '" + o.model + "'");
  }
  const ModelConfig& mc = model->config();
  out << "residual blocks, C=" << o.channels << ", K=" << o.kernel << '\n';
  block_line(ResidualVariant::proposed);
  block_line(ResidualVariant::original);

  out << "\ngenerators\n";
  out << "  coarse  fundus " << shape3(mc.coarse.input_size, mc.coarse.input_channels) << " -> angiogram "
      << shape3(mc.coarse.input_size, mc.coarse.output_channels) << " + feature "
      << shape3(mc.coarse.input_size, mc.coarse.decoder_output_channels()) << ", "
      << group_thousands(model->parameter_count(NetworkId::g_coarse)) << " parameters\n";
  out << "  fine    fundus " << shape3(mc.fine.input_size, mc.fine.input_channels) << " + feature at "
      << shape3(mc.fine.handoff_size(), mc.fine.handoff_channels()) << " -> angiogram "
      << shape3(mc.fine.input_size, mc.fine.output_channels) << ", "
      << group_thousands(model->parameter_count(NetworkId::g_fine)) << " parameters\n";

  out << "\ndiscriminators\n";
  for (DiscriminatorId id : kAllDiscriminators) {
    const Discriminator& d = model->discriminators[id];
    const std::size_t p = d.config().patch_output_size();
    out << "  " << std::left << std::setw(10) << discriminator_name(id) << std::right << " level "
        << pyramid_level(id) << "  input " << d.config().input_size << "  patch map " << p << "x" << p
        << "  receptive field " << receptive_field_in_original_pixels(model->discriminators, id) << " px, "
        << group_thousands(model->parameter_count(network_of(id))) << " parameters\n";
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Fundus-to-angiogram translation: data preparation, training, inference and evaluation", "angiogan"};
  app.require_subcommand(1);
  app.set_version_flag("--version", ANGIOGAN_VERSION);

  SynthOptions synth;
  auto* c_synth = app.add_subcommand("synth", "Write a synthetic paired dataset (PNG images + manifest.json)");
  c_synth->add_option("--out", synth.out, "Dataset root to create")->required();
  c_synth->add_option("--count", synth.count, "Number of pairs")->capture_default_str();
  c_synth->add_option("--height", synth.height, "Image height")->capture_default_str();
  c_synth->add_option("--width", synth.width, "Image width")->capture_default_str();
  c_synth->add_option("--eval-count", synth.eval_count, "Trailing pairs marked split \"eval\"")->capture_default_str();
  c_synth->add_option("--seed", synth.seed, "Generator seed")->capture_default_str();

  PrepareOptions prep;
  auto* c_prep = app.add_subcommand("prepare", "Ingest a dataset and write the random-crop sample cache");
  c_prep->add_option("--data-root", prep.data_root, "Dataset root with fundus/, angio/ and manifest.json")->required();
  c_prep->add_option("--manifest", prep.manifest, "Manifest file (default <data-root>/manifest.json)");
  c_prep->add_option("--split", prep.split, "Split to use, or \"all\"")->capture_default_str();
  c_prep->add_option("--crops", prep.crops, "Random crops per pair")->capture_default_str();
  c_prep->add_option("--size", prep.size, "Crop side in pixels")->capture_default_str();
  c_prep->add_option("--seed", prep.seed, "Crop placement seed")->capture_default_str();
  c_prep->add_option("--out", prep.out, "Cache file to write")->required();
  int prep_workers = 1;
  auto* prep_w = c_prep->add_option("--workers", prep_workers, "Thread cap");

  TrainOptions train;
  auto* c_train = app.add_subcommand("train", "Train the coarse/fine generators and the four discriminators");
  train.app = c_train;
  c_train->add_option("--config", train.config, "JSON config (or a run_manifest.json); flags override it");
  c_train->add_option("--data-root", train.data_root, "Dataset root");
  c_train->add_option("--manifest", train.manifest, "Manifest file (default <data-root>/manifest.json)");
  c_train->add_option("--split", train.split, "Split to train on, or \"all\"")->capture_default_str();
  c_train->add_option("--cache", train.cache, "Sample cache to reuse or create");
  c_train->add_option("--out", train.out, "Output directory for checkpoints and train_log.csv")->required();
  c_train->add_option("--resume", train.resume, "Checkpoint to continue from");
  c_train->add_option("--model", train.model, "Model preset: full or toy")->capture_default_str();
  c_train->add_option("--toy-base", train.toy_base, "Toy preset fine width")->capture_default_str();
  c_train->add_option("--toy-size", train.toy_size, "Toy preset fine input size")->capture_default_str();
  c_train->add_option("--crops-per-pair", train.crops, "Random crops per pair")->capture_default_str();
  c_train->add_option("--epochs", train.epochs, "Epochs")->capture_default_str();
  c_train->add_option("--batch-size", train.batch, "Batch size")->capture_default_str();
  c_train->add_option("--d-steps", train.d_steps, "Discriminator updates per cycle")->capture_default_str();
  c_train->add_option("--lr", train.lr, "Adam learning rate")->capture_default_str();
  c_train->add_option("--lambda", train.lambda, "Weight of the L2 reconstruction term")->capture_default_str();
  c_train->add_option("--seed", train.seed, "Seed for initialization, crops and batches")->capture_default_str();
  c_train->add_option("--checkpoint-interval", train.interval, "Checkpoint every N cycles (0: final only)")
      ->capture_default_str();
  c_train->add_flag("--joint-tail", train.joint_tail, "Run only joint steps in the last tenth of the epochs");
  c_train->add_flag("--quiet", train.quiet, "Do not print per-cycle losses");
  auto* train_w = c_train->add_option("--workers", train.workers, "Thread cap");

  InferOptions inf;
  auto* c_infer = app.add_subcommand("infer", "Translate fundus images with a trained checkpoint");
  c_infer->add_option("--checkpoint", inf.checkpoint, "Checkpoint file")->required();
  c_infer->add_option("--input", inf.input, "Fundus image or directory of images")->required();
  c_infer->add_option("--out", inf.out, "Output directory")->required();
  c_infer->add_option("--fit", inf.fit, "crop: centred model-size window; resize: Lanczos to model size and back")
      ->check(CLI::IsMember({"crop", "resize"}))
      ->capture_default_str();
  c_infer->add_flag("--coarse", inf.coarse, "Also write the half-resolution coarse angiogram");
  auto* infer_w = c_infer->add_option("--workers", inf.workers, "Thread cap");

  PerturbOptions pert;
  auto* c_pert = app.add_subcommand("perturb", "Apply a blur/sharpen/noise/whirl/pinch perturbation to fundus images");
  pert.app = c_pert;
  c_pert->add_option("--input", pert.input, "Image or directory of images")->required();
  c_pert->add_option("--out", pert.out, "Output directory (images + perturbations.json)")->required();
  c_pert->add_option("--kind", pert.kind, "none, noise, blur, sharpen, whirl or pinch")->required();
  c_pert->add_option("--amount", pert.amount, "Strength (default: the kind's default)");
  c_pert->add_option("--radius-fraction", pert.radius_fraction, "Disk radius as a fraction of half the short side")
      ->capture_default_str();
  c_pert->add_option("--seed", pert.seed, "Noise seed; image i uses seed + i")->capture_default_str();

  EvaluateOptions ev;
  auto* c_eval = app.add_subcommand("evaluate", "Frechet distance of generated vs real angiograms per perturbation");
  ev.app = c_eval;
  c_eval->add_option("--config", ev.config, "JSON config with optional \"conditions\" list; flags override it");
  c_eval->add_option("--checkpoint", ev.checkpoint, "Checkpoint file")->required();
  c_eval->add_option("--data-root", ev.data_root, "Dataset root");
  c_eval->add_option("--manifest", ev.manifest, "Manifest file (default <data-root>/manifest.json)");
  c_eval->add_option("--split", ev.split, "Split to evaluate, or \"all\"")->capture_default_str();
  c_eval->add_option("--embedder", ev.embedder, "random-projection or mean-pixel")->capture_default_str();
  c_eval->add_option("--seed", ev.seed, "Embedder and noise seed")->capture_default_str();
  c_eval->add_option("--out", ev.out, "Output directory for report.csv and report.json")->required();
  auto* eval_w = c_eval->add_option("--workers", ev.workers, "Thread cap");

  auto* c_study = app.add_subcommand("study", "Blinded real/fake study kit");
  c_study->require_subcommand(1);
  StudyMakeOptions sm;
  auto* c_make = c_study->add_subcommand("make", "Build a balanced, shuffled kit of real and generated angiograms");
  c_make->add_option("--real", sm.real, "Directory of real angiograms");
  c_make->add_option("--fake", sm.fake, "Directory of generated angiograms");
  c_make->add_option("--checkpoint", sm.checkpoint, "Generate the kit from eval crops with this checkpoint");
  c_make->add_option("--data-root", sm.data_root, "Dataset root used with --checkpoint");
  c_make->add_option("--manifest", sm.manifest, "Manifest file (default <data-root>/manifest.json)");
  c_make->add_option("--split", sm.split, "Split used with --checkpoint")->capture_default_str();
  c_make->add_option("--n", sm.n, "Kit size, half real and half fake")->capture_default_str();
  c_make->add_option("--seed", sm.seed, "Selection and ordering seed")->capture_default_str();
  c_make->add_option("--out", sm.out, "Kit directory; items go to <out>/items")->required();
  c_make->add_option("--key", sm.key, "Key file (default <out>/key.json)");
  StudyScoreOptions ss;
  auto* c_score = c_study->add_subcommand("score", "Score rater responses against the key");
  c_score->add_option("--key", ss.key, "key.json written by study make")->required();
  c_score->add_option("--responses", ss.responses, "CSV of item_id,label")->required();
  c_score->add_option("--out", ss.out, "Optional JSON report");

  InspectOptions ins;
  auto* c_ins = app.add_subcommand("inspect", "Parameter counts, shapes and patch sizes");
  c_ins->add_option("--block", ins.block, "Report one residual block: proposed or original");
  c_ins->add_option("--channels", ins.channels, "Residual block channels")->capture_default_str();
  c_ins->add_option("--kernel", ins.kernel, "Residual block kernel")->capture_default_str();
  c_ins->add_option("--model", ins.model, "Model preset: full or toy")->capture_default_str();
  c_ins->add_option("--toy-base", ins.toy_base, "Toy preset fine width")->capture_default_str();
  c_ins->add_option("--toy-size", ins.toy_size, "Toy preset fine input size")->capture_default_str();
  c_ins->add_option("--checkpoint", ins.checkpoint, "Inspect the model stored in a checkpoint");

  std::vector<std::string> rev(args.begin() + (args.empty() ? 0 : 1), args.end());
  std::reverse(rev.begin(), rev.end());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  RunRecord rec;
  rec.args = args;
  try {
    if (c_synth->parsed()) {
      rec.command = "synth";
      run_synth(synth, rec, out);
    } else if (c_prep->parsed()) {
      rec.command = "prepare";
      set_workers(prep_w, prep_workers);
      run_prepare(prep, rec, out);
    } else if (c_train->parsed()) {
      rec.command = "train";
      set_workers(train_w, train.workers);
      run_train(train, rec, out);
    } else if (c_infer->parsed()) {
      rec.command = "infer";
      set_workers(infer_w, inf.workers);
      run_infer(inf, rec, out);
    } else if (c_pert->parsed()) {
      rec.command = "perturb";
      run_perturb(pert, rec, out);
    } else if (c_eval->parsed()) {
      rec.command = "evaluate";
      set_workers(eval_w, ev.workers);
      run_evaluate(ev, rec, out);
    } else if (c_make->parsed()) {
      rec.command = "study make";
      run_study_make(sm, rec, out);
    } else if (c_score->parsed()) {
      run_study_score(ss, out);
    } else if (c_ins->parsed()) {
      run_inspect(ins, out);
    }
  } catch (const json::exception& e) {
    err << "error: malformed configuration: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace angiogan::cli
