#include "angiogan/trainer.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "angiogan/errors.hpp"
#include "angiogan/resample.hpp"

namespace angiogan {
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Configuration

void TrainingSchedule::validate() const {
  if (d_steps_per_cycle == 0) throw ConfigError("d_steps_per_cycle must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in (0, 1)");
  }
}

void TrainingSchedule::validate(std::size_t dataset_size) const {
  validate();
  if (dataset_size == 0) throw InputError("training set is empty");
  if (batch_size > dataset_size) {
    throw ConfigError("batch_size " + std::to_string(batch_size) + " exceeds the " + std::to_string(dataset_size) +
                      " training samples");
  }
}

std::size_t TrainingSchedule::cycles_per_epoch(std::size_t dataset_size) const {
  return std::max<std::size_t>(1, dataset_size / batch_size);
}

std::size_t TrainingSchedule::joint_only_from_epoch() const {
  if (joint_every_cycle) return epochs;
  return epochs - (epochs + 9) / 10;
}

nlohmann::json to_json(const TrainingSchedule& s) {
  return {{"d_steps_per_cycle", s.d_steps_per_cycle},
          {"batch_size", s.batch_size},
          {"epochs", s.epochs},
          {"learning_rate", s.learning_rate},
          {"beta1", s.beta1},
          {"beta2", s.beta2},
          {"seed", s.seed},
          {"joint_every_cycle", s.joint_every_cycle}};
}

TrainingSchedule schedule_from_json(const nlohmann::json& j) {
  try {
    TrainingSchedule s;
    s.d_steps_per_cycle = j.value("d_steps_per_cycle", s.d_steps_per_cycle);
    s.batch_size = j.value("batch_size", s.batch_size);
    s.epochs = j.value("epochs", s.epochs);
    s.learning_rate = j.value("learning_rate", s.learning_rate);
    s.beta1 = j.value("beta1", s.beta1);
    s.beta2 = j.value("beta2", s.beta2);
    s.seed = j.value("seed", s.seed);
    s.joint_every_cycle = j.value("joint_every_cycle", s.joint_every_cycle);
    s.validate();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed schedule: ") + e.what());
  }
}

nlohmann::json to_json(const ObjectiveConfig& c) {
  return {{"lambda", c.lambda_weight},
          {"real_target", c.real_target},
          {"fake_target_d", c.fake_target_d},
          {"fake_target_g", c.fake_target_g}};
}

ObjectiveConfig objective_from_json(const nlohmann::json& j) {
  try {
    ObjectiveConfig c;
    c.lambda_weight = j.value("lambda", c.lambda_weight);
    c.real_target = j.value("real_target", c.real_target);
    c.fake_target_d = j.value("fake_target_d", c.fake_target_d);
    c.fake_target_g = j.value("fake_target_g", c.fake_target_g);
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed objective: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Batches

Batch make_batch(std::span<const PairedSample> samples, std::span<const std::size_t> indices) {
  if (indices.empty()) throw InputError("empty batch");
  std::vector<Tensor> fundus;
  std::vector<Tensor> angio;
  fundus.reserve(indices.size());
  angio.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= samples.size()) throw InputError("batch index out of range");
    fundus.push_back(samples[i].fundus_crop());
    angio.push_back(samples[i].angio_crop());
  }
  return {stack_batch(fundus), stack_batch(angio)};
}

namespace {

Batch draw_batch(std::mt19937_64& rng, std::span<const PairedSample> samples, std::size_t batch_size) {
  // Partial Fisher-Yates: distinct indices within one batch.
  std::vector<std::size_t> order(samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t i = 0; i < batch_size; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, order.size() - 1);
    std::swap(order[i], order[pick(rng)]);
  }
  return make_batch(samples, std::span<const std::size_t>(order.data(), batch_size));
}

}  // namespace

CycleBatches draw_cycle_batches(TrainingState& state, std::span<const PairedSample> samples) {
  state.schedule.validate(samples.size());
  const std::size_t b = state.schedule.batch_size;
  CycleBatches out;
  for (std::size_t i = 0; i < state.schedule.d_steps_per_cycle; ++i) out.discriminator.push_back(draw_batch(state.rng, samples, b));
  out.coarse = draw_batch(state.rng, samples, b);
  out.fine = draw_batch(state.rng, samples, b);
  out.joint = draw_batch(state.rng, samples, b);
  return out;
}

// ---------------------------------------------------------------------------
// State

TrainingState::TrainingState(const ModelConfig& model_config, const TrainingSchedule& schedule_,
                             const ObjectiveConfig& objective_)
    : model(model_config), schedule(schedule_), objective(objective_), rng(schedule_.seed) {
  schedule.validate();
  objective.validate();
  model.initialize(schedule.seed);
  for (NetworkId id : kAllNetworks) {
    Adam& opt = optimizer(id);
    opt = Adam(schedule.adam());
    opt.bind(model.parameters(id));
  }
}

namespace {

constexpr const char* kCheckpointFormat = "angiogan-checkpoint";

std::string parameter_key(NetworkId id, const Parameter& p) {
  const bool generator = id == NetworkId::g_coarse || id == NetworkId::g_fine;
  return std::string(generator ? "generators/" : "discriminators/") + p.name;
}

std::string moment_key(NetworkId id, char which, const Parameter& p) {
  return "optimizer/" + std::string(network_name(id)) + "/" + which + "/" + p.name;
}

void restore(Tensor& target, const Tensor& stored, const std::string& key) {
  if (stored.shape() != target.shape()) {
    throw LoadError("checkpoint array " + key + " has shape " + stored.shape().str() + ", expected " +
                    target.shape().str());
  }
  target = stored;
}

}  // namespace

Archive TrainingState::to_archive() {
  Archive a;
  std::ostringstream rng_state;
  rng_state << rng;
  a.meta = {{"format", kCheckpointFormat},
            {"model", to_json(model.config())},
            {"schedule", to_json(schedule)},
            {"objective", to_json(objective)},
            {"cycle", cycle},
            {"epoch", epoch},
            {"rng", rng_state.str()}};
  for (NetworkId id : kAllNetworks) {
    const ParameterList params = model.parameters(id);
    Adam& opt = optimizer(id);
    opt.bind(params);
    a.meta["optimizer_steps"][std::string(network_name(id))] = opt.steps();
    std::size_t slot = 0;
    for (const Parameter* p : params) {
      a.tensors[parameter_key(id, *p)] = p->value;
      if (!p->trainable) continue;
      a.tensors[moment_key(id, 'm', *p)] = opt.first_moments()[slot];
      a.tensors[moment_key(id, 'v', *p)] = opt.second_moments()[slot];
      ++slot;
    }
  }
  return a;
}

TrainingState TrainingState::from_archive(const Archive& a) {
  try {
    if (a.meta.value("format", "") != kCheckpointFormat) throw LoadError("archive is not a training checkpoint");
    TrainingState s(model_config_from_json(a.meta.at("model")), schedule_from_json(a.meta.at("schedule")),
                    objective_from_json(a.meta.at("objective")));
    s.cycle = a.meta.at("cycle").get<std::uint64_t>();
    s.epoch = a.meta.at("epoch").get<std::uint64_t>();
    std::istringstream rng_state(a.meta.at("rng").get<std::string>());
    rng_state >> s.rng;
    if (!rng_state) throw LoadError("checkpoint has a malformed random-stream state");
    for (NetworkId id : kAllNetworks) {
      const ParameterList params = s.model.parameters(id);
      Adam& opt = s.optimizer(id);
      opt.set_steps(a.meta.at("optimizer_steps").at(std::string(network_name(id))).get<std::uint64_t>());
      std::size_t slot = 0;
      for (Parameter* p : params) {
        const std::string key = parameter_key(id, *p);
        restore(p->value, a.tensor(key), key);
        if (!p->trainable) continue;
        const std::string mk = moment_key(id, 'm', *p);
        const std::string vk = moment_key(id, 'v', *p);
        restore(opt.first_moments()[slot], a.tensor(mk), mk);
        restore(opt.second_moments()[slot], a.tensor(vk), vk);
        ++slot;
      }
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("malformed checkpoint metadata: ") + e.what());
  } catch (const ConfigError& e) {
    throw LoadError(std::string("checkpoint configuration is invalid: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Steps

namespace {

// Generators only produce fakes: batch statistics, nothing recorded or updated.
constexpr Pass kGeneratorSampling{true, false, false};

struct Pyramid {
  std::array<Tensor, 3> fundus;
  std::array<Tensor, 3> angio;
};

Pyramid pyramid_of(const Batch& b) {
  if (b.size() == 0 || b.angiogram.shape().n != b.size()) throw InputError("empty or inconsistent batch");
  Pyramid p;
  p.fundus[0] = b.fundus;
  p.angio[0] = b.angiogram;
  for (std::size_t l = 1; l < 3; ++l) {
    p.fundus[l] = downsample2(p.fundus[l - 1]);
    p.angio[l] = downsample2(p.angio[l - 1]);
  }
  return p;
}

/// Generated angiograms at the level each discriminator sees.
struct Fakes {
  Tensor fine0;    // G_fine output
  Tensor fine1;    // its half-size version
  Tensor coarse1;  // G_coarse output
  Tensor coarse2;  // its half-size version

  const Tensor& for_discriminator(DiscriminatorId id) const {
    switch (id) {
      case DiscriminatorId::d1_fine:
        return fine0;
      case DiscriminatorId::d2_fine:
        return fine1;
      case DiscriminatorId::d1_coarse:
        return coarse1;
      case DiscriminatorId::d2_coarse:
        return coarse2;
    }
    return fine0;
  }
};

void check_finite(const TrainingState& s, double v, const char* what) {
  if (!std::isfinite(v)) throw DivergenceError(s.cycle, std::string(what) + " is not finite");
}

void zero_network_gradients(TrainingState& s, NetworkId id) { zero_gradients(s.model.parameters(id)); }

void step_network(TrainingState& s, NetworkId id) { s.optimizer(id).step(s.model.parameters(id)); }

/// One update of all four discriminators on real pairs and the given fakes.
DiscriminatorLosses update_discriminators(TrainingState& s, const Pyramid& p, const Fakes& fakes) {
  const ObjectiveConfig& cfg = s.objective;
  std::array<Tensor, 4> real_maps;
  std::array<Tensor, 4> fake_maps;
  for (DiscriminatorId id : kAllDiscriminators) {
    const auto i = static_cast<std::size_t>(id);
    const std::size_t level = pyramid_level(id);
    Discriminator& d = s.model.discriminators[id];
    zero_network_gradients(s, network_of(id));
    real_maps[i] = d.forward(p.fundus[level], p.angio[level], Pass::train());
    d.backward(lsgan_term_gradient(real_maps[i], cfg.real_target));
    fake_maps[i] = d.forward(p.fundus[level], fakes.for_discriminator(id), Pass::train());
    d.backward(lsgan_term_gradient(fake_maps[i], cfg.fake_target_d));
  }
  DiscriminatorLosses out;
  out.fine = lsgan_d_loss(std::span<const Tensor>(real_maps.data(), 2), std::span<const Tensor>(fake_maps.data(), 2), cfg);
  out.coarse =
      lsgan_d_loss(std::span<const Tensor>(real_maps.data() + 2, 2), std::span<const Tensor>(fake_maps.data() + 2, 2), cfg);
  check_finite(s, out.fine, "fine discriminator loss");
  check_finite(s, out.coarse, "coarse discriminator loss");
  for (DiscriminatorId id : kAllDiscriminators) step_network(s, network_of(id));
  return out;
}

/// Adversarial + lambda * L2 for one generator path against its paired
/// discriminators, which run with frozen statistics. Returns the losses and
/// the gradient with respect to the generated angiogram.
struct PathGradient {
  GeneratorLosses losses;
  Tensor d_output;
};

PathGradient generator_path(TrainingState& s, const Pyramid& p, const Tensor& fake, std::size_t level,
                            DiscriminatorId full, DiscriminatorId half) {
  const ObjectiveConfig& cfg = s.objective;
  const Tensor fake_half = downsample2(fake);
  Discriminator& d_full = s.model.discriminators[full];
  Discriminator& d_half = s.model.discriminators[half];
  const std::array<Tensor, 2> maps = {d_full.forward(p.fundus[level], fake, Pass::frozen()),
                                      d_half.forward(p.fundus[level + 1], fake_half, Pass::frozen())};
  PathGradient out;
  out.losses.adversarial = lsgan_g_loss(maps, cfg);
  out.losses.l2 = recon_l2(fake, p.angio[level]);

  out.d_output = d_full.backward(lsgan_term_gradient(maps[0], cfg.fake_target_g)).angiogram;
  out.d_output += downsample2_adjoint(d_half.backward(lsgan_term_gradient(maps[1], cfg.fake_target_g)).angiogram);
  Tensor l2_grad = recon_l2_gradient(fake, p.angio[level]);
  l2_grad *= cfg.lambda_weight;
  out.d_output += l2_grad;
  // The discriminators only relayed gradients; drop what they accumulated.
  zero_network_gradients(s, network_of(full));
  zero_network_gradients(s, network_of(half));
  return out;
}

}  // namespace

DiscriminatorLosses discriminator_step(TrainingState& state, const Batch& batch) {
  const Pyramid p = pyramid_of(batch);
  Fakes fakes;
  const CoarseOutput c = state.model.coarse.forward_coarse(p.fundus[1], kGeneratorSampling);
  fakes.coarse1 = c.angiogram;
  fakes.coarse2 = downsample2(c.angiogram);
  fakes.fine0 = state.model.fine.forward_fine(p.fundus[0], c.feature, kGeneratorSampling);
  fakes.fine1 = downsample2(fakes.fine0);
  return update_discriminators(state, p, fakes);
}

GeneratorLosses coarse_generator_step(TrainingState& state, const Batch& batch) {
  const Pyramid p = pyramid_of(batch);
  zero_network_gradients(state, NetworkId::g_coarse);
  const CoarseOutput c = state.model.coarse.forward_coarse(p.fundus[1], Pass::train());
  const PathGradient g =
      generator_path(state, p, c.angiogram, 1, DiscriminatorId::d1_coarse, DiscriminatorId::d2_coarse);
  check_finite(state, g.losses.adversarial + g.losses.l2, "coarse generator loss");
  state.model.coarse.backward_coarse(g.d_output, Tensor());
  step_network(state, NetworkId::g_coarse);
  return g.losses;
}

GeneratorLosses fine_generator_step(TrainingState& state, const Batch& batch) {
  const Pyramid p = pyramid_of(batch);
  zero_network_gradients(state, NetworkId::g_fine);
  const CoarseOutput c = state.model.coarse.forward_coarse(p.fundus[1], kGeneratorSampling);
  const Tensor fake = state.model.fine.forward_fine(p.fundus[0], c.feature, Pass::train());
  const PathGradient g = generator_path(state, p, fake, 0, DiscriminatorId::d1_fine, DiscriminatorId::d2_fine);
  check_finite(state, g.losses.adversarial + g.losses.l2, "fine generator loss");
  state.model.fine.backward_fine(g.d_output);
  step_network(state, NetworkId::g_fine);
  return g.losses;
}

JointLosses joint_step(TrainingState& state, const Batch& batch) {
  const Pyramid p = pyramid_of(batch);
  zero_network_gradients(state, NetworkId::g_coarse);
  zero_network_gradients(state, NetworkId::g_fine);
  const CoarseOutput c = state.model.coarse.forward_coarse(p.fundus[1], Pass::train());
  const Tensor fine = state.model.fine.forward_fine(p.fundus[0], c.feature, Pass::train());

  const PathGradient gf = generator_path(state, p, fine, 0, DiscriminatorId::d1_fine, DiscriminatorId::d2_fine);
  const PathGradient gc =
      generator_path(state, p, c.angiogram, 1, DiscriminatorId::d1_coarse, DiscriminatorId::d2_coarse);
  JointLosses out;
  out.fine = gf.losses;
  out.coarse = gc.losses;
  out.total = total_generator_objective(gf.losses.adversarial, gc.losses.adversarial, gf.losses.l2, gc.losses.l2,
                                        state.objective);
  check_finite(state, out.total, "joint generator objective");

  const Generator::FineGradients fg = state.model.fine.backward_fine(gf.d_output);
  state.model.coarse.backward_coarse(gc.d_output, fg.feature);

  Fakes fakes;
  fakes.fine0 = fine;
  fakes.fine1 = downsample2(fine);
  fakes.coarse1 = c.angiogram;
  fakes.coarse2 = downsample2(c.angiogram);
  out.discriminators = update_discriminators(state, p, fakes);

  step_network(state, NetworkId::g_coarse);
  step_network(state, NetworkId::g_fine);
  return out;
}

CycleLosses train_cycle(TrainingState& state, const CycleBatches& batches, bool joint_only) {
  CycleLosses row;
  if (joint_only) {
    const JointLosses j = joint_step(state, batches.joint);
    row.d_fine_loss = j.discriminators.fine;
    row.d_coarse_loss = j.discriminators.coarse;
    row.g_fine_adv = j.fine.adversarial;
    row.g_coarse_adv = j.coarse.adversarial;
    row.l2_fine = j.fine.l2;
    row.l2_coarse = j.coarse.l2;
  } else {
    if (batches.discriminator.empty()) throw InputError("a cycle needs at least one discriminator batch");
    for (const Batch& b : batches.discriminator) {
      const DiscriminatorLosses d = discriminator_step(state, b);
      row.d_fine_loss += d.fine;
      row.d_coarse_loss += d.coarse;
    }
    const auto steps = static_cast<double>(batches.discriminator.size());
    row.d_fine_loss /= steps;
    row.d_coarse_loss /= steps;
    const GeneratorLosses gc = coarse_generator_step(state, batches.coarse);
    const GeneratorLosses gf = fine_generator_step(state, batches.fine);
    row.g_coarse_adv = gc.adversarial;
    row.l2_coarse = gc.l2;
    row.g_fine_adv = gf.adversarial;
    row.l2_fine = gf.l2;
    if (state.schedule.joint_every_cycle) joint_step(state, batches.joint);
  }
  row.total = total_generator_objective(row.g_fine_adv, row.g_coarse_adv, row.l2_fine, row.l2_coarse, state.objective);
  ++state.cycle;
  row.cycle = state.cycle;
  return row;
}

// ---------------------------------------------------------------------------
// Driver

std::string csv_row(const CycleLosses& l) {
  std::ostringstream os;
  os << std::setprecision(17) << l.cycle << ',' << l.d_fine_loss << ',' << l.d_coarse_loss << ',' << l.g_fine_adv
     << ',' << l.g_coarse_adv << ',' << l.l2_fine << ',' << l.l2_coarse << ',' << l.total;
  return os.str();
}

fs::path checkpoint_path(const fs::path& dir, std::uint64_t cycle) {
  std::ostringstream name;
  name << "checkpoint_" << std::setw(8) << std::setfill('0') << cycle << ".agan";
  return dir / name.str();
}

namespace {

/// Opens the log for appending after `cycle`, dropping rows from any later,
/// abandoned continuation so a resumed log matches an uninterrupted one.
std::ofstream open_log(const fs::path& path, std::uint64_t cycle) {
  std::vector<std::string> kept;
  if (cycle > 0 && fs::exists(path)) {
    std::ifstream is(path);
    std::string line;
    std::getline(is, line);
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      if (std::stoull(line.substr(0, line.find(','))) <= cycle) kept.push_back(line);
    }
  }
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write training log " + path.string());
  os << kTrainingLogHeader << '\n';
  for (const auto& l : kept) os << l << '\n';
  return os;
}

}  // namespace

FitResult fit(TrainingState& state, std::span<const PairedSample> samples, const FitOptions& options) {
  state.schedule.validate(samples.size());
  std::error_code ec;
  fs::create_directories(options.output_dir, ec);
  if (ec) throw IoError("cannot create " + options.output_dir.string() + ": " + ec.message());

  const std::size_t per_epoch = state.schedule.cycles_per_epoch(samples.size());
  const std::uint64_t total = state.schedule.epochs * per_epoch;
  const std::size_t joint_from = state.schedule.joint_only_from_epoch();

  FitResult result;
  std::ofstream log = open_log(options.output_dir / "train_log.csv", state.cycle);
  const auto save = [&] {
    const fs::path path = checkpoint_path(options.output_dir, state.cycle);
    state.save(path);
    result.checkpoints.push_back(path);
  };

  bool saved_last = false;
  while (state.cycle < total) {
    state.epoch = state.cycle / per_epoch;
    const CycleBatches batches = draw_cycle_batches(state, samples);
    const CycleLosses row = train_cycle(state, batches, state.epoch >= joint_from);
    log << csv_row(row) << '\n';
    log.flush();
    if (!log) throw IoError("write failed for " + (options.output_dir / "train_log.csv").string());
    result.log.push_back(row);
    if (options.on_cycle) options.on_cycle(row);
    saved_last = false;
    if (options.checkpoint_interval > 0 && state.cycle % options.checkpoint_interval == 0) {
      state.epoch = state.cycle / per_epoch;
      save();
      saved_last = true;
    }
  }
  state.epoch = state.cycle / per_epoch;
  if (!saved_last) save();
  return result;
}

Tensor infer(GanModel& model, const Tensor& fundus_crop) {
  const std::size_t s = model.config().image_size();
  if (fundus_crop.shape() != Shape{fundus_crop.shape().n, 3, s, s}) {
    throw InputError("infer expects fundus crops [n, 3, " + std::to_string(s) + ", " + std::to_string(s) + "], got " +
                     fundus_crop.shape().str());
  }
  return translate(model, fundus_crop).fine_angiogram;
}

Tensor infer(const fs::path& checkpoint, const Tensor& fundus_crop) {
  TrainingState state = TrainingState::load(checkpoint);
  return infer(state.model, fundus_crop);
}

}  // namespace angiogan
