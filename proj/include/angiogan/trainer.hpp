#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "angiogan/archive.hpp"
#include "angiogan/dataset.hpp"
#include "angiogan/model.hpp"
#include "angiogan/objective.hpp"
#include "angiogan/optim.hpp"

namespace angiogan {

struct TrainingSchedule {
  std::size_t d_steps_per_cycle = 2;
  std::size_t batch_size = 4;
  std::size_t epochs = 100;
  double learning_rate = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  std::uint64_t seed = 0;
  /// false: the individual steps run for the first 90% of epochs and the
  /// joint step alone for the rest.
  bool joint_every_cycle = true;

  void validate() const;
  /// Also checks batch_size against the number of training samples.
  void validate(std::size_t dataset_size) const;
  AdamConfig adam() const { return {learning_rate, beta1, beta2, 1e-8}; }
  std::size_t cycles_per_epoch(std::size_t dataset_size) const;
  /// First epoch that runs the joint step alone (== epochs when never).
  std::size_t joint_only_from_epoch() const;
};

nlohmann::json to_json(const TrainingSchedule& s);
TrainingSchedule schedule_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ObjectiveConfig& c);
ObjectiveConfig objective_from_json(const nlohmann::json& j);

/// Stacked crops: fundus [b, 3, S, S], angiogram [b, 1, S, S].
struct Batch {
  Tensor fundus;
  Tensor angiogram;
  std::size_t size() const { return fundus.shape().n; }
};

Batch make_batch(std::span<const PairedSample> samples, std::span<const std::size_t> indices);

/// Everything that evolves during training. Adam moments are kept per
/// network, in that network's parameter order.
class TrainingState {
 public:
  TrainingState(const ModelConfig& model, const TrainingSchedule& schedule,
                const ObjectiveConfig& objective = {});

  GanModel model;
  TrainingSchedule schedule;
  ObjectiveConfig objective;
  std::array<Adam, 6> optimizers;
  std::uint64_t cycle = 0;
  std::uint64_t epoch = 0;
  std::mt19937_64 rng;

  Adam& optimizer(NetworkId id) { return optimizers[static_cast<std::size_t>(id)]; }

  Archive to_archive();
  static TrainingState from_archive(const Archive& archive);
  void save(const std::filesystem::path& path) { to_archive().save(path); }
  static TrainingState load(const std::filesystem::path& path) { return from_archive(Archive::load(path)); }
};

struct DiscriminatorLosses {
  double fine = 0.0;    // lsgan_d_loss over D1_fine, D2_fine
  double coarse = 0.0;  // lsgan_d_loss over D1_coarse, D2_coarse
};

struct GeneratorLosses {
  double adversarial = 0.0;
  double l2 = 0.0;
};

struct JointLosses {
  DiscriminatorLosses discriminators;
  GeneratorLosses fine;
  GeneratorLosses coarse;
  double total = 0.0;
};

/// One CSV row. D columns average the cycle's discriminator steps; generator
/// columns come from the individual G_coarse / G_fine steps, or from the
/// joint step when it runs alone.
struct CycleLosses {
  std::uint64_t cycle = 0;
  double d_fine_loss = 0.0;
  double d_coarse_loss = 0.0;
  double g_fine_adv = 0.0;
  double g_coarse_adv = 0.0;
  double l2_fine = 0.0;
  double l2_coarse = 0.0;
  double total = 0.0;
};

inline constexpr const char* kTrainingLogHeader =
    "cycle,d_fine_loss,d_coarse_loss,g_fine_adv,g_coarse_adv,l2_fine,l2_coarse,total";
std::string csv_row(const CycleLosses& l);

// The four steps of a cycle. Each leaves every network it does not update
// bit-unchanged, including normalization statistics and optimizer moments.

/// Both discriminator groups on real pairs and generated pairs; generators
/// run without gradients or statistic updates.
DiscriminatorLosses discriminator_step(TrainingState& state, const Batch& batch);
/// G_coarse against D1_coarse, D2_coarse plus lambda * L2 at half resolution.
GeneratorLosses coarse_generator_step(TrainingState& state, const Batch& batch);
/// G_fine against D1_fine, D2_fine plus lambda * L2; G_coarse only supplies
/// its feature.
GeneratorLosses fine_generator_step(TrainingState& state, const Batch& batch);
/// Full objective through both generators (fine gradients reach G_coarse via
/// the feature) and one discriminator update on the same fakes; all six
/// networks step.
JointLosses joint_step(TrainingState& state, const Batch& batch);

struct CycleBatches {
  std::vector<Batch> discriminator;  // d_steps_per_cycle entries
  Batch coarse;
  Batch fine;
  Batch joint;
};

/// Draws fresh batches from the state's random stream.
CycleBatches draw_cycle_batches(TrainingState& state, std::span<const PairedSample> samples);

/// Runs steps (1)-(4), or only (4) during joint-only epochs, then advances
/// the cycle counter. Throws DivergenceError on a non-finite loss.
CycleLosses train_cycle(TrainingState& state, const CycleBatches& batches, bool joint_only = false);

struct FitOptions {
  std::filesystem::path output_dir;
  /// Checkpoint every this many cycles; 0 writes only the final one.
  std::size_t checkpoint_interval = 0;
  std::function<void(const CycleLosses&)> on_cycle;
};

struct FitResult {
  std::vector<std::filesystem::path> checkpoints;
  std::vector<CycleLosses> log;
};

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, std::uint64_t cycle);

/// Continues `state` from its cycle counter up to epochs * cycles_per_epoch,
/// appending to output_dir/train_log.csv and writing checkpoints.
FitResult fit(TrainingState& state, std::span<const PairedSample> samples, const FitOptions& options);

/// Fine angiogram [1, 1, S, S] for one fundus crop [1, 3, S, S].
Tensor infer(GanModel& model, const Tensor& fundus_crop);
Tensor infer(const std::filesystem::path& checkpoint, const Tensor& fundus_crop);

}  // namespace angiogan
