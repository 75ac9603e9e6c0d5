#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>

#include "angiogan/errors.hpp"
#include "angiogan/trainer.hpp"
#include "test_util.hpp"

using namespace angiogan;
namespace fs = std::filesystem;

namespace {

struct Snapshot {
  std::vector<Tensor> values;
  std::vector<Tensor> moments;
  std::vector<std::uint64_t> steps;
  bool operator==(const Snapshot&) const = default;
};

Snapshot snapshot(TrainingState& s, NetworkId id) {
  Snapshot out;
  for (const Parameter* p : s.model.parameters(id)) out.values.push_back(p->value);
  const Adam& opt = s.optimizer(id);
  out.moments = opt.first_moments();
  out.moments.insert(out.moments.end(), opt.second_moments().begin(), opt.second_moments().end());
  out.steps.push_back(opt.steps());
  return out;
}

std::array<Snapshot, 6> snapshot_all(TrainingState& s) {
  std::array<Snapshot, 6> out;
  for (NetworkId id : kAllNetworks) out[static_cast<std::size_t>(id)] = snapshot(s, id);
  return out;
}

std::vector<PairedSample> toy_samples(std::size_t pairs, std::size_t crops, std::uint64_t seed = 1) {
  std::vector<SourcePair> sources;
  for (std::size_t i = 0; i < pairs; ++i) sources.push_back(synthetic_pair("p" + std::to_string(i), 72, 80, seed));
  return build_training_set(sources, crops, 64, seed);
}

TrainingSchedule toy_schedule(std::size_t epochs = 1, std::size_t batch = 2) {
  TrainingSchedule s;
  s.batch_size = batch;
  s.epochs = epochs;
  s.seed = 7;
  return s;
}

std::string file_bytes(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("angiogan_trainer_" + name);
  fs::remove_all(p);
  return p;
}

TEST(TrainingSchedule, DefaultsAndValidation) {
  const TrainingSchedule s;
  EXPECT_EQ(s.d_steps_per_cycle, 2u);
  EXPECT_EQ(s.batch_size, 4u);
  EXPECT_EQ(s.epochs, 100u);
  EXPECT_DOUBLE_EQ(s.learning_rate, 2e-4);
  EXPECT_DOUBLE_EQ(s.beta1, 0.5);
  EXPECT_DOUBLE_EQ(s.beta2, 0.999);
  EXPECT_TRUE(s.joint_every_cycle);
  EXPECT_EQ(s.cycles_per_epoch(850), 212u);
  EXPECT_THROW(s.validate(3), ConfigError);
  EXPECT_THROW(s.validate(0), InputError);
  TrainingSchedule bad;
  bad.d_steps_per_cycle = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(TrainingSchedule, JointOnlyTailIsLastTenthOfEpochs) {
  TrainingSchedule s;
  EXPECT_EQ(s.joint_only_from_epoch(), 100u);
  s.joint_every_cycle = false;
  EXPECT_EQ(s.joint_only_from_epoch(), 90u);
  s.epochs = 5;
  EXPECT_EQ(s.joint_only_from_epoch(), 4u);
}

TEST(TrainingSchedule, JsonRoundTrip) {
  TrainingSchedule s = toy_schedule(3, 2);
  s.joint_every_cycle = false;
  s.d_steps_per_cycle = 5;
  const TrainingSchedule r = schedule_from_json(to_json(s));
  EXPECT_EQ(to_json(r), to_json(s));
}

TEST(TrainCycle, FreezingIsBitExact) {
  const auto samples = toy_samples(2, 4);
  TrainingState state(ModelConfig::toy(), toy_schedule());
  const CycleBatches batches = draw_cycle_batches(state, samples);

  const auto before = snapshot_all(state);
  for (const Batch& b : batches.discriminator) discriminator_step(state, b);
  const auto after_d = snapshot_all(state);
  for (NetworkId id : {NetworkId::g_coarse, NetworkId::g_fine}) {
    EXPECT_EQ(after_d[static_cast<std::size_t>(id)], before[static_cast<std::size_t>(id)]) << network_name(id);
  }
  for (NetworkId id : {NetworkId::d1_fine, NetworkId::d2_fine, NetworkId::d1_coarse, NetworkId::d2_coarse}) {
    EXPECT_NE(after_d[static_cast<std::size_t>(id)], before[static_cast<std::size_t>(id)]) << network_name(id);
  }

  coarse_generator_step(state, batches.coarse);
  const auto after_gc = snapshot_all(state);
  for (NetworkId id : kAllNetworks) {
    const auto i = static_cast<std::size_t>(id);
    if (id == NetworkId::g_coarse) {
      EXPECT_NE(after_gc[i], after_d[i]);
    } else {
      EXPECT_EQ(after_gc[i], after_d[i]) << network_name(id);
    }
  }

  fine_generator_step(state, batches.fine);
  const auto after_gf = snapshot_all(state);
  for (NetworkId id : kAllNetworks) {
    const auto i = static_cast<std::size_t>(id);
    if (id == NetworkId::g_fine) {
      EXPECT_NE(after_gf[i], after_gc[i]);
    } else {
      EXPECT_EQ(after_gf[i], after_gc[i]) << network_name(id);
    }
  }

  joint_step(state, batches.joint);
  const auto after_joint = snapshot_all(state);
  for (NetworkId id : kAllNetworks) {
    EXPECT_NE(after_joint[static_cast<std::size_t>(id)], after_gf[static_cast<std::size_t>(id)]) << network_name(id);
  }
}

TEST(TrainCycle, AdvancesCounterAndReportsFiniteLosses) {
  const auto samples = toy_samples(2, 4);
  TrainingState state(ModelConfig::toy(), toy_schedule());
  const CycleLosses l = train_cycle(state, draw_cycle_batches(state, samples));
  EXPECT_EQ(state.cycle, 1u);
  EXPECT_EQ(l.cycle, 1u);
  for (double v : {l.d_fine_loss, l.d_coarse_loss, l.g_fine_adv, l.g_coarse_adv, l.l2_fine, l.l2_coarse}) {
    EXPECT_TRUE(std::isfinite(v));
    EXPECT_GE(v, 0.0);
  }
  EXPECT_DOUBLE_EQ(l.total, total_generator_objective(l.g_fine_adv, l.g_coarse_adv, l.l2_fine, l.l2_coarse, {}));
}

TEST(TrainCycle, NonFiniteLossIsDivergenceWithCycle) {
  const auto samples = toy_samples(2, 4);
  TrainingState state(ModelConfig::toy(), toy_schedule());
  state.cycle = 41;
  for (Parameter* p : state.model.parameters(NetworkId::g_fine)) p->value.fill(std::numeric_limits<double>::quiet_NaN());
  try {
    train_cycle(state, draw_cycle_batches(state, samples));
    FAIL() << "expected DivergenceError";
  } catch (const DivergenceError& e) {
    EXPECT_EQ(e.cycle(), 41u);
  }
}

TEST(TrainCycle, EmptyBatchIsInputError) {
  TrainingState state(ModelConfig::toy(), toy_schedule());
  EXPECT_THROW(discriminator_step(state, Batch{}), InputError);
  const std::vector<PairedSample> none;
  EXPECT_THROW(make_batch(none, {}), InputError);
}

TEST(Checkpoint, RoundTripIsByteIdentical) {
  const auto samples = toy_samples(2, 4);
  TrainingState state(ModelConfig::toy(), toy_schedule());
  train_cycle(state, draw_cycle_batches(state, samples));
  const fs::path dir = scratch("roundtrip");
  state.save(dir / "a.agan");
  TrainingState loaded = TrainingState::load(dir / "a.agan");
  loaded.save(dir / "b.agan");
  EXPECT_EQ(file_bytes(dir / "a.agan"), file_bytes(dir / "b.agan"));
  EXPECT_EQ(loaded.cycle, 1u);
  EXPECT_EQ(loaded.rng, state.rng);
  EXPECT_EQ(snapshot_all(loaded), snapshot_all(state));
}

TEST(Checkpoint, CorruptFileIsLoadError) {
  const fs::path dir = scratch("corrupt");
  fs::create_directories(dir);
  std::ofstream(dir / "bad.agan") << "not a checkpoint";
  EXPECT_THROW(TrainingState::load(dir / "bad.agan"), LoadError);
  EXPECT_THROW(infer(dir / "bad.agan", Tensor({1, 3, 64, 64})), LoadError);
  EXPECT_THROW(TrainingState::load(dir / "missing.agan"), LoadError);
}

TEST(Fit, SmokeRunWritesLogAndCheckpoint) {
  const auto samples = toy_samples(2, 4);
  TrainingState state(ModelConfig::toy(), toy_schedule(2, 4));
  const fs::path dir = scratch("smoke");
  const FitResult r = fit(state, samples, {dir, 0, {}});
  EXPECT_EQ(r.log.size(), 4u);  // 2 epochs x 8 samples / batch 4
  ASSERT_GE(r.checkpoints.size(), 1u);
  EXPECT_TRUE(fs::exists(r.checkpoints.back()));
  EXPECT_EQ(state.epoch, 2u);

  std::ifstream log(dir / "train_log.csv");
  std::string header;
  std::getline(log, header);
  EXPECT_EQ(header, kTrainingLogHeader);
  std::size_t rows = 0;
  for (std::string line; std::getline(log, line);) ++rows;
  EXPECT_EQ(rows, 4u);
}

TEST(Fit, ZeroEpochsWritesInitialCheckpoint) {
  const auto samples = toy_samples(1, 2);
  TrainingState state(ModelConfig::toy(), toy_schedule(0, 2));
  const FitResult r = fit(state, samples, {scratch("zero"), 0, {}});
  EXPECT_TRUE(r.log.empty());
  ASSERT_EQ(r.checkpoints.size(), 1u);
  EXPECT_EQ(r.checkpoints[0].filename(), "checkpoint_00000000.agan");
}

TEST(Fit, SeededRunsAreBitIdentical) {
  const auto samples = toy_samples(2, 2);
  std::array<fs::path, 2> finals;
  for (int run = 0; run < 2; ++run) {
    TrainingState state(ModelConfig::toy(), toy_schedule(2, 2));
    finals[run] = fit(state, samples, {scratch("det" + std::to_string(run)), 0, {}}).checkpoints.back();
  }
  EXPECT_EQ(file_bytes(finals[0]), file_bytes(finals[1]));
}

TEST(Fit, ResumeReproducesUninterruptedRun) {
  const auto samples = toy_samples(2, 2);
  TrainingSchedule sched = toy_schedule(3, 2);
  sched.joint_every_cycle = false;  // also crosses into the joint-only tail

  const fs::path full_dir = scratch("resume_full");
  TrainingState full(ModelConfig::toy(), sched);
  const FitResult full_run = fit(full, samples, {full_dir, 2, {}});
  ASSERT_EQ(full_run.log.size(), 6u);

  TrainingState resumed = TrainingState::load(checkpoint_path(full_dir, 2));
  EXPECT_EQ(resumed.cycle, 2u);
  const fs::path resume_dir = scratch("resume_part");
  fs::create_directories(resume_dir);
  fs::copy_file(full_dir / "train_log.csv", resume_dir / "train_log.csv");
  const FitResult tail = fit(resumed, samples, {resume_dir, 2, {}});
  ASSERT_EQ(tail.log.size(), 4u);
  EXPECT_EQ(file_bytes(tail.checkpoints.back()), file_bytes(full_run.checkpoints.back()));
  EXPECT_EQ(file_bytes(resume_dir / "train_log.csv"), file_bytes(full_dir / "train_log.csv"));
}

TEST(Infer, ShapeRangeAndDeterminism) {
  TrainingState state(ModelConfig::toy(), toy_schedule());
  const Tensor x = angiogan::testing::random_tensor({1, 3, 64, 64}, 3);
  const Tensor a = infer(state.model, x);
  EXPECT_EQ(a.shape(), (Shape{1, 1, 64, 64}));
  EXPECT_GE(min_value(a), -1.0);
  EXPECT_LE(max_value(a), 1.0);
  EXPECT_EQ(infer(state.model, x), a);
  EXPECT_THROW(infer(state.model, Tensor({1, 3, 32, 32})), InputError);

  const fs::path dir = scratch("infer");
  state.save(dir / "c.agan");
  EXPECT_EQ(infer(dir / "c.agan", x), a);
}

}  // namespace
