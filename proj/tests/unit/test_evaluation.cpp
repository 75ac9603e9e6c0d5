#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <random>
#include <set>

#include "angiogan/errors.hpp"
#include "angiogan/evaluation.hpp"
#include "angiogan/model.hpp"
#include "test_util.hpp"

using namespace angiogan;
using angiogan::testing::random_tensor;
namespace fs = std::filesystem;

namespace {

EmbeddingStats stats_of(Eigen::VectorXd mean, Eigen::MatrixXd cov) { return {std::move(mean), std::move(cov), 100}; }

Eigen::MatrixXd random_spd(std::size_t d, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::MatrixXd a(d, d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) a(i, j) = n(rng);
  return a * a.transpose() / static_cast<double>(d) + 0.1 * Eigen::MatrixXd::Identity(d, d);
}

TEST(Frechet, DiagonalGaussianClosedForm) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> dim(1, 8);
  std::uniform_real_distribution<double> mu(-3.0, 3.0), sd(0.05, 3.0);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const int d = dim(rng);
    Eigen::VectorXd ma(d), mb(d), sa(d), sb(d);
    double expected = 0.0;
    for (int i = 0; i < d; ++i) {
      ma(i) = mu(rng);
      mb(i) = mu(rng);
      sa(i) = sd(rng);
      sb(i) = sd(rng);
      expected += (ma(i) - mb(i)) * (ma(i) - mb(i)) + (sa(i) - sb(i)) * (sa(i) - sb(i));
    }
    const Eigen::MatrixXd ca = sa.array().square().matrix().asDiagonal();
    const Eigen::MatrixXd cb = sb.array().square().matrix().asDiagonal();
    worst = std::max(worst, std::abs(frechet_distance(stats_of(ma, ca), stats_of(mb, cb)) - expected));
  }
  EXPECT_LE(worst, 1e-6);
}

TEST(Frechet, ScalarExamples) {
  const auto s = [](double m, double v) { return stats_of(Eigen::VectorXd::Constant(1, m), Eigen::MatrixXd::Constant(1, 1, v)); };
  EXPECT_NEAR(frechet_distance(s(0, 1), s(1, 1)), 1.0, 1e-12);
  EXPECT_NEAR(frechet_distance(s(0, 4), s(0, 1)), 1.0, 1e-12);
}

TEST(Frechet, TwoByTwoTraceOfSquareRoot) {
  // For 2x2 M = A B with non-negative real eigenvalues,
  // tr sqrt(M) = sqrt(tr M + 2 sqrt(det M)).
  std::mt19937_64 rng(2);
  for (int t = 0; t < 50; ++t) {
    const Eigen::MatrixXd a = random_spd(2, rng), b = random_spd(2, rng);
    const Eigen::Matrix2d m = a * b;
    const double tr_sqrt = std::sqrt(m.trace() + 2.0 * std::sqrt(m.determinant()));
    const Eigen::Vector2d ma(0.3, -1.0), mb(1.1, 0.4);
    const double expected = (ma - mb).squaredNorm() + a.trace() + b.trace() - 2.0 * tr_sqrt;
    EXPECT_NEAR(frechet_distance(stats_of(ma, a), stats_of(mb, b)), expected, 1e-9);
  }
}

TEST(Frechet, IdentityAndSymmetry) {
  std::mt19937_64 rng(3);
  for (std::size_t d : {1u, 3u, 8u, 16u}) {
    std::normal_distribution<double> n(0.0, 1.0);
    Eigen::MatrixXd xa(200, d), xb(150, d);
    for (Eigen::Index i = 0; i < xa.size(); ++i) xa.data()[i] = n(rng);
    for (Eigen::Index i = 0; i < xb.size(); ++i) xb.data()[i] = 0.5 * n(rng) + 0.2;
    const EmbeddingStats a = gaussian_stats(xa), b = gaussian_stats(xb);
    EXPECT_LE(frechet_distance(a, a), 1e-6) << d;
    EXPECT_NEAR(frechet_distance(a, b), frechet_distance(b, a), 1e-8) << d;
  }
}

TEST(Frechet, MonotoneInMeanShift) {
  std::mt19937_64 rng(4);
  const Eigen::MatrixXd cov = random_spd(4, rng);
  const Eigen::VectorXd dir = Eigen::VectorXd::Random(4).normalized();
  double previous = -1.0;
  for (int k = 0; k <= 20; ++k) {
    const double f = frechet_distance(stats_of(Eigen::VectorXd::Zero(4), cov), stats_of(0.25 * k * dir, cov));
    EXPECT_GT(f, previous) << k;
    EXPECT_NEAR(f, (0.25 * k) * (0.25 * k), 1e-6);
    previous = f;
  }
}

TEST(Frechet, ErrorsAndStabilization) {
  const EmbeddingStats a = stats_of(Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Identity(2, 2));
  const EmbeddingStats b = stats_of(Eigen::VectorXd::Zero(3), Eigen::MatrixXd::Identity(3, 3));
  EXPECT_THROW(frechet_distance(a, b), InputError);

  Eigen::MatrixXd slightly(2, 2);
  slightly << 1.0, 0.0, 0.0, -1e-8;
  const double f = frechet_distance(a, stats_of(Eigen::VectorXd::Zero(2), slightly));
  EXPECT_TRUE(std::isfinite(f));
  // The ridge moves the result by about 2 sqrt(ridge).
  EXPECT_NEAR(f, 1.0, 1e-2);

  Eigen::MatrixXd indefinite(2, 2);
  indefinite << 1.0, 0.0, 0.0, -0.5;
  EXPECT_THROW(frechet_distance(a, stats_of(Eigen::VectorXd::Zero(2), indefinite)), NumericalError);
}

TEST(EmbedSet, HandStatisticsAndPermutation) {
  const MeanPixelEmbedder mean_pixel;
  const std::vector<Tensor> two = {Tensor({1, 1, 4, 4}, 0.0), Tensor({1, 1, 4, 4}, 1.0)};
  const EmbeddingStats st = embed_set(two, mean_pixel);
  EXPECT_DOUBLE_EQ(st.mean(0), 0.5);
  EXPECT_DOUBLE_EQ(st.covariance(0, 0), 0.5);
  EXPECT_EQ(st.count, 2u);

  const RandomProjectionEmbedder rp(5);
  const Tensor img = random_tensor({1, 3, 32, 32}, 6);
  const EmbeddingStats same = embed_set({img, img, img}, rp);
  EXPECT_LE(same.covariance.cwiseAbs().maxCoeff(), 1e-24);

  std::vector<Tensor> imgs;
  for (int i = 0; i < 6; ++i) imgs.push_back(random_tensor({1, 1, 48, 48}, 10 + i));
  const EmbeddingStats fwd = embed_set(imgs, rp);
  std::reverse(imgs.begin(), imgs.end());
  const EmbeddingStats rev = embed_set(imgs, rp);
  EXPECT_LE((fwd.mean - rev.mean).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_LE((fwd.covariance - rev.covariance).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_LE((fwd.covariance - fwd.covariance.transpose()).cwiseAbs().maxCoeff(), 1e-10);

  EXPECT_THROW(embed_set({img}, rp), InputError);
  EXPECT_THROW(rp.embed(Tensor({2, 1, 8, 8})), InputError);
}

TEST(Embedders, RandomProjectionIsSeeded) {
  const Tensor img = random_tensor({1, 3, 64, 64}, 7);
  const RandomProjectionEmbedder a(1), b(1), c(2);
  EXPECT_EQ(a.dimension(), 64u);
  EXPECT_EQ(a.embed(img), b.embed(img));
  EXPECT_NE(a.embed(img), c.embed(img));
  EXPECT_THROW(make_embedder("inception"), ConfigError);
  EXPECT_EQ(make_embedder("mean-pixel")->dimension(), 1u);
}

std::vector<PairedSample> small_eval_crops() {
  std::vector<PairedSample> crops;
  for (int i = 0; i < 3; ++i) {
    const auto q = eval_quadrant_crops(synthetic_pair("e" + std::to_string(i), 80, 96, i + 1), 64);
    crops.insert(crops.end(), q.begin(), q.end());
  }
  return crops;
}

TEST(EvaluateConditions, SixColumnsAndSelfDistance) {
  const auto crops = small_eval_crops();
  // Returns the real angiogram for an unperturbed fundus crop.
  std::vector<std::pair<Tensor, Tensor>> table;
  for (const auto& c : crops) table.emplace_back(c.fundus_crop(), c.angio_crop());
  const Translator lookup = [&](const Tensor& f) {
    for (const auto& [fundus, angio] : table)
      if (fundus == f) return angio;
    Tensor gray({1, 1, f.shape().h, f.shape().w});
    for (std::size_t i = 0; i < gray.size(); ++i) gray[i] = -f[i];
    return gray;
  };
  const RandomProjectionEmbedder rp(0);
  const EvaluationReport r = evaluate_conditions(crops, default_conditions(3), rp, lookup);
  ASSERT_EQ(r.conditions.size(), 6u);
  const std::vector<std::string> labels = {"Orig", "Noise", "Blur", "Sharp", "Whirl", "Pinch"};
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(condition_label(r.conditions[i].spec.kind), labels[i]);
    ASSERT_TRUE(r.conditions[i].distance.has_value()) << r.conditions[i].error;
    EXPECT_DOUBLE_EQ(*r.conditions[i].delta, *r.conditions[i].distance - *r.conditions[0].distance);
  }
  EXPECT_LE(*r.conditions[0].distance, 1e-6);
  EXPECT_GT(*r.conditions[1].distance, 1e-3);
  EXPECT_EQ(r.real_count, 12u);
  EXPECT_EQ(r.to_csv().substr(0, 42), "condition,kind,amount,distance,delta,error");
  EXPECT_EQ(r.to_json()["conditions"].size(), 6u);
}

TEST(EvaluateConditions, FailingConditionDoesNotStopOthers) {
  const auto crops = small_eval_crops();
  auto conditions = default_conditions();
  conditions[4].radius_fraction = 0.0;
  const Translator mean_gray = [](const Tensor& f) {
    Tensor g({1, 1, f.shape().h, f.shape().w});
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += f[c * g.size() + i] / 3.0;
    return g;
  };
  const EvaluationReport r = evaluate_conditions(crops, conditions, MeanPixelEmbedder(), mean_gray);
  EXPECT_FALSE(r.conditions[4].distance.has_value());
  EXPECT_NE(r.conditions[4].error.find("radius_fraction"), std::string::npos);
  for (std::size_t i : {0u, 1u, 2u, 3u, 5u}) EXPECT_TRUE(r.conditions[i].distance.has_value()) << i;
}

TEST(EvaluateConditions, ToyModelRunsEndToEnd) {
  GanModel model(ModelConfig::toy(4, 64));
  model.initialize(1);
  const EvaluationReport r =
      evaluate_conditions(model, small_eval_crops(), default_conditions(), RandomProjectionEmbedder(0));
  for (const auto& c : r.conditions) {
    ASSERT_TRUE(c.distance.has_value()) << c.error;
    EXPECT_TRUE(std::isfinite(*c.distance));
  }
}

std::vector<Image8> solid_images(std::size_t n, std::uint8_t base) {
  std::vector<Image8> out;
  for (std::size_t i = 0; i < n; ++i) {
    Image8 img(8, 8, 1);
    std::fill(img.data.begin(), img.data.end(), static_cast<std::uint8_t>(base + i));
    out.push_back(img);
  }
  return out;
}

TEST(StudyKit, BalancedSeededAndSequential) {
  const auto real = solid_images(30, 0), fake = solid_images(25, 100);
  const StudyKit kit = build_study_kit(real, fake, 40, 7);
  ASSERT_EQ(kit.items.size(), 40u);
  std::size_t reals = 0;
  std::set<std::string> ids;
  for (std::size_t i = 0; i < kit.items.size(); ++i) {
    const auto& item = kit.items[i];
    char expected[16];
    std::snprintf(expected, sizeof expected, "item_%02zu", i + 1);
    EXPECT_EQ(item.id, expected);
    reals += item.label == StudyLabel::real;
    EXPECT_EQ(kit.key.at(item.id), item.label);
    EXPECT_EQ(item.image.data[0] >= 100, item.label == StudyLabel::fake);
    ids.insert(item.id);
  }
  EXPECT_EQ(reals, 20u);
  EXPECT_EQ(ids.size(), kit.key.size());

  const StudyKit again = build_study_kit(real, fake, 40, 7);
  const StudyKit other = build_study_kit(real, fake, 40, 8);
  bool differs = false;
  for (std::size_t i = 0; i < 40; ++i) {
    EXPECT_EQ(again.items[i].image, kit.items[i].image);
    differs |= !(other.items[i].image == kit.items[i].image);
  }
  EXPECT_TRUE(differs);

  EXPECT_THROW(build_study_kit(real, solid_images(19, 100), 40, 7), InputError);
  EXPECT_THROW(build_study_kit(real, fake, 7, 7), InputError);
}

TEST(StudyKit, WritesItemsAndKeySeparately) {
  const fs::path root = fs::temp_directory_path() / "angiogan_study_kit";
  fs::remove_all(root);
  const StudyKit kit = build_study_kit(solid_images(4, 0), solid_images(4, 100), 6, 1);
  write_study_kit(kit, root / "items", root / "key.json");
  std::set<std::string> files;
  for (const auto& e : fs::directory_iterator(root / "items")) files.insert(e.path().stem().string());
  std::set<std::string> key_ids;
  for (const auto& [id, label] : read_study_key(root / "key.json")) key_ids.insert(id);
  EXPECT_EQ(files, key_ids);
  EXPECT_EQ(read_study_key(root / "key.json"), kit.key);
  EXPECT_EQ(read_image(root / "items" / "item_01.png", 1), kit.items[0].image);
  EXPECT_THROW(write_study_kit(kit, root / "items", root / "items" / "key.json"), InputError);
}

std::map<std::string, StudyLabel> key_of(std::size_t fakes, std::size_t reals) {
  std::map<std::string, StudyLabel> key;
  for (std::size_t i = 0; i < fakes; ++i) key["f" + std::to_string(i)] = StudyLabel::fake;
  for (std::size_t i = 0; i < reals; ++i) key["r" + std::to_string(i)] = StudyLabel::real;
  return key;
}

/// Answers the first `fake_ok` fakes and `real_ok` reals correctly.
std::map<std::string, StudyLabel> answers(std::size_t fakes, std::size_t reals, std::size_t fake_ok,
                                          std::size_t real_ok) {
  std::map<std::string, StudyLabel> r;
  for (std::size_t i = 0; i < fakes; ++i) r["f" + std::to_string(i)] = i < fake_ok ? StudyLabel::fake : StudyLabel::real;
  for (std::size_t i = 0; i < reals; ++i) r["r" + std::to_string(i)] = i < real_ok ? StudyLabel::real : StudyLabel::fake;
  return r;
}

std::map<std::string, StudyLabel> inverted(std::map<std::string, StudyLabel> r) {
  for (auto& [id, label] : r) label = label == StudyLabel::real ? StudyLabel::fake : StudyLabel::real;
  return r;
}

TEST(ScoreStudy, FifteenAndEightyGiveFiftyTwoPointFive) {
  const StudyReport r = score_study(answers(20, 20, 3, 16), key_of(20, 20));
  EXPECT_EQ(r.fake_correct_rate, 15.0);
  EXPECT_EQ(r.real_correct_rate, 80.0);
  EXPECT_EQ(r.confusion, 52.5);
  EXPECT_EQ(r.missed, 52.5);
  EXPECT_EQ(r.found, 47.5);
  EXPECT_EQ(r.to_json()["missed_rounded"], 53.0);
  EXPECT_EQ(r.to_json()["found_rounded"], 48.0);
}

TEST(ScoreStudy, PerfectAndInvertedRaters) {
  const auto key = key_of(20, 20);
  const StudyReport perfect = score_study(key, key);
  EXPECT_EQ(perfect.confusion, 0.0);
  EXPECT_EQ(perfect.found, 100.0);
  EXPECT_EQ(score_study(inverted(key), key).confusion, 100.0);
}

TEST(ScoreStudy, ComplementLawIsExact) {
  for (const auto [fakes, reals] : {std::pair<std::size_t, std::size_t>{20, 20}, {7, 13}, {3, 11}, {17, 9}}) {
    const auto key = key_of(fakes, reals);
    for (std::size_t fo = 0; fo <= fakes; ++fo)
      for (std::size_t ro = 0; ro <= reals; ++ro) {
        const auto resp = answers(fakes, reals, fo, ro);
        const double a = score_study(resp, key).confusion;
        const double b = score_study(inverted(resp), key).confusion;
        ASSERT_EQ(a + b, 100.0) << fakes << " " << reals << " " << fo << " " << ro;
        const double expected = 50.0 * ((fakes - fo) / double(fakes) + (reals - ro) / double(reals));
        ASSERT_NEAR(a, expected, 1e-12);
      }
  }
}

TEST(ScoreStudy, MismatchedIdsAreListed) {
  const auto key = key_of(2, 2);
  auto resp = key;
  resp.erase("f1");
  resp["zz"] = StudyLabel::real;
  try {
    score_study(resp, key);
    FAIL() << "expected InputError";
  } catch (const InputError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("missing: f1"), std::string::npos);
    EXPECT_NE(msg.find("unknown: zz"), std::string::npos);
  }
}

TEST(ScoreStudy, ReadsResponseCsv) {
  const fs::path p = fs::temp_directory_path() / "angiogan_responses.csv";
  std::ofstream(p) << "item_id,label\nitem_01, Real\nitem_02,fake\n\n";
  const auto r = read_study_responses(p);
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r.at("item_01"), StudyLabel::real);
  EXPECT_EQ(r.at("item_02"), StudyLabel::fake);
  std::ofstream(p) << "item_01,maybe\n";
  EXPECT_THROW(read_study_responses(p), InputError);
}

}  // namespace
