#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "angiogan/dataset.hpp"
#include "angiogan/image_io.hpp"
#include "angiogan/perturb.hpp"
#include "angiogan/tensor.hpp"

namespace angiogan {

class GanModel;

/// Maps one image [1, c, h, w] to a fixed-length feature vector.
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::string name() const = 0;
  virtual std::size_t dimension() const = 0;
  virtual Eigen::VectorXd embed(const Tensor& image) const = 0;
};

/// Channel mean, Lanczos resize to side x side, then a fixed Gaussian
/// projection (entries N(0, 1 / side^2)) seeded by `seed`.
class RandomProjectionEmbedder final : public Embedder {
 public:
  explicit RandomProjectionEmbedder(std::uint64_t seed = 0, std::size_t side = 64, std::size_t dimension = 64);
  std::string name() const override { return "random-projection"; }
  std::size_t dimension() const override { return static_cast<std::size_t>(projection_.rows()); }
  Eigen::VectorXd embed(const Tensor& image) const override;

 private:
  std::size_t side_;
  Eigen::MatrixXd projection_;
};

/// d = 1: the mean pixel value.
class MeanPixelEmbedder final : public Embedder {
 public:
  std::string name() const override { return "mean-pixel"; }
  std::size_t dimension() const override { return 1; }
  Eigen::VectorXd embed(const Tensor& image) const override;
};

/// "random-projection" or "mean-pixel"; ConfigError otherwise.
std::unique_ptr<Embedder> make_embedder(const std::string& name, std::uint64_t seed = 0);

struct EmbeddingStats {
  Eigen::VectorXd mean;
  /// Unbiased (n - 1) sample covariance.
  Eigen::MatrixXd covariance;
  std::size_t count = 0;
};

/// Rows are observations. Fewer than two rows is an InputError.
EmbeddingStats gaussian_stats(const Eigen::MatrixXd& samples);
/// Embeds every image (each [1, c, h, w]) and fits the Gaussian.
EmbeddingStats embed_set(const std::vector<Tensor>& images, const Embedder& embedder);

/// |mu_a - mu_b|^2 + Tr(S_a + S_b - 2 (S_a S_b)^(1/2)). The trace of the
/// square root is taken from the eigenvalues of S_a^(1/2) S_b S_a^(1/2).
double frechet_distance(const EmbeddingStats& a, const EmbeddingStats& b);

/// none, noise, blur, sharpen, whirl, pinch at their default amounts.
std::vector<PerturbationSpec> default_conditions(std::uint64_t seed = 0);
/// Column label for a condition: Orig, Noise, Blur, Sharp, Whirl, Pinch.
std::string condition_label(PerturbationKind kind);

struct ConditionResult {
  PerturbationSpec spec;
  std::optional<double> distance;
  /// distance minus the "none" distance, when both exist.
  std::optional<double> delta;
  std::string error;
};

struct EvaluationReport {
  std::string embedder;
  std::size_t real_count = 0;
  std::vector<ConditionResult> conditions;

  /// condition,kind,amount,distance,delta,error
  std::string to_csv() const;
  nlohmann::json to_json() const;
};

using Translator = std::function<Tensor(const Tensor& fundus_crop)>;

/// For every condition: perturb each fundus crop (noise seeds advance by
/// crop index), translate it, and score the generated set against the real
/// angiogram crops. A failing condition records its error and the others
/// still run.
EvaluationReport evaluate_conditions(const std::vector<PairedSample>& crops,
                                     const std::vector<PerturbationSpec>& conditions, const Embedder& embedder,
                                     const Translator& translate);
EvaluationReport evaluate_conditions(GanModel& model, const std::vector<PairedSample>& crops,
                                     const std::vector<PerturbationSpec>& conditions, const Embedder& embedder);

enum class StudyLabel { real, fake };
std::string_view study_label_name(StudyLabel label);
/// Case-insensitive "real" / "fake"; InputError otherwise.
StudyLabel parse_study_label(std::string_view text);

struct StudyItem {
  std::string id;
  Image8 image;
  StudyLabel label;
};

struct StudyKit {
  std::vector<StudyItem> items;
  std::map<std::string, StudyLabel> key;
};

/// Draws n/2 images from each pool, shuffles them and numbers the shuffled
/// order item_01, item_02, ... n must be positive and even.
StudyKit build_study_kit(const std::vector<Image8>& real, const std::vector<Image8>& fake, std::size_t n,
                         std::uint64_t seed);

/// Items go to items_dir/<id>.png; the key goes to key_path, which must lie
/// outside items_dir.
void write_study_kit(const StudyKit& kit, const std::filesystem::path& items_dir,
                     const std::filesystem::path& key_path);
std::map<std::string, StudyLabel> read_study_key(const std::filesystem::path& key_path);
/// item_id,label rows; a leading header row is skipped.
std::map<std::string, StudyLabel> read_study_responses(const std::filesystem::path& csv_path);

struct StudyReport {
  std::size_t real_items = 0;
  std::size_t fake_items = 0;
  /// Percentages, unrounded.
  double fake_correct_rate = 0.0;
  double real_correct_rate = 0.0;
  double missed = 0.0;
  double found = 0.0;
  double confusion = 0.0;

  nlohmann::json to_json() const;
};

/// Every key id must be answered and no other id may appear; violations are
/// an InputError that lists the offending ids.
StudyReport score_study(const std::map<std::string, StudyLabel>& responses,
                        const std::map<std::string, StudyLabel>& key);

}  // namespace angiogan
