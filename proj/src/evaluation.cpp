#include "angiogan/evaluation.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <random>
#include <set>
#include <sstream>

#include "angiogan/errors.hpp"
#include "angiogan/resample.hpp"
#include "angiogan/trainer.hpp"

namespace angiogan {

namespace fs = std::filesystem;

RandomProjectionEmbedder::RandomProjectionEmbedder(std::uint64_t seed, std::size_t side, std::size_t dimension)
    : side_(side) {
  if (side == 0 || dimension == 0) throw ConfigError("embedder side and dimension must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0 / static_cast<double>(side));
  projection_.resize(static_cast<Eigen::Index>(dimension), static_cast<Eigen::Index>(side * side));
  for (Eigen::Index r = 0; r < projection_.rows(); ++r)
    for (Eigen::Index c = 0; c < projection_.cols(); ++c) projection_(r, c) = normal(rng);
}

namespace {

void require_single(const Tensor& image) {
  if (image.shape().n != 1 || image.size() == 0) {
    throw InputError("embedders take one image [1, c, h, w], got " + image.shape().str());
  }
}

}  // namespace

Eigen::VectorXd RandomProjectionEmbedder::embed(const Tensor& image) const {
  require_single(image);
  const Shape s = image.shape();
  Tensor gray({1, 1, s.h, s.w});
  for (std::size_t c = 0; c < s.c; ++c)
    for (std::size_t i = 0; i < s.plane(); ++i) gray[i] += image[c * s.plane() + i] / static_cast<double>(s.c);
  const Tensor small = (s.h == side_ && s.w == side_) ? gray : lanczos_resize(gray, side_, side_);
  const Eigen::Map<const Eigen::VectorXd> flat(small.data(), static_cast<Eigen::Index>(small.size()));
  return projection_ * flat;
}

Eigen::VectorXd MeanPixelEmbedder::embed(const Tensor& image) const {
  require_single(image);
  Eigen::VectorXd v(1);
  v(0) = sum(image) / static_cast<double>(image.size());
  return v;
}

std::unique_ptr<Embedder> make_embedder(const std::string& name, std::uint64_t seed) {
  if (name == "random-projection") return std::make_unique<RandomProjectionEmbedder>(seed);
  if (name == "mean-pixel") return std::make_unique<MeanPixelEmbedder>();
  throw ConfigError("unknown embedder '" + name + "' (expected random-projection or mean-pixel)");
}

EmbeddingStats gaussian_stats(const Eigen::MatrixXd& samples) {
  if (samples.rows() < 2) throw InputError("embedding statistics need at least 2 samples");
  EmbeddingStats st;
  st.count = static_cast<std::size_t>(samples.rows());
  st.mean = samples.colwise().mean().transpose();
  const Eigen::MatrixXd centred = samples.rowwise() - st.mean.transpose();
  st.covariance = centred.transpose() * centred / static_cast<double>(samples.rows() - 1);
  st.covariance = 0.5 * (st.covariance + st.covariance.transpose()).eval();
  return st;
}

EmbeddingStats embed_set(const std::vector<Tensor>& images, const Embedder& embedder) {
  if (images.size() < 2) throw InputError("embedding statistics need at least 2 images");
  Eigen::MatrixXd rows(static_cast<Eigen::Index>(images.size()), static_cast<Eigen::Index>(embedder.dimension()));
#pragma omp parallel for
  for (std::size_t i = 0; i < images.size(); ++i) rows.row(static_cast<Eigen::Index>(i)) = embedder.embed(images[i]);
  return gaussian_stats(rows);
}

namespace {

/// Symmetric square root; nullopt if the matrix is not PSD within tolerance.
std::optional<Eigen::MatrixXd> psd_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  if (es.info() != Eigen::Success) return std::nullopt;
  const Eigen::VectorXd ev = es.eigenvalues();
  const double tol = 1e-9 * std::max(1.0, ev.cwiseAbs().maxCoeff());
  if (ev.minCoeff() < -tol) return std::nullopt;
  const Eigen::VectorXd root = ev.cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

std::optional<double> trace_sqrt_product(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const auto ra = psd_sqrt(a);
  if (!ra || !psd_sqrt(b)) return std::nullopt;
  Eigen::MatrixXd m = *ra * b * *ra;
  m = 0.5 * (m + m.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) return std::nullopt;
  return es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
}

}  // namespace

double frechet_distance(const EmbeddingStats& a, const EmbeddingStats& b) {
  const Eigen::Index d = a.mean.size();
  if (b.mean.size() != d || a.covariance.rows() != d || a.covariance.cols() != d || b.covariance.rows() != d ||
      b.covariance.cols() != d) {
    throw InputError("Frechet distance needs stats of the same dimension");
  }
  if (!a.mean.allFinite() || !b.mean.allFinite() || !a.covariance.allFinite() || !b.covariance.allFinite()) {
    throw NumericalError("non-finite embedding statistics");
  }
  Eigen::MatrixXd sa = a.covariance;
  Eigen::MatrixXd sb = b.covariance;
  auto tr = trace_sqrt_product(sa, sb);
  if (!tr) {
    const double ridge = 1e-6 * (sa.trace() + sb.trace()) / (2.0 * static_cast<double>(d));
    sa.diagonal().array() += ridge;
    sb.diagonal().array() += ridge;
    tr = trace_sqrt_product(sa, sb);
    if (!tr) throw NumericalError("covariance square root failed after ridge stabilization");
  }
  const double dist = (a.mean - b.mean).squaredNorm() + sa.trace() + sb.trace() - 2.0 * *tr;
  return std::max(0.0, dist);
}

std::vector<PerturbationSpec> default_conditions(std::uint64_t seed) {
  std::vector<PerturbationSpec> out;
  for (PerturbationKind k : kAllPerturbations) out.push_back(PerturbationSpec::defaults(k, seed));
  return out;
}

std::string condition_label(PerturbationKind kind) {
  switch (kind) {
    case PerturbationKind::none:
      return "Orig";
    case PerturbationKind::noise:
      return "Noise";
    case PerturbationKind::blur:
      return "Blur";
    case PerturbationKind::sharpen:
      return "Sharp";
    case PerturbationKind::whirl:
      return "Whirl";
    case PerturbationKind::pinch:
      return "Pinch";
  }
  return "Unknown";
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + '"';
}

}  // namespace

std::string EvaluationReport::to_csv() const {
  std::ostringstream os;
  os << std::setprecision(17) << "condition,kind,amount,distance,delta,error\n";
  for (const auto& c : conditions) {
    os << condition_label(c.spec.kind) << ',' << perturbation_name(c.spec.kind) << ',' << c.spec.amount << ',';
    if (c.distance) os << *c.distance;
    os << ',';
    if (c.delta) os << *c.delta;
    os << ',' << csv_field(c.error) << '\n';
  }
  return os.str();
}

nlohmann::json EvaluationReport::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& c : conditions) {
    nlohmann::json r = {{"condition", condition_label(c.spec.kind)}, {"spec", angiogan::to_json(c.spec)}};
    r["distance"] = c.distance ? nlohmann::json(*c.distance) : nlohmann::json(nullptr);
    r["delta"] = c.delta ? nlohmann::json(*c.delta) : nlohmann::json(nullptr);
    if (!c.error.empty()) r["error"] = c.error;
    rows.push_back(r);
  }
  return {{"embedder", embedder}, {"real_count", real_count}, {"conditions", rows}};
}

EvaluationReport evaluate_conditions(const std::vector<PairedSample>& crops,
                                     const std::vector<PerturbationSpec>& conditions, const Embedder& embedder,
                                     const Translator& translate) {
  std::vector<Tensor> real;
  real.reserve(crops.size());
  for (const auto& c : crops) real.push_back(c.angio_crop());
  const EmbeddingStats real_stats = embed_set(real, embedder);

  EvaluationReport report;
  report.embedder = embedder.name();
  report.real_count = real.size();
  for (const PerturbationSpec& spec : conditions) {
    ConditionResult result;
    result.spec = spec;
    try {
      std::vector<Tensor> generated;
      generated.reserve(crops.size());
      for (std::size_t i = 0; i < crops.size(); ++i) {
        PerturbationSpec per_image = spec;
        per_image.seed = spec.seed + i;
        generated.push_back(translate(apply_perturbation(crops[i].fundus_crop(), per_image)));
      }
      result.distance = frechet_distance(embed_set(generated, embedder), real_stats);
    } catch (const std::exception& e) {
      result.error = e.what();
    }
    report.conditions.push_back(std::move(result));
  }
  const auto base = std::find_if(report.conditions.begin(), report.conditions.end(),
                                 [](const ConditionResult& c) { return c.spec.kind == PerturbationKind::none; });
  if (base != report.conditions.end() && base->distance) {
    for (auto& c : report.conditions)
      if (c.distance) c.delta = *c.distance - *base->distance;
  }
  return report;
}

EvaluationReport evaluate_conditions(GanModel& model, const std::vector<PairedSample>& crops,
                                     const std::vector<PerturbationSpec>& conditions, const Embedder& embedder) {
  return evaluate_conditions(crops, conditions, embedder, [&model](const Tensor& f) { return infer(model, f); });
}

std::string_view study_label_name(StudyLabel label) { return label == StudyLabel::real ? "real" : "fake"; }

StudyLabel parse_study_label(std::string_view text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "real") return StudyLabel::real;
  if (lower == "fake") return StudyLabel::fake;
  throw InputError("study label must be real or fake, got '" + std::string(text) + "'");
}

namespace {

/// Fisher-Yates on the given engine; identical on every platform.
template <typename T>
void seeded_shuffle(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(v[i - 1], v[j]);
  }
}

std::string item_id(std::size_t index, std::size_t n) {
  const int width = std::max(2, static_cast<int>(std::to_string(n).size()));
  std::ostringstream os;
  os << "item_" << std::setw(width) << std::setfill('0') << index;
  return os.str();
}

}  // namespace

StudyKit build_study_kit(const std::vector<Image8>& real, const std::vector<Image8>& fake, std::size_t n,
                         std::uint64_t seed) {
  if (n == 0 || n % 2 != 0) throw InputError("study size must be positive and even, got " + std::to_string(n));
  const std::size_t half = n / 2;
  if (real.size() < half || fake.size() < half) {
    throw InputError("study of " + std::to_string(n) + " needs " + std::to_string(half) + " images per class, have " +
                     std::to_string(real.size()) + " real and " + std::to_string(fake.size()) + " fake");
  }
  std::mt19937_64 rng(seed);
  auto pick = [&](const std::vector<Image8>& pool) {
    std::vector<std::size_t> idx(pool.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    seeded_shuffle(idx, rng);
    idx.resize(half);
    return idx;
  };
  std::vector<std::pair<StudyLabel, std::size_t>> chosen;
  for (std::size_t i : pick(real)) chosen.emplace_back(StudyLabel::real, i);
  for (std::size_t i : pick(fake)) chosen.emplace_back(StudyLabel::fake, i);
  seeded_shuffle(chosen, rng);

  StudyKit kit;
  for (std::size_t k = 0; k < chosen.size(); ++k) {
    const auto [label, i] = chosen[k];
    StudyItem item{item_id(k + 1, n), label == StudyLabel::real ? real[i] : fake[i], label};
    kit.key[item.id] = label;
    kit.items.push_back(std::move(item));
  }
  return kit;
}

void write_study_kit(const StudyKit& kit, const fs::path& items_dir, const fs::path& key_path) {
  const fs::path items = fs::weakly_canonical(fs::absolute(items_dir));
  const fs::path key_parent = fs::weakly_canonical(fs::absolute(key_path)).parent_path();
  const fs::path rel = key_parent.lexically_relative(items);
  if (!rel.empty() && *rel.begin() != "..") {
    throw InputError("the study key must be written outside the item directory");
  }
  fs::create_directories(items);
  if (!key_parent.empty()) fs::create_directories(key_parent);
  for (const auto& item : kit.items) write_image(items / (item.id + ".png"), item.image);
  nlohmann::json key = nlohmann::json::object();
  for (const auto& [id, label] : kit.key) key[id] = study_label_name(label);
  std::ofstream os(key_path);
  if (!os) throw IoError("cannot write study key " + key_path.string());
  os << key.dump(2) << '\n';
}

std::map<std::string, StudyLabel> read_study_key(const fs::path& key_path) {
  std::ifstream is(key_path);
  if (!is) throw IoError("cannot read study key " + key_path.string());
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InputError("malformed study key " + key_path.string() + ": " + e.what());
  }
  if (!j.is_object()) throw InputError("study key must be a JSON object of id -> label");
  std::map<std::string, StudyLabel> key;
  for (const auto& [id, label] : j.items()) {
    if (!label.is_string()) throw InputError("study key label for " + id + " must be a string");
    key[id] = parse_study_label(label.get<std::string>());
  }
  return key;
}

std::map<std::string, StudyLabel> read_study_responses(const fs::path& csv_path) {
  std::ifstream is(csv_path);
  if (!is) throw IoError("cannot read responses " + csv_path.string());
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
  };
  std::map<std::string, StudyLabel> out;
  std::string line;
  bool first = true;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw InputError("responses line " + std::to_string(lineno) + ": expected id,label");
    const std::string id = trim(line.substr(0, comma));
    const std::string label = trim(line.substr(comma + 1));
    if (first && id == "item_id") {
      first = false;
      continue;
    }
    first = false;
    if (!out.emplace(id, parse_study_label(label)).second) throw InputError("duplicate response for " + id);
  }
  return out;
}

nlohmann::json StudyReport::to_json() const {
  return {{"real_items", real_items},
          {"fake_items", fake_items},
          {"fake_correct_rate", fake_correct_rate},
          {"real_correct_rate", real_correct_rate},
          {"missed", missed},
          {"found", found},
          {"confusion", confusion},
          {"missed_rounded", std::round(missed)},
          {"found_rounded", std::round(found)},
          {"confusion_rounded", std::round(confusion)}};
}

StudyReport score_study(const std::map<std::string, StudyLabel>& responses,
                        const std::map<std::string, StudyLabel>& key) {
  std::vector<std::string> missing;
  std::vector<std::string> unknown;
  for (const auto& [id, label] : key)
    if (!responses.count(id)) missing.push_back(id);
  for (const auto& [id, label] : responses)
    if (!key.count(id)) unknown.push_back(id);
  if (!missing.empty() || !unknown.empty()) {
    std::string msg = "responses do not match the key;";
    auto list = [&](const char* what, const std::vector<std::string>& ids) {
      if (ids.empty()) return;
      msg += std::string(" ") + what + ":";
      for (const auto& id : ids) msg += " " + id;
    };
    list("missing", missing);
    list("unknown", unknown);
    throw InputError(msg);
  }

  std::size_t real_n = 0, fake_n = 0, real_wrong = 0, fake_wrong = 0;
  for (const auto& [id, label] : key) {
    const bool wrong = responses.at(id) != label;
    if (label == StudyLabel::real) {
      ++real_n;
      real_wrong += wrong;
    } else {
      ++fake_n;
      fake_wrong += wrong;
    }
  }
  if (real_n == 0 || fake_n == 0) throw InputError("the study key needs both real and fake items");

  StudyReport r;
  r.real_items = real_n;
  r.fake_items = fake_n;
  r.fake_correct_rate = 100.0 * static_cast<double>(fake_n - fake_wrong) / static_cast<double>(fake_n);
  r.real_correct_rate = 100.0 * static_cast<double>(real_n - real_wrong) / static_cast<double>(real_n);
  // Mean of the two error rates as one fraction num / den. The side above
  // one half is taken as 100 minus its complement, so that inverting every
  // response maps confusion c to exactly 100 - c.
  const std::size_t num = fake_wrong * real_n + real_wrong * fake_n;
  const std::size_t den = 2 * fake_n * real_n;
  const auto pct = [den](std::size_t k) { return 100.0 * static_cast<double>(k) / static_cast<double>(den); };
  r.confusion = 2 * num <= den ? pct(num) : 100.0 - pct(den - num);
  r.missed = r.confusion;
  r.found = 100.0 - r.missed;
  return r;
}

}  // namespace angiogan
