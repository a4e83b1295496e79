#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "aequiv/bridge_client.hpp"
#include "aequiv/dataset.hpp"
#include "aequiv/lexical.hpp"

namespace aequiv::scoring {

// One (candidate, reference, question) triple to score. `id` keys
// precomputed score files and bridge requests.
struct ScoreQuery {
  std::string id;
  std::string question;
  std::string reference;
  std::string candidate;
};

enum class ScorerKind { kLexicalF1, kExactMatch, kScoreFile, kRemoteBridge };
enum class Direction { kAsIs, kSymmetrized };

// Maps answer pairs to equivalence scores in [0, 1], deterministically.
class EquivalenceScorer {
 public:
  virtual ~EquivalenceScorer() = default;

  virtual ScorerKind kind() const = 0;
  virtual std::string name() const = 0;
  virtual std::vector<double> score_batch(std::span<const ScoreQuery> queries) = 0;

  double score(const ScoreQuery& query) { return score_batch({&query, 1}).front(); }
};

class LexicalF1Scorer final : public EquivalenceScorer {
 public:
  explicit LexicalF1Scorer(lexical::NormalizationProfile profile = lexical::NormalizationProfile::simple())
      : profile_(profile) {}

  ScorerKind kind() const override { return ScorerKind::kLexicalF1; }
  std::string name() const override { return "f1"; }
  std::vector<double> score_batch(std::span<const ScoreQuery> queries) override;

 private:
  lexical::NormalizationProfile profile_;
};

// 1 when the normalized token sequences match, else 0.
class ExactMatchScorer final : public EquivalenceScorer {
 public:
  explicit ExactMatchScorer(lexical::NormalizationProfile profile = lexical::NormalizationProfile::simple())
      : profile_(profile) {}

  ScorerKind kind() const override { return ScorerKind::kExactMatch; }
  std::string name() const override { return "em"; }
  std::vector<double> score_batch(std::span<const ScoreQuery> queries) override;

 private:
  lexical::NormalizationProfile profile_;
};

// Precomputed scores keyed by query id.
class ScoreFileScorer final : public EquivalenceScorer {
 public:
  explicit ScoreFileScorer(std::unordered_map<std::string, double> scores, std::string source = "file")
      : scores_(std::move(scores)), source_(std::move(source)) {}

  // Line-delimited {"example_id": ..., "score": ...}.
  static ScoreFileScorer load(const std::filesystem::path& path);

  ScorerKind kind() const override { return ScorerKind::kScoreFile; }
  std::string name() const override { return "file:" + source_; }
  std::vector<double> score_batch(std::span<const ScoreQuery> queries) override;

 private:
  std::unordered_map<std::string, double> scores_;
  std::string source_;
};

class RemoteBridgeScorer final : public EquivalenceScorer {
 public:
  explicit RemoteBridgeScorer(std::unique_ptr<bridge::Transport> transport,
                              std::size_t batch_size = 256)
      : transport_(std::move(transport)), batch_size_(batch_size) {}

  ScorerKind kind() const override { return ScorerKind::kRemoteBridge; }
  std::string name() const override { return "bridge:" + transport_->describe(); }
  std::vector<double> score_batch(std::span<const ScoreQuery> queries) override;

 private:
  std::unique_ptr<bridge::Transport> transport_;
  std::size_t batch_size_;
};

// Mean of score(c, r, q) and score(r, c, q). Reversed queries get the id
// suffix "~rev"; a score file must therefore carry those keys too.
class SymmetrizedScorer final : public EquivalenceScorer {
 public:
  explicit SymmetrizedScorer(std::unique_ptr<EquivalenceScorer> inner)
      : inner_(std::move(inner)) {}

  ScorerKind kind() const override { return inner_->kind(); }
  std::string name() const override { return inner_->name() + "(symmetrized)"; }
  std::vector<double> score_batch(std::span<const ScoreQuery> queries) override;

 private:
  std::unique_ptr<EquivalenceScorer> inner_;
};

inline constexpr double kDefaultThreshold = 0.5;

// Predicts Equivalent iff score >= threshold.
struct ThresholdedClassifier {
  EquivalenceScorer* scorer = nullptr;
  double threshold = kDefaultThreshold;

  bool predict(double score) const { return score >= threshold; }
};

struct ClassifierReport {
  double accuracy = 0.0;
  // Undefined (nullopt) when scores or labels are constant; `rho_error` then
  // says why.
  std::optional<double> spearman_rho;
  std::string rho_error;
  double threshold = kDefaultThreshold;
  std::size_t n = 0;
};

double accuracy_at(std::span<const double> scores, const std::vector<bool>& labels,
                   double threshold);

// Threshold maximizing accuracy over {0, 1} and the midpoints between
// consecutive distinct scores; ties go to the smallest threshold.
double tune_threshold(std::span<const double> scores, const std::vector<bool>& labels);

ClassifierReport classifier_report(std::span<const double> scores, const std::vector<bool>& labels,
                                   double threshold);

struct SystemAccuracy {
  SourceSystem system = SourceSystem::kOther;
  double accuracy = 0.0;
  std::size_t n = 0;
};

// One row per system present in `systems`, in enum order.
std::vector<SystemAccuracy> per_system_accuracy(std::span<const double> scores,
                                                const std::vector<bool>& labels,
                                                std::span<const SourceSystem> systems,
                                                double threshold);

// Query for an annotated example: id = example_id.
ScoreQuery query_for(const AEExample& example);

// Scores for labeled examples via `classifier.scorer`, then the report.
ClassifierReport classifier_report(const ThresholdedClassifier& classifier,
                                   std::span<const AEExample> examples,
                                   const std::vector<bool>& labels);

}  // namespace aequiv::scoring
