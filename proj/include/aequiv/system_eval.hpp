#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "aequiv/annotations.hpp"
#include "aequiv/dataset.hpp"
#include "aequiv/lexical.hpp"
#include "aequiv/scoring.hpp"

namespace aequiv::system_eval {

struct SystemPrediction {
  std::string question_id;
  std::string answer;
};

// Line-delimited {"question_id": ..., "answer": ...}; one per question.
std::vector<SystemPrediction> load_predictions(const std::filesystem::path& path);

// Equivalent (question, reference, candidate) triples from aggregated human
// ratings. Texts are compared after `simple` normalization.
class HumanLabels {
 public:
  HumanLabels() = default;
  HumanLabels(std::span<const AEExample> examples,
              std::span<const std::optional<annotations::EquivalenceLabel>> labels);

  bool accepts(std::string_view question, std::string_view reference,
               std::string_view candidate) const;
  std::size_t size() const { return equivalent_.size(); }

 private:
  static std::string key(std::string_view question, std::string_view reference,
                         std::string_view candidate);
  std::unordered_set<std::string> equivalent_;
};

enum class MetricKind { kExactMatch, kF1, kScorer, kHuman };

// kMeanScore averages the per-question score (max over references, 1 on an
// exact match); kThresholded counts a question as correct when that score
// reaches the threshold.
enum class Aggregation { kThresholded, kMeanScore };

// An exact match to any reference always counts; the metric can only add
// acceptances on top of that.
struct EquivalenceFn {
  MetricKind kind = MetricKind::kExactMatch;
  Aggregation aggregation = Aggregation::kThresholded;
  double threshold = 0.5;
  lexical::NormalizationProfile profile = lexical::NormalizationProfile::simple();
  scoring::EquivalenceScorer* scorer = nullptr;  // kScorer
  const HumanLabels* human = nullptr;            // kHuman

  std::string name() const;
};

inline constexpr std::size_t kAllReferences = std::numeric_limits<std::size_t>::max();

// Per-question value in [0, 1], in prediction order, using the first
// `max_references` references of each set. Scorer queries carry the id
// "<question_id>/<reference index>".
std::vector<double> per_question_values(std::span<const SystemPrediction> predictions,
                                        std::span<const ReferenceSet> reference_sets,
                                        const EquivalenceFn& fn,
                                        std::size_t max_references = kAllReferences);

double system_accuracy(std::span<const SystemPrediction> predictions,
                       std::span<const ReferenceSet> reference_sets, const EquivalenceFn& fn);

struct BootstrapConfig {
  std::size_t resamples = 1000;
  double level = 0.95;
  std::uint64_t seed = 0;
};

struct AccuracyReport {
  std::string metric;
  double estimate = 0.0;        // percent
  double ci_half_width = 0.0;   // percent, half the central percentile interval
  double ci_lower = 0.0;        // percent
  double ci_upper = 0.0;        // percent
  double standard_error = 0.0;  // percent, sd of the bootstrap means
  std::size_t n_questions = 0;
  std::size_t n_bootstrap = 0;
  double confidence_level = 0.95;
};

// Percentile bootstrap over questions. Resample b draws from its own stream
// derived from (seed, b), so results do not depend on thread scheduling.
AccuracyReport bootstrap_ci(std::span<const double> per_question, const BootstrapConfig& config,
                            std::string metric = {});

// Accuracy with every reference set cut to its first `k` entries.
AccuracyReport reference_ablation(std::span<const SystemPrediction> predictions,
                                  std::span<const ReferenceSet> reference_sets,
                                  const EquivalenceFn& fn, std::size_t k,
                                  const BootstrapConfig& config);

}  // namespace aequiv::system_eval
