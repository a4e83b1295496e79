#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "aequiv/dataset.hpp"
#include "aequiv/lexical.hpp"
#include "aequiv/scoring.hpp"

namespace aequiv::conformal {

// A question's ranked candidates together with what is known to be correct:
// gold references (exact-match admission) and answer texts marked
// equivalent by annotators.
struct ConformalQuestion {
  ScoredCandidateSet candidates;
  std::vector<std::string> references;
  std::vector<std::string> admitted_answers;
};

struct AdmissionLabels {
  std::string question_id;
  std::vector<std::string> admitted_answers;
  std::vector<std::string> references;
};

// Line-delimited {"question_id", "admitted_answer_texts": [...],
// "references": [...] (optional)}.
std::vector<AdmissionLabels> load_admission_labels(const std::filesystem::path& path);

// Pairs every candidate set with its label record; throws ValidationError
// when a question has no labels.
std::vector<ConformalQuestion> join_questions(std::vector<ScoredCandidateSet> sets,
                                              std::span<const AdmissionLabels> labels);

enum class AdmissionKind {
  kExactLabels,   // exact match to a reference, or an annotated equivalent answer
  kSquadOnly,     // exact match to a reference
  kApproxF1,      // max token F1 against the references >= threshold
  kApproxScorer,  // scorer(candidate, reference) >= threshold for some reference
};

struct AdmissionFunction {
  AdmissionKind kind = AdmissionKind::kExactLabels;
  double threshold = 0.5;
  lexical::NormalizationProfile profile = lexical::NormalizationProfile::simple();
  scoring::EquivalenceScorer* scorer = nullptr;

  bool approximate() const {
    return kind == AdmissionKind::kApproxF1 || kind == AdmissionKind::kApproxScorer;
  }
  std::string name() const;
};

// admitted[q][j]: candidate j of question q is admissible.
using AdmissionTable = std::vector<std::vector<bool>>;

// Scorer queries carry the id "<question_id>/<rank>/<reference index>".
AdmissionTable admission_table(std::span<const ConformalQuestion> questions,
                               const AdmissionFunction& admission);

// Negated model score. Throws ValidationError on a non-finite score.
double nonconformity(double score);

// Smallest nonconformity among admitted candidates, +inf when none is admitted.
double calibration_score(std::span<const ScoredCandidate> candidates,
                         const std::vector<bool>& admitted);

struct CalibrationModel {
  std::vector<double> scores;  // ascending; may end in +inf entries
  double correction = 1.0;     // in (0, 1]; 1 for exact admission

  std::size_t n() const { return scores.size(); }
};

CalibrationModel make_calibration_model(std::vector<double> scores, double correction = 1.0);

// (1 + #{i : calibration_i >= s}) / (n + 1); `sorted_calibration` ascending.
double p_value(double s, std::span<const double> sorted_calibration);

// Indices (in rank order) of candidates whose p-value divided by the
// correction exceeds 1 - target.
std::vector<std::size_t> predict_set_indices(std::span<const ScoredCandidate> candidates,
                                             const CalibrationModel& model, double target);

std::vector<std::string> predict_set(const ScoredCandidateSet& set, const CalibrationModel& model,
                                     double target);

// Admission outcome of a holdout question's top-ranked candidate.
struct TopAdmission {
  bool approximate = false;
  bool exact = false;
};

struct CorrectionEstimate {
  std::size_t accepted = 0;  // top answers accepted by the approximate admission
  std::size_t errors = 0;    // ... of which the exact admission rejects
  double empirical_fpr = 0.0;
  double fpr_upper_bound = 0.0;  // one-sided Clopper-Pearson at 1 - gamma
  double correction = 1.0;       // 1 - fpr_upper_bound
};

// Throws ValidationError when no top answer in the holdout is accepted.
CorrectionEstimate estimate_correction(std::span<const TopAdmission> holdout, double gamma);

struct TrialConfig {
  std::size_t trials = 50;
  double calib_fraction = 0.8;
  double holdout_fraction = 0.1;  // of the calibration split; approximate admission only
  double gamma = 0.01;
  std::uint64_t seed = 0;
};

struct CalibrationRow {
  double target = 0.0;
  double mean_size = 0.0;
  double p16_size = 0.0;
  double p84_size = 0.0;
  double empirical_accuracy = 0.0;
};

struct CalibrationResult {
  std::string admission;
  std::vector<CalibrationRow> rows;  // one per target, in input order
  std::size_t n_trials = 0;
  std::vector<CorrectionEstimate> corrections;  // per trial; empty for exact admission
};

// Runs `config.trials` random calibration/test partitions. The partition of
// trial t depends only on (seed, t) and the number of questions, so two
// admissions evaluated with the same config see identical splits. Test sets
// are judged against `exact` regardless of the calibrating admission.
CalibrationResult run_trials(std::span<const ConformalQuestion> questions,
                             const AdmissionTable& calibrating, bool approximate,
                             const AdmissionTable& exact, std::span<const double> targets,
                             const TrialConfig& config, std::string admission_name = {});

}  // namespace aequiv::conformal
