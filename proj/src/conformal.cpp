#include "aequiv/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "aequiv/error.hpp"
#include "aequiv/parallel.hpp"
#include "aequiv/rng.hpp"
#include "aequiv/stats.hpp"

namespace aequiv::conformal {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<std::string> string_array(const nlohmann::json& record, std::string_view key,
                                      const std::string& what, bool required) {
  std::vector<std::string> out;
  auto it = record.find(key);
  if (it == record.end() || it->is_null()) {
    if (required) throw ValidationError(what + ": missing '" + std::string(key) + "'");
    return out;
  }
  if (!it->is_array()) throw ValidationError(what + ": '" + std::string(key) + "' must be an array");
  for (const auto& v : *it) {
    if (!v.is_string()) throw ValidationError(what + ": '" + std::string(key) + "' holds a non-string");
    out.push_back(v.get<std::string>());
  }
  return out;
}

// Sets are compared against `1 - target` scaled by (n + 1), with a relative
// slack so that a target typed as 0.9 behaves like the exact decimal instead
// of its binary rounding (1 - 0.9 = 0.09999999999999998).
bool exceeds_level(std::size_t count_at_least, std::size_t n, double correction, double target) {
  const double lhs = static_cast<double>(count_at_least + 1) / correction;
  const double rhs = (1.0 - target) * static_cast<double>(n + 1);
  return lhs > rhs + 1e-9 * std::max(1.0, rhs);
}

std::size_t count_at_least(double s, std::span<const double> sorted) {
  return static_cast<std::size_t>(sorted.end() - std::lower_bound(sorted.begin(), sorted.end(), s));
}

void check_target(double target) {
  if (!(target > 0.0 && target < 1.0)) {
    throw UsageError("target accuracy must lie strictly between 0 and 1");
  }
}

void check_model(const CalibrationModel& model) {
  if (model.scores.empty()) throw ValidationError("empty calibration model");
  if (!(model.correction > 0.0 && model.correction <= 1.0)) {
    throw ValidationError("calibration correction must lie in (0, 1]; got " +
                          std::to_string(model.correction));
  }
}

}  // namespace

std::vector<AdmissionLabels> load_admission_labels(const std::filesystem::path& path) {
  std::vector<AdmissionLabels> out;
  for_each_jsonl(path, [&](const nlohmann::json& record, std::size_t) {
    if (!record.is_object() || !record.contains("question_id")) {
      throw ValidationError("label record needs question_id");
    }
    AdmissionLabels labels;
    const auto& id = record["question_id"];
    labels.question_id = id.is_string() ? id.get<std::string>() : id.dump();
    const std::string what = "question '" + labels.question_id + "'";
    labels.admitted_answers = string_array(record, "admitted_answer_texts", what, true);
    labels.references = string_array(record, "references", what, false);
    out.push_back(std::move(labels));
  });
  return out;
}

std::vector<ConformalQuestion> join_questions(std::vector<ScoredCandidateSet> sets,
                                              std::span<const AdmissionLabels> labels) {
  std::unordered_map<std::string_view, const AdmissionLabels*> by_id;
  for (const auto& l : labels) {
    if (!by_id.emplace(l.question_id, &l).second) {
      throw ValidationError("duplicate labels for question '" + l.question_id + "'");
    }
  }
  std::vector<ConformalQuestion> out;
  out.reserve(sets.size());
  for (auto& set : sets) {
    auto it = by_id.find(set.question_id);
    if (it == by_id.end()) {
      throw ValidationError("no admission labels for question '" + set.question_id + "'");
    }
    ConformalQuestion q;
    q.references = it->second->references;
    q.admitted_answers = it->second->admitted_answers;
    q.candidates = std::move(set);
    out.push_back(std::move(q));
  }
  return out;
}

std::string AdmissionFunction::name() const {
  std::ostringstream out;
  switch (kind) {
    case AdmissionKind::kExactLabels: return "ae";
    case AdmissionKind::kSquadOnly: return "squad";
    case AdmissionKind::kApproxF1: out << "f1>=" << threshold; break;
    case AdmissionKind::kApproxScorer:
      out << (scorer != nullptr ? scorer->name() : "scorer") << ">=" << threshold;
      break;
  }
  return out.str();
}

AdmissionTable admission_table(std::span<const ConformalQuestion> questions,
                               const AdmissionFunction& admission) {
  if (admission.kind == AdmissionKind::kApproxScorer && admission.scorer == nullptr) {
    throw UsageError("scorer admission without a scorer");
  }
  AdmissionTable table(questions.size());
  std::vector<scoring::ScoreQuery> queries;
  std::vector<std::pair<std::size_t, std::size_t>> owner;
  for (std::size_t q = 0; q < questions.size(); ++q) {
    const auto& question = questions[q];
    const auto& cands = question.candidates.candidates;
    table[q].assign(cands.size(), false);
    for (std::size_t j = 0; j < cands.size(); ++j) {
      const std::string& text = cands[j].text;
      const bool em = !question.references.empty() &&
                      lexical::exact_match(text, question.references, admission.profile);
      switch (admission.kind) {
        case AdmissionKind::kSquadOnly:
          table[q][j] = em;
          break;
        case AdmissionKind::kExactLabels:
          table[q][j] = em || (!question.admitted_answers.empty() &&
                               lexical::exact_match(text, question.admitted_answers,
                                                    admission.profile));
          break;
        case AdmissionKind::kApproxF1:
          table[q][j] = !question.references.empty() &&
                        lexical::max_token_f1(text, question.references, admission.profile) >=
                            admission.threshold;
          break;
        case AdmissionKind::kApproxScorer:
          table[q][j] = em;
          if (em) break;
          for (std::size_t r = 0; r < question.references.size(); ++r) {
            queries.push_back({question.candidates.question_id + "/" + std::to_string(j) + "/" +
                                   std::to_string(r),
                               question.candidates.question, question.references[r], text});
            owner.emplace_back(q, j);
          }
          break;
      }
    }
  }
  if (!queries.empty()) {
    const auto scores = admission.scorer->score_batch(queries);
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (scores[i] >= admission.threshold) table[owner[i].first][owner[i].second] = true;
    }
  }
  return table;
}

double nonconformity(double score) {
  if (!std::isfinite(score)) throw ValidationError("nonconformity of a non-finite score");
  return -score;
}

double calibration_score(std::span<const ScoredCandidate> candidates,
                         const std::vector<bool>& admitted) {
  if (admitted.size() != candidates.size()) {
    throw ValidationError("admission vector does not match the candidate list");
  }
  double best = kInf;
  for (std::size_t j = 0; j < candidates.size(); ++j) {
    if (admitted[j]) best = std::min(best, nonconformity(candidates[j].score));
  }
  return best;
}

CalibrationModel make_calibration_model(std::vector<double> scores, double correction) {
  std::sort(scores.begin(), scores.end());
  CalibrationModel model{std::move(scores), correction};
  check_model(model);
  return model;
}

double p_value(double s, std::span<const double> sorted_calibration) {
  if (sorted_calibration.empty()) throw ValidationError("p_value: empty calibration scores");
  return static_cast<double>(count_at_least(s, sorted_calibration) + 1) /
         static_cast<double>(sorted_calibration.size() + 1);
}

std::vector<std::size_t> predict_set_indices(std::span<const ScoredCandidate> candidates,
                                             const CalibrationModel& model, double target) {
  check_target(target);
  check_model(model);
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < candidates.size(); ++j) {
    const std::size_t c = count_at_least(nonconformity(candidates[j].score), model.scores);
    if (exceeds_level(c, model.n(), model.correction, target)) out.push_back(j);
  }
  return out;
}

std::vector<std::string> predict_set(const ScoredCandidateSet& set, const CalibrationModel& model,
                                     double target) {
  std::vector<std::string> out;
  for (std::size_t j : predict_set_indices(set.candidates, model, target)) {
    out.push_back(set.candidates[j].text);
  }
  return out;
}

CorrectionEstimate estimate_correction(std::span<const TopAdmission> holdout, double gamma) {
  if (holdout.empty()) throw ValidationError("correction holdout is empty");
  CorrectionEstimate est;
  for (const auto& h : holdout) {
    if (!h.approximate) continue;
    ++est.accepted;
    if (!h.exact) ++est.errors;
  }
  if (est.accepted == 0) {
    throw ValidationError(
        "cannot estimate the admission error rate: no top answer in the holdout was accepted");
  }
  est.empirical_fpr = static_cast<double>(est.errors) / static_cast<double>(est.accepted);
  est.fpr_upper_bound = stats::clopper_pearson_upper(est.errors, est.accepted, gamma);
  est.correction = 1.0 - est.fpr_upper_bound;
  return est;
}

CalibrationResult run_trials(std::span<const ConformalQuestion> questions,
                             const AdmissionTable& calibrating, bool approximate,
                             const AdmissionTable& exact, std::span<const double> targets,
                             const TrialConfig& config, std::string admission_name) {
  const std::size_t n = questions.size();
  if (n < 2) throw ValidationError("calibration needs at least two questions");
  if (calibrating.size() != n || exact.size() != n) {
    throw ValidationError("admission tables do not match the question list");
  }
  if (config.trials < 1) throw UsageError("need at least one trial");
  if (!(config.calib_fraction > 0.0 && config.calib_fraction < 1.0)) {
    throw UsageError("calibration fraction must lie in (0, 1)");
  }
  if (approximate && !(config.holdout_fraction > 0.0 && config.holdout_fraction < 1.0)) {
    throw UsageError("holdout fraction must lie in (0, 1)");
  }
  for (double t : targets) check_target(t);

  const auto n_calib = static_cast<std::size_t>(std::floor(config.calib_fraction * static_cast<double>(n)));
  if (n_calib == 0) throw ValidationError("calibration partition is empty");
  if (n_calib >= n) throw ValidationError("test partition is empty");
  std::size_t n_holdout = 0;
  if (approximate) {
    n_holdout = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::floor(config.holdout_fraction * static_cast<double>(n_calib))));
    if (n_holdout >= n_calib) throw ValidationError("calibration partition is empty after the holdout");
  }

  // Calibration scores do not depend on the partition.
  std::vector<double> question_scores(n);
  for (std::size_t q = 0; q < n; ++q) {
    question_scores[q] = calibration_score(questions[q].candidates.candidates, calibrating[q]);
  }

  struct TrialOutcome {
    std::vector<double> mean_size;  // per target
    std::vector<double> accuracy;   // per target
    CorrectionEstimate correction;
  };
  std::vector<TrialOutcome> outcomes(config.trials);
  parallel_for(config.trials, [&](std::size_t t) {
    Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(t)));
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    shuffle(perm.begin(), perm.end(), rng);

    TrialOutcome& out = outcomes[t];
    double correction = 1.0;
    if (approximate) {
      std::vector<TopAdmission> holdout;
      holdout.reserve(n_holdout);
      for (std::size_t i = 0; i < n_holdout; ++i) {
        const std::size_t q = perm[i];
        holdout.push_back({!calibrating[q].empty() && calibrating[q][0],
                           !exact[q].empty() && exact[q][0]});
      }
      out.correction = estimate_correction(holdout, config.gamma);
      correction = out.correction.correction;
    }
    std::vector<double> calib;
    calib.reserve(n_calib - n_holdout);
    for (std::size_t i = n_holdout; i < n_calib; ++i) calib.push_back(question_scores[perm[i]]);
    const CalibrationModel model = make_calibration_model(std::move(calib), correction);

    const std::size_t n_test = n - n_calib;
    out.mean_size.assign(targets.size(), 0.0);
    out.accuracy.assign(targets.size(), 0.0);
    for (std::size_t i = n_calib; i < n; ++i) {
      const std::size_t q = perm[i];
      const auto& cands = questions[q].candidates.candidates;
      for (std::size_t a = 0; a < targets.size(); ++a) {
        const auto set = predict_set_indices(cands, model, targets[a]);
        out.mean_size[a] += static_cast<double>(set.size());
        const bool covered =
            std::any_of(set.begin(), set.end(), [&](std::size_t j) { return exact[q][j]; });
        if (covered) out.accuracy[a] += 1.0;
      }
    }
    for (std::size_t a = 0; a < targets.size(); ++a) {
      out.mean_size[a] /= static_cast<double>(n_test);
      out.accuracy[a] /= static_cast<double>(n_test);
    }
  });

  CalibrationResult result;
  result.admission = std::move(admission_name);
  result.n_trials = config.trials;
  if (approximate) {
    for (const auto& o : outcomes) result.corrections.push_back(o.correction);
  }
  for (std::size_t a = 0; a < targets.size(); ++a) {
    std::vector<double> sizes, accs;
    for (const auto& o : outcomes) {
      sizes.push_back(o.mean_size[a]);
      accs.push_back(o.accuracy[a]);
    }
    CalibrationRow row;
    row.target = targets[a];
    row.mean_size = stats::mean(sizes);
    row.empirical_accuracy = stats::mean(accs);
    std::sort(sizes.begin(), sizes.end());
    row.p16_size = stats::percentile_sorted(sizes, 0.16);
    row.p84_size = stats::percentile_sorted(sizes, 0.84);
    result.rows.push_back(row);
  }
  return result;
}

}  // namespace aequiv::conformal
