#include "aequiv/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "aequiv/error.hpp"
#include "aequiv/stats.hpp"

namespace aequiv::scoring {
namespace {

void check_lengths(std::size_t scores, std::size_t labels) {
  if (scores != labels) throw ValidationError("scores and labels differ in length");
  if (scores == 0) throw ValidationError("no labeled examples");
}

}  // namespace

std::vector<double> LexicalF1Scorer::score_batch(std::span<const ScoreQuery> queries) {
  std::vector<double> out;
  out.reserve(queries.size());
  for (const auto& q : queries) out.push_back(lexical::token_f1(q.candidate, q.reference, profile_));
  return out;
}

std::vector<double> ExactMatchScorer::score_batch(std::span<const ScoreQuery> queries) {
  std::vector<double> out;
  out.reserve(queries.size());
  for (const auto& q : queries) {
    const bool em = lexical::normalized_tokens(q.candidate, profile_) ==
                    lexical::normalized_tokens(q.reference, profile_);
    out.push_back(em ? 1.0 : 0.0);
  }
  return out;
}

ScoreFileScorer ScoreFileScorer::load(const std::filesystem::path& path) {
  std::unordered_map<std::string, double> scores;
  for_each_jsonl(path, [&](const nlohmann::json& record, std::size_t) {
    if (!record.is_object() || !record.contains("example_id") || !record.contains("score")) {
      throw ValidationError("score record needs example_id and score");
    }
    const auto& id_field = record["example_id"];
    const std::string id =
        id_field.is_string() ? id_field.get<std::string>() : id_field.dump();
    if (!record["score"].is_number()) {
      throw ValidationError("score for '" + id + "' is not a number");
    }
    const double s = record["score"].get<double>();
    if (!std::isfinite(s) || s < 0.0 || s > 1.0) {
      throw ValidationError("score for '" + id + "' is outside [0, 1]");
    }
    if (!scores.emplace(id, s).second) {
      throw ValidationError("duplicate score for '" + id + "'");
    }
  });
  return ScoreFileScorer(std::move(scores), path.filename().string());
}

std::vector<double> ScoreFileScorer::score_batch(std::span<const ScoreQuery> queries) {
  std::vector<double> out;
  out.reserve(queries.size());
  for (const auto& q : queries) {
    auto it = scores_.find(q.id);
    if (it == scores_.end()) {
      throw ValidationError("score file " + source_ + " has no entry for '" + q.id + "'");
    }
    out.push_back(it->second);
  }
  return out;
}

std::vector<double> RemoteBridgeScorer::score_batch(std::span<const ScoreQuery> queries) {
  std::vector<bridge::ScoreRequest> requests;
  requests.reserve(queries.size());
  for (const auto& q : queries) requests.push_back({q.id, q.question, q.reference, q.candidate});
  return bridge::exchange(*transport_, requests, batch_size_);
}

std::vector<double> SymmetrizedScorer::score_batch(std::span<const ScoreQuery> queries) {
  std::vector<ScoreQuery> both(queries.begin(), queries.end());
  both.reserve(2 * queries.size());
  for (const auto& q : queries) both.push_back({q.id + "~rev", q.question, q.candidate, q.reference});
  const auto scores = inner_->score_batch(both);
  std::vector<double> out(queries.size());
  for (std::size_t i = 0; i < queries.size(); ++i) {
    out[i] = (scores[i] + scores[i + queries.size()]) / 2.0;
  }
  return out;
}

double accuracy_at(std::span<const double> scores, const std::vector<bool>& labels,
                   double threshold) {
  check_lengths(scores.size(), labels.size());
  std::size_t correct = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if ((scores[i] >= threshold) == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(scores.size());
}

double tune_threshold(std::span<const double> scores, const std::vector<bool>& labels) {
  check_lengths(scores.size(), labels.size());
  for (double s : scores) {
    if (!std::isfinite(s)) throw ValidationError("tune_threshold: non-finite score");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  std::vector<double> distinct;
  for (std::size_t i : order) {
    if (distinct.empty() || distinct.back() != scores[i]) distinct.push_back(scores[i]);
  }
  std::vector<double> thresholds{0.0, 1.0};
  for (std::size_t i = 0; i + 1 < distinct.size(); ++i) {
    thresholds.push_back((distinct[i] + distinct[i + 1]) / 2.0);
  }
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  const auto positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), true));
  // Sweep: items below the threshold are predicted negative.
  std::size_t below = 0, negatives_below = 0;
  std::size_t best_correct = 0;
  double best = thresholds.front();
  bool first = true;
  for (double t : thresholds) {
    while (below < order.size() && scores[order[below]] < t) {
      if (!labels[order[below]]) ++negatives_below;
      ++below;
    }
    const std::size_t positives_below = below - negatives_below;
    const std::size_t correct = (positives - positives_below) + negatives_below;
    if (first || correct > best_correct) {
      best_correct = correct;
      best = t;
      first = false;
    }
  }
  return best;
}

ClassifierReport classifier_report(std::span<const double> scores, const std::vector<bool>& labels,
                                   double threshold) {
  ClassifierReport report;
  report.accuracy = accuracy_at(scores, labels, threshold);
  report.threshold = threshold;
  report.n = scores.size();
  std::vector<double> numeric_labels(labels.begin(), labels.end());
  report.spearman_rho = stats::spearman_rho(scores, numeric_labels);
  if (!report.spearman_rho) {
    report.rho_error = "Spearman's rho is undefined for a constant score or label vector";
  }
  return report;
}

std::vector<SystemAccuracy> per_system_accuracy(std::span<const double> scores,
                                                const std::vector<bool>& labels,
                                                std::span<const SourceSystem> systems,
                                                double threshold) {
  check_lengths(scores.size(), labels.size());
  if (systems.size() != scores.size()) throw ValidationError("system list length mismatch");
  std::map<SourceSystem, std::pair<std::size_t, std::size_t>> tally;  // correct, total
  for (std::size_t i = 0; i < scores.size(); ++i) {
    auto& [correct, total] = tally[systems[i]];
    ++total;
    if ((scores[i] >= threshold) == labels[i]) ++correct;
  }
  std::vector<SystemAccuracy> out;
  for (const auto& [system, counts] : tally) {
    out.push_back({system, static_cast<double>(counts.first) / static_cast<double>(counts.second),
                   counts.second});
  }
  return out;
}

ScoreQuery query_for(const AEExample& example) {
  return {example.example_id, example.question, example.reference, example.candidate};
}

ClassifierReport classifier_report(const ThresholdedClassifier& classifier,
                                   std::span<const AEExample> examples,
                                   const std::vector<bool>& labels) {
  if (classifier.scorer == nullptr) throw UsageError("classifier without a scorer");
  std::vector<ScoreQuery> queries;
  queries.reserve(examples.size());
  for (const auto& ex : examples) queries.push_back(query_for(ex));
  const auto scores = classifier.scorer->score_batch(queries);
  return classifier_report(scores, labels, classifier.threshold);
}

}  // namespace aequiv::scoring
