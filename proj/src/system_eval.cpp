#include "aequiv/system_eval.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_map>

#include "aequiv/error.hpp"
#include "aequiv/parallel.hpp"
#include "aequiv/rng.hpp"
#include "aequiv/stats.hpp"

namespace aequiv::system_eval {
namespace {

std::string joined_tokens(std::string_view text) {
  std::string out;
  for (const auto& t : lexical::normalized_tokens(text, lexical::NormalizationProfile::simple())) {
    if (!out.empty()) out.push_back(' ');
    out += t;
  }
  return out;
}

}  // namespace

std::vector<SystemPrediction> load_predictions(const std::filesystem::path& path) {
  std::vector<SystemPrediction> out;
  std::unordered_set<std::string> seen;
  for_each_jsonl(path, [&](const nlohmann::json& record, std::size_t) {
    if (!record.is_object() || !record.contains("question_id") || !record.contains("answer")) {
      throw ValidationError("prediction record needs question_id and answer");
    }
    SystemPrediction p;
    const auto& id = record["question_id"];
    p.question_id = id.is_string() ? id.get<std::string>() : id.dump();
    if (!record["answer"].is_string()) {
      throw ValidationError("answer for '" + p.question_id + "' is not a string");
    }
    p.answer = record["answer"].get<std::string>();
    if (!seen.insert(p.question_id).second) {
      throw ValidationError("more than one prediction for question '" + p.question_id + "'");
    }
    out.push_back(std::move(p));
  });
  return out;
}

HumanLabels::HumanLabels(std::span<const AEExample> examples,
                         std::span<const std::optional<annotations::EquivalenceLabel>> labels) {
  if (examples.size() != labels.size()) throw ValidationError("label count mismatch");
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (labels[i] && annotations::is_equivalent(*labels[i])) {
      equivalent_.insert(key(examples[i].question, examples[i].reference, examples[i].candidate));
    }
  }
}

std::string HumanLabels::key(std::string_view question, std::string_view reference,
                             std::string_view candidate) {
  std::string k = joined_tokens(question);
  k.push_back('\x1f');
  k += joined_tokens(reference);
  k.push_back('\x1f');
  k += joined_tokens(candidate);
  return k;
}

bool HumanLabels::accepts(std::string_view question, std::string_view reference,
                          std::string_view candidate) const {
  return equivalent_.contains(key(question, reference, candidate));
}

std::string EquivalenceFn::name() const {
  std::ostringstream out;
  switch (kind) {
    case MetricKind::kExactMatch: return "EM";
    case MetricKind::kHuman: return "Human";
    case MetricKind::kF1: out << "F1"; break;
    case MetricKind::kScorer: out << (scorer != nullptr ? scorer->name() : "scorer"); break;
  }
  if (aggregation == Aggregation::kThresholded) out << ">=" << threshold;
  return out.str();
}

std::vector<double> per_question_values(std::span<const SystemPrediction> predictions,
                                        std::span<const ReferenceSet> reference_sets,
                                        const EquivalenceFn& fn, std::size_t max_references) {
  if (max_references == 0) throw UsageError("reference count must be at least 1");
  if (fn.kind == MetricKind::kScorer && fn.scorer == nullptr) {
    throw UsageError("scorer metric without a scorer");
  }
  if (fn.kind == MetricKind::kHuman && fn.human == nullptr) {
    throw UsageError("human metric without AE labels");
  }
  std::unordered_map<std::string_view, const ReferenceSet*> by_id;
  for (const auto& rs : reference_sets) by_id.emplace(rs.question_id, &rs);

  const std::size_t n = predictions.size();
  std::vector<double> values(n, 0.0);
  std::vector<std::span<const std::string>> refs(n);
  std::vector<const ReferenceSet*> sets(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto it = by_id.find(predictions[i].question_id);
    if (it == by_id.end()) {
      throw ValidationError("no reference set for question '" + predictions[i].question_id + "'");
    }
    sets[i] = it->second;
    const auto& all = it->second->references;
    refs[i] = std::span<const std::string>(all).first(std::min(max_references, all.size()));
  }

  std::vector<bool> exact(n);
  for (std::size_t i = 0; i < n; ++i) {
    exact[i] = lexical::exact_match(predictions[i].answer, refs[i], fn.profile);
  }

  auto settle = [&](double score) {
    return fn.aggregation == Aggregation::kMeanScore ? score
                                                     : (score >= fn.threshold ? 1.0 : 0.0);
  };

  switch (fn.kind) {
    case MetricKind::kExactMatch:
      for (std::size_t i = 0; i < n; ++i) values[i] = exact[i] ? 1.0 : 0.0;
      break;
    case MetricKind::kF1:
      for (std::size_t i = 0; i < n; ++i) {
        values[i] = exact[i] ? 1.0
                             : settle(lexical::max_token_f1(predictions[i].answer, refs[i], fn.profile));
      }
      break;
    case MetricKind::kHuman:
      for (std::size_t i = 0; i < n; ++i) {
        bool ok = exact[i];
        for (const auto& r : refs[i]) {
          if (ok) break;
          ok = fn.human->accepts(sets[i]->question, r, predictions[i].answer);
        }
        values[i] = ok ? 1.0 : 0.0;
      }
      break;
    case MetricKind::kScorer: {
      std::vector<scoring::ScoreQuery> queries;
      std::vector<std::size_t> owner;
      for (std::size_t i = 0; i < n; ++i) {
        if (exact[i]) continue;
        for (std::size_t r = 0; r < refs[i].size(); ++r) {
          queries.push_back({predictions[i].question_id + "/" + std::to_string(r),
                             sets[i]->question, refs[i][r], predictions[i].answer});
          owner.push_back(i);
        }
      }
      const auto scores = queries.empty() ? std::vector<double>{} : fn.scorer->score_batch(queries);
      std::vector<double> best(n, 0.0);
      for (std::size_t q = 0; q < scores.size(); ++q) {
        best[owner[q]] = std::max(best[owner[q]], scores[q]);
      }
      for (std::size_t i = 0; i < n; ++i) values[i] = exact[i] ? 1.0 : settle(best[i]);
      break;
    }
  }
  return values;
}

double system_accuracy(std::span<const SystemPrediction> predictions,
                       std::span<const ReferenceSet> reference_sets, const EquivalenceFn& fn) {
  if (predictions.empty()) throw ValidationError("no predictions");
  return stats::mean(per_question_values(predictions, reference_sets, fn));
}

AccuracyReport bootstrap_ci(std::span<const double> per_question, const BootstrapConfig& config,
                            std::string metric) {
  if (per_question.empty()) throw ValidationError("bootstrap: empty input");
  if (config.resamples < 1) throw UsageError("bootstrap: need at least one resample");
  if (!(config.level > 0.0 && config.level < 1.0)) {
    throw UsageError("bootstrap: level must lie in (0, 1)");
  }
  const std::size_t n = per_question.size();
  std::vector<double> means(config.resamples);
  parallel_for(config.resamples, [&](std::size_t b) {
    Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(b)));
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += per_question[uniform_index(rng, n)];
    means[b] = sum / static_cast<double>(n);
  });
  std::sort(means.begin(), means.end());
  const double tail = (1.0 - config.level) / 2.0;

  AccuracyReport report;
  report.metric = std::move(metric);
  report.estimate = 100.0 * stats::mean(per_question);
  report.ci_lower = 100.0 * stats::percentile_sorted(means, tail);
  report.ci_upper = 100.0 * stats::percentile_sorted(means, 1.0 - tail);
  report.ci_half_width = (report.ci_upper - report.ci_lower) / 2.0;
  report.standard_error = 100.0 * stats::stddev(means);
  report.n_questions = n;
  report.n_bootstrap = config.resamples;
  report.confidence_level = config.level;
  return report;
}

AccuracyReport reference_ablation(std::span<const SystemPrediction> predictions,
                                  std::span<const ReferenceSet> reference_sets,
                                  const EquivalenceFn& fn, std::size_t k,
                                  const BootstrapConfig& config) {
  const auto values = per_question_values(predictions, reference_sets, fn, k);
  std::string metric = fn.name();
  metric += k == kAllReferences ? "@all" : "@" + std::to_string(k);
  return bootstrap_ci(values, config, std::move(metric));
}

}  // namespace aequiv::system_eval
