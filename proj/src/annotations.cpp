#include "aequiv/annotations.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "aequiv/error.hpp"

namespace aequiv::annotations {

std::string_view to_string(EquivalenceLabel label) {
  switch (label) {
    case EquivalenceLabel::kEquivalent: return "equivalent";
    case EquivalenceLabel::kNotEquivalentDifferent: return "different";
    case EquivalenceLabel::kNotEquivalentDegraded: return "degraded";
  }
  return "different";
}

EquivalenceLabel derive_label(const RatingVector& rating) {
  if (!rating.satisfies_skip_logic()) {
    throw ValidationError("rating from '" + rating.rater_id + "' violates the skip logic");
  }
  if (rating.q1_completely_different) return EquivalenceLabel::kNotEquivalentDifferent;
  if (*rating.q2_interchangeable) return EquivalenceLabel::kEquivalent;
  return EquivalenceLabel::kNotEquivalentDegraded;
}

EquivalenceLabel aggregate(std::span<const RatingVector> ratings, Rng& rng) {
  if (ratings.empty()) throw ValidationError("aggregate: no ratings");
  std::size_t equivalent = 0, different = 0, degraded = 0;
  for (const auto& r : ratings) {
    switch (derive_label(r)) {
      case EquivalenceLabel::kEquivalent: ++equivalent; break;
      case EquivalenceLabel::kNotEquivalentDifferent: ++different; break;
      case EquivalenceLabel::kNotEquivalentDegraded: ++degraded; break;
    }
  }
  const std::size_t not_equivalent = different + degraded;
  bool wins = equivalent > not_equivalent;
  if (equivalent == not_equivalent) wins = (rng() & 1U) != 0;
  if (wins) return EquivalenceLabel::kEquivalent;
  return degraded > different ? EquivalenceLabel::kNotEquivalentDegraded
                              : EquivalenceLabel::kNotEquivalentDifferent;
}

std::vector<std::optional<EquivalenceLabel>> aggregate_labels(
    std::span<const AEExample> examples, std::uint64_t seed) {
  std::vector<std::optional<EquivalenceLabel>> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) {
    if (ex.ratings.empty()) {
      out.emplace_back();
      continue;
    }
    Rng rng(derive_seed(seed, ex.example_id));
    out.emplace_back(aggregate(ex.ratings, rng));
  }
  return out;
}

AgreementReport agreement_from_units(std::span<const std::vector<bool>> units) {
  auto ordered_pairs = [](std::size_t k) {
    return k < 2 ? 0.0 : static_cast<double>(k) * static_cast<double>(k - 1);
  };
  AgreementReport report;
  double pairwise_sum = 0.0;
  std::size_t unanimous = 0;
  // Coincidence matrix entries for the two values.
  double o00 = 0.0, o11 = 0.0, o01 = 0.0;
  for (const auto& unit : units) {
    const std::size_t m = unit.size();
    if (m < 2) continue;
    ++report.n_multi_rated;
    std::size_t ones = 0;
    for (bool v : unit) ones += v ? 1 : 0;
    const std::size_t zeros = m - ones;
    const double pairs = static_cast<double>(m * (m - 1)) / 2.0;
    const double agreeing = (ordered_pairs(ones) + ordered_pairs(zeros)) / 2.0;
    pairwise_sum += agreeing / pairs;
    if (ones == 0 || zeros == 0) ++unanimous;

    const double w = 1.0 / static_cast<double>(m - 1);
    o00 += w * ordered_pairs(zeros);
    o11 += w * ordered_pairs(ones);
    o01 += w * static_cast<double>(zeros * ones);
  }
  if (report.n_multi_rated == 0) {
    throw ValidationError("agreement: no example has two or more ratings");
  }
  const auto n_units = static_cast<double>(report.n_multi_rated);
  report.pairwise_agreement = pairwise_sum / n_units;
  report.full_agreement_rate = static_cast<double>(unanimous) / n_units;

  const double n0 = o00 + o01;
  const double n1 = o11 + o01;
  const double n = n0 + n1;
  const double expected_disagreement = 2.0 * n0 * n1;
  if (expected_disagreement == 0.0) {
    report.krippendorff_alpha = 1.0;
  } else {
    // alpha = 1 - D_o / D_e with D_o = 2 o01 / n and D_e = 2 n0 n1 / (n (n - 1)).
    report.krippendorff_alpha = 1.0 - (n - 1.0) * (2.0 * o01) / expected_disagreement;
  }
  return report;
}

AgreementReport agreement_stats(std::span<const AEExample> examples) {
  std::vector<std::vector<bool>> units;
  for (const auto& ex : examples) {
    if (ex.ratings.size() < 2) continue;
    std::vector<bool> unit;
    unit.reserve(ex.ratings.size());
    for (const auto& r : ex.ratings) unit.push_back(is_equivalent(derive_label(r)));
    units.push_back(std::move(unit));
  }
  return agreement_from_units(units);
}

std::size_t bin_index(double f1, std::size_t bin_count) {
  const auto bins = static_cast<double>(bin_count);
  auto lower = [&](std::size_t i) { return static_cast<double>(i) / bins; };
  auto idx = static_cast<std::size_t>(std::max(0.0, std::floor(f1 * bins)));
  if (idx >= bin_count) idx = bin_count - 1;
  // floor(f1 * bins) can land one bin off when the product rounds.
  while (idx > 0 && f1 < lower(idx)) --idx;
  while (idx + 1 < bin_count && f1 >= lower(idx + 1)) ++idx;
  return idx;
}

HistogramReport f1_histogram(std::span<const AEExample> examples,
                             std::span<const EquivalenceLabel> labels, std::size_t bin_count,
                             const lexical::NormalizationProfile& profile) {
  if (bin_count < 1) throw UsageError("histogram: bin_count must be at least 1");
  if (labels.size() != examples.size()) {
    throw ValidationError("histogram: every example needs an aggregated label");
  }
  HistogramReport report;
  report.bins.resize(bin_count);
  for (std::size_t i = 0; i < bin_count; ++i) {
    report.bins[i].f1_lower = static_cast<double>(i) / static_cast<double>(bin_count);
    report.bins[i].f1_upper = static_cast<double>(i + 1) / static_cast<double>(bin_count);
  }
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const double f1 = lexical::token_f1(examples[i].candidate, examples[i].reference, profile);
    auto& bin = report.bins[bin_index(f1, bin_count)];
    switch (labels[i]) {
      case EquivalenceLabel::kEquivalent: ++bin.count_equivalent; break;
      case EquivalenceLabel::kNotEquivalentDifferent: ++bin.count_different; break;
      case EquivalenceLabel::kNotEquivalentDegraded: ++bin.count_degraded; break;
    }
  }
  return report;
}

}  // namespace aequiv::annotations
