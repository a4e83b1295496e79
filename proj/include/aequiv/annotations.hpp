#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "aequiv/dataset.hpp"
#include "aequiv/lexical.hpp"
#include "aequiv/rng.hpp"

namespace aequiv::annotations {

enum class EquivalenceLabel {
  kEquivalent,
  kNotEquivalentDifferent,
  kNotEquivalentDegraded,
};

std::string_view to_string(EquivalenceLabel label);

constexpr bool is_equivalent(EquivalenceLabel label) {
  return label == EquivalenceLabel::kEquivalent;
}

// Equivalent iff Q1 = no and Q2 = yes; Q1 = yes is "completely different";
// anything else is a degraded answer. Throws ValidationError when the rating
// violates the skip logic.
EquivalenceLabel derive_label(const RatingVector& rating);

// Majority vote on the binary projection. An exact tie consumes one draw from
// `rng`; no draw happens otherwise. For a non-equivalent outcome the subclass
// is the majority among the non-equivalent ratings, ties going to
// kNotEquivalentDifferent.
EquivalenceLabel aggregate(std::span<const RatingVector> ratings, Rng& rng);

// Aggregates every example with at least one rating. Each example draws from
// its own stream derived from `seed` and its example_id, so a label does not
// depend on which other examples were loaded. Unrated examples map to nullopt.
std::vector<std::optional<EquivalenceLabel>> aggregate_labels(
    std::span<const AEExample> examples, std::uint64_t seed);

struct AgreementReport {
  double pairwise_agreement = 0.0;
  double full_agreement_rate = 0.0;
  double krippendorff_alpha = 0.0;
  std::size_t n_multi_rated = 0;
};

// Statistics over units (examples) with at least two binary ratings; other
// units are ignored. Pairwise agreement is the mean, over multi-rated units,
// of the fraction of agreeing unordered rating pairs. Alpha is the nominal
// Krippendorff coefficient; it is 1 when every rating carries the same value.
// Throws ValidationError when no unit has two ratings.
AgreementReport agreement_from_units(std::span<const std::vector<bool>> units);

AgreementReport agreement_stats(std::span<const AEExample> examples);

struct HistogramBin {
  double f1_lower = 0.0;
  double f1_upper = 0.0;
  std::size_t count_equivalent = 0;
  std::size_t count_different = 0;
  std::size_t count_degraded = 0;

  std::size_t total() const { return count_equivalent + count_different + count_degraded; }
};

struct HistogramReport {
  std::vector<HistogramBin> bins;
};

inline constexpr std::size_t kDefaultBinCount = 10;

// Bin index for a value in [0, 1]; bins are [lo, hi) except the last, which
// is closed.
std::size_t bin_index(double f1, std::size_t bin_count);

// `labels[i]` is the aggregated label of `examples[i]`.
HistogramReport f1_histogram(std::span<const AEExample> examples,
                             std::span<const EquivalenceLabel> labels,
                             std::size_t bin_count = kDefaultBinCount,
                             const lexical::NormalizationProfile& profile =
                                 lexical::NormalizationProfile::simple());

}  // namespace aequiv::annotations
