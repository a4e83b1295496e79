#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace aequiv::lexical {

struct NormalizationProfile {
  bool lowercase = true;
  bool strip_punctuation = true;
  bool remove_articles = false;

  // Lowercase + punctuation deletion. Reproduces the token F1 values
  // quoted for the worked examples (stop words are kept).
  static constexpr NormalizationProfile simple() { return {true, true, false}; }
  // simple() + dropping the articles a/an/the, as leaderboard scripts do.
  static constexpr NormalizationProfile squad_official() { return {true, true, true}; }

  friend constexpr bool operator==(const NormalizationProfile&,
                                   const NormalizationProfile&) = default;
};

std::optional<NormalizationProfile> profile_by_name(std::string_view name);
std::string_view profile_name(const NormalizationProfile& profile);

// Token multiset, stored sorted so that equal bags compare equal.
class TokenBag {
 public:
  TokenBag() = default;
  explicit TokenBag(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  bool empty() const { return tokens_.empty(); }
  const std::vector<std::string>& sorted_tokens() const { return tokens_; }

  // Size of the multiset intersection.
  std::size_t overlap(const TokenBag& other) const;

  friend bool operator==(const TokenBag&, const TokenBag&) = default;

 private:
  std::vector<std::string> tokens_;
};

// Ordered tokens after normalization. Punctuation code points (Unicode
// general category P*) are deleted in place, so "Napoleon's" -> "napoleons".
std::vector<std::string> normalized_tokens(std::string_view text,
                                           const NormalizationProfile& profile);

TokenBag normalize(std::string_view text, const NormalizationProfile& profile);

// Token sequence equality against any reference. `references` must be non-empty.
bool exact_match(std::string_view candidate, std::span<const std::string> references,
                 const NormalizationProfile& profile = NormalizationProfile::simple());

double token_f1(const TokenBag& candidate, const TokenBag& reference);
double token_f1(std::string_view candidate, std::string_view reference,
                const NormalizationProfile& profile = NormalizationProfile::simple());

// Maximum of token_f1 over the references. `references` must be non-empty.
double max_token_f1(std::string_view candidate, std::span<const std::string> references,
                    const NormalizationProfile& profile = NormalizationProfile::simple());

}  // namespace aequiv::lexical
