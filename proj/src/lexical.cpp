#include "aequiv/lexical.hpp"

#include <algorithm>

#include <unicode/uchar.h>
#include <unicode/utf8.h>

#include "aequiv/error.hpp"

namespace aequiv::lexical {
namespace {

constexpr UChar32 kEnDash = 0x2013;
constexpr UChar32 kEmDash = 0x2014;

bool is_punctuation(UChar32 c) { return u_ispunct(c) || c == kEnDash || c == kEmDash; }

bool is_article(std::string_view token) {
  return token == "a" || token == "an" || token == "the";
}

void append_utf8(std::string& out, UChar32 c) {
  char buf[U8_MAX_LENGTH];
  int32_t len = 0;
  UBool error = false;
  U8_APPEND(reinterpret_cast<uint8_t*>(buf), len, U8_MAX_LENGTH, c, error);
  if (!error) out.append(buf, static_cast<std::size_t>(len));
}

}  // namespace

std::optional<NormalizationProfile> profile_by_name(std::string_view name) {
  if (name == "simple") return NormalizationProfile::simple();
  if (name == "squad-official") return NormalizationProfile::squad_official();
  return std::nullopt;
}

std::string_view profile_name(const NormalizationProfile& profile) {
  if (profile == NormalizationProfile::simple()) return "simple";
  if (profile == NormalizationProfile::squad_official()) return "squad-official";
  return "custom";
}

TokenBag::TokenBag(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  std::sort(tokens_.begin(), tokens_.end());
}

std::size_t TokenBag::overlap(const TokenBag& other) const {
  std::size_t count = 0;
  auto a = tokens_.begin();
  auto b = other.tokens_.begin();
  while (a != tokens_.end() && b != other.tokens_.end()) {
    if (*a < *b) {
      ++a;
    } else if (*b < *a) {
      ++b;
    } else {
      ++count;
      ++a;
      ++b;
    }
  }
  return count;
}

std::vector<std::string> normalized_tokens(std::string_view text,
                                           const NormalizationProfile& profile) {
  std::vector<std::string> tokens;
  std::string current;
  const auto* bytes = reinterpret_cast<const uint8_t*>(text.data());
  const auto length = static_cast<int32_t>(text.size());
  int32_t i = 0;
  while (i < length) {
    const int32_t start = i;
    UChar32 c = 0;
    U8_NEXT(bytes, i, length, c);
    if (c < 0) {
      // Ill-formed byte sequence: keep the raw bytes as part of the token.
      current.append(text.substr(static_cast<std::size_t>(start),
                                 static_cast<std::size_t>(i - start)));
      continue;
    }
    if (u_isUWhiteSpace(c)) {
      if (!current.empty()) tokens.push_back(std::move(current));
      current.clear();
      continue;
    }
    if (profile.strip_punctuation && is_punctuation(c)) continue;
    append_utf8(current, profile.lowercase ? u_tolower(c) : c);
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  if (profile.remove_articles) std::erase_if(tokens, is_article);
  return tokens;
}

TokenBag normalize(std::string_view text, const NormalizationProfile& profile) {
  return TokenBag(normalized_tokens(text, profile));
}

bool exact_match(std::string_view candidate, std::span<const std::string> references,
                 const NormalizationProfile& profile) {
  if (references.empty()) throw ValidationError("exact_match: empty reference set");
  const auto cand = normalized_tokens(candidate, profile);
  return std::any_of(references.begin(), references.end(), [&](const std::string& ref) {
    return normalized_tokens(ref, profile) == cand;
  });
}

double token_f1(const TokenBag& candidate, const TokenBag& reference) {
  if (candidate.empty() && reference.empty()) return 1.0;
  const std::size_t common = candidate.overlap(reference);
  if (common == 0) return 0.0;
  // 2PR/(P+R) with P = common/|c|, R = common/|r|, as a single division.
  return 2.0 * static_cast<double>(common) /
         static_cast<double>(candidate.size() + reference.size());
}

double token_f1(std::string_view candidate, std::string_view reference,
                const NormalizationProfile& profile) {
  return token_f1(normalize(candidate, profile), normalize(reference, profile));
}

double max_token_f1(std::string_view candidate, std::span<const std::string> references,
                    const NormalizationProfile& profile) {
  if (references.empty()) throw ValidationError("max_token_f1: empty reference set");
  const TokenBag cand = normalize(candidate, profile);
  double best = 0.0;
  for (const auto& ref : references) {
    best = std::max(best, token_f1(cand, normalize(ref, profile)));
  }
  return best;
}

}  // namespace aequiv::lexical
