#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace aequiv {

enum class SourceSystem { kXLNet, kBiDAF, kLuke, kAlbertTrain, kOther };
enum class Split { kTrain, kDev, kTest };

std::string_view to_string(SourceSystem system);
std::string_view to_string(Split split);
// Case-insensitive; '_' and '-' are ignored ("albert_train" == "AlbertTrain").
std::optional<SourceSystem> parse_source_system(std::string_view name);
std::optional<Split> parse_split(std::string_view name);

// One rater's answers to the four rating questions. Q2..Q4 are only shown
// when the earlier answers call for them.
struct RatingVector {
  bool q1_completely_different = false;
  std::optional<bool> q2_interchangeable;
  std::optional<bool> q3_removes_info;
  std::optional<bool> q4_adds_misleading;
  std::string rater_id;

  bool satisfies_skip_logic() const;
  friend bool operator==(const RatingVector&, const RatingVector&) = default;
};

struct AEExample {
  std::string example_id;
  std::string question;
  std::string context;
  std::string reference;
  std::string candidate;
  SourceSystem source_system = SourceSystem::kOther;
  Split split = Split::kDev;
  std::vector<RatingVector> ratings;

  friend bool operator==(const AEExample&, const AEExample&) = default;
};

// First entry is the "single reference" used by reference-count ablations.
struct ReferenceSet {
  static constexpr std::size_t kMaxReferences = 6;

  std::string question_id;
  std::string question;
  std::vector<std::string> references;
};

struct ScoredCandidate {
  std::string text;
  double score = 0.0;

  friend bool operator==(const ScoredCandidate&, const ScoredCandidate&) = default;
};

// Candidates are kept sorted by score, highest first.
struct ScoredCandidateSet {
  static constexpr std::size_t kDefaultMaxCandidates = 20;

  std::string question_id;
  std::string question;
  std::vector<ScoredCandidate> candidates;
};

// Maps canonical field names onto the names used by an upstream file.
// Unmapped fields are read under their canonical name.
struct IngestionAdapter {
  std::map<std::string, std::string, std::less<>> fields;
  std::map<std::string, std::string, std::less<>> rating_fields;
  // Upstream releases that store one rating per line repeat the example id;
  // with this set the ratings are merged into the first record.
  bool merge_ratings_by_id = false;

  std::string_view field(std::string_view canonical) const;
  std::string_view rating_field(std::string_view canonical) const;

  static IngestionAdapter identity() { return {}; }
};

IngestionAdapter load_adapter(const std::filesystem::path& path);

// Calls `fn(record, line_number)` for every non-blank line. Line numbers are
// 1-based. Throws IoError if the file cannot be opened and ValidationError
// naming the line when a line is not valid JSON.
void for_each_jsonl(const std::filesystem::path& path,
                    const std::function<void(const nlohmann::json&, std::size_t)>& fn);

AEExample validate_example(const nlohmann::json& record,
                           const IngestionAdapter& adapter = IngestionAdapter::identity());

std::vector<AEExample> load_ae_examples(
    const std::filesystem::path& path,
    const std::optional<std::vector<Split>>& split_filter = std::nullopt,
    const IngestionAdapter& adapter = IngestionAdapter::identity());

nlohmann::ordered_json to_json(const RatingVector& rating);
nlohmann::ordered_json to_json(const AEExample& example);
void write_ae_examples(std::ostream& out, std::span<const AEExample> examples);

// Sorts by score descending, collapses duplicate texts to their max score and
// keeps at most `max_candidates` entries.
ScoredCandidateSet parse_candidate_set(
    const nlohmann::json& record,
    std::size_t max_candidates = ScoredCandidateSet::kDefaultMaxCandidates);

std::vector<ScoredCandidateSet> load_candidate_sets(
    const std::filesystem::path& path,
    std::size_t max_candidates = ScoredCandidateSet::kDefaultMaxCandidates);

std::vector<ReferenceSet> load_reference_sets(const std::filesystem::path& path);

}  // namespace aequiv
