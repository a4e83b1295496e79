#include "aequiv/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <unordered_map>

#include "aequiv/error.hpp"

namespace aequiv {
namespace {

using json = nlohmann::json;

std::string fold_name(std::string_view name) {
  std::string out;
  out.reserve(name.size());
  for (char c : name) {
    if (c == '_' || c == '-' || c == ' ') continue;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(),
                     [](unsigned char c) { return std::isspace(c) != 0; });
}

const json* find_key(const json& obj, std::string_view key) {
  auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

std::string require_string(const json& obj, std::string_view key, std::string_view what) {
  const json* v = find_key(obj, key);
  if (v == nullptr || v->is_null()) {
    throw ValidationError(std::string(what) + ": missing field '" + std::string(key) + "'");
  }
  if (v->is_string()) return v->get<std::string>();
  if (v->is_number_integer()) return std::to_string(v->get<long long>());
  throw ValidationError(std::string(what) + ": field '" + std::string(key) +
                        "' must be a string");
}

std::string optional_string(const json& obj, std::string_view key) {
  const json* v = find_key(obj, key);
  if (v == nullptr || v->is_null()) return {};
  if (v->is_string()) return v->get<std::string>();
  if (v->is_number_integer()) return std::to_string(v->get<long long>());
  return v->dump();
}

// Absent key, null and "" all mean "question not asked".
std::optional<bool> read_answer(const json& obj, std::string_view key,
                                const std::string& what) {
  const json* v = find_key(obj, key);
  if (v == nullptr || v->is_null()) return std::nullopt;
  if (v->is_boolean()) return v->get<bool>();
  if (v->is_number_integer()) {
    auto n = v->get<long long>();
    if (n == 0 || n == 1) return n == 1;
  }
  if (v->is_string()) {
    const std::string s = fold_name(v->get<std::string>());
    if (s.empty()) return std::nullopt;
    if (s == "yes" || s == "true" || s == "y" || s == "1") return true;
    if (s == "no" || s == "false" || s == "n" || s == "0") return false;
  }
  throw ValidationError(what + ": field '" + std::string(key) + "' is not a yes/no answer: " +
                        v->dump());
}

RatingVector parse_rating(const json& obj, const IngestionAdapter& adapter,
                          const std::string& example_id) {
  const std::string what = "example '" + example_id + "'";
  if (!obj.is_object()) throw ValidationError(what + ": rating must be an object");
  RatingVector r;
  auto q1 = read_answer(obj, adapter.rating_field("q1_completely_different"), what);
  if (!q1) {
    throw ValidationError(what + ": rating is missing q1_completely_different");
  }
  r.q1_completely_different = *q1;
  r.q2_interchangeable = read_answer(obj, adapter.rating_field("q2_interchangeable"), what);
  r.q3_removes_info = read_answer(obj, adapter.rating_field("q3_removes_info"), what);
  r.q4_adds_misleading = read_answer(obj, adapter.rating_field("q4_adds_misleading"), what);
  r.rater_id = optional_string(obj, adapter.rating_field("rater_id"));
  if (!r.satisfies_skip_logic()) {
    throw ValidationError(what + ": rating violates the question skip logic");
  }
  return r;
}

template <typename T>
json optional_to_json(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

}  // namespace

std::string_view to_string(SourceSystem system) {
  switch (system) {
    case SourceSystem::kXLNet: return "XLNet";
    case SourceSystem::kBiDAF: return "BiDAF";
    case SourceSystem::kLuke: return "Luke";
    case SourceSystem::kAlbertTrain: return "AlbertTrain";
    case SourceSystem::kOther: return "Other";
  }
  return "Other";
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kDev: return "dev";
    case Split::kTest: return "test";
  }
  return "dev";
}

std::optional<SourceSystem> parse_source_system(std::string_view name) {
  const std::string f = fold_name(name);
  if (f == "xlnet") return SourceSystem::kXLNet;
  if (f == "bidaf") return SourceSystem::kBiDAF;
  if (f == "luke") return SourceSystem::kLuke;
  if (f == "alberttrain" || f == "albert") return SourceSystem::kAlbertTrain;
  if (f == "other") return SourceSystem::kOther;
  return std::nullopt;
}

std::optional<Split> parse_split(std::string_view name) {
  const std::string f = fold_name(name);
  if (f == "train") return Split::kTrain;
  if (f == "dev") return Split::kDev;
  if (f == "test") return Split::kTest;
  return std::nullopt;
}

bool RatingVector::satisfies_skip_logic() const {
  const bool q2 = q2_interchangeable.has_value();
  const bool q3 = q3_removes_info.has_value();
  const bool q4 = q4_adds_misleading.has_value();
  if (q1_completely_different) return !q2 && !q3 && !q4;
  if (!q2) return false;
  if (*q2_interchangeable) return !q3 && !q4;
  return q3 && q4;
}

std::string_view IngestionAdapter::field(std::string_view canonical) const {
  auto it = fields.find(canonical);
  return it == fields.end() ? canonical : std::string_view(it->second);
}

std::string_view IngestionAdapter::rating_field(std::string_view canonical) const {
  auto it = rating_fields.find(canonical);
  return it == rating_fields.end() ? canonical : std::string_view(it->second);
}

IngestionAdapter load_adapter(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open adapter config " + path.string());
  json cfg;
  try {
    in >> cfg;
  } catch (const json::parse_error& e) {
    throw ValidationError("adapter config " + path.string() + ": " + e.what());
  }
  IngestionAdapter adapter;
  auto read_map = [&](std::string_view key, auto& target) {
    if (const json* m = find_key(cfg, key)) {
      if (!m->is_object()) {
        throw ValidationError("adapter config: '" + std::string(key) + "' must be an object");
      }
      for (auto it = m->begin(); it != m->end(); ++it) {
        if (!it.value().is_string()) {
          throw ValidationError("adapter config: '" + std::string(key) + "." + it.key() +
                                "' must be a string");
        }
        target[it.key()] = it.value().template get<std::string>();
      }
    }
  };
  read_map("fields", adapter.fields);
  read_map("rating_fields", adapter.rating_fields);
  if (const json* m = find_key(cfg, "merge_ratings_by_id")) {
    adapter.merge_ratings_by_id = m->get<bool>();
  }
  return adapter;
}

void for_each_jsonl(const std::filesystem::path& path,
                    const std::function<void(const json&, std::size_t)>& fn) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank(line)) continue;
    json record;
    try {
      record = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                            ": malformed JSON: " + e.what());
    }
    try {
      fn(record, line_no);
    } catch (const ValidationError& e) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

AEExample validate_example(const json& record, const IngestionAdapter& adapter) {
  if (!record.is_object()) throw ValidationError("record is not a JSON object");
  AEExample ex;
  ex.example_id = require_string(record, adapter.field("example_id"), "record");
  const std::string what = "example '" + ex.example_id + "'";
  ex.question = optional_string(record, adapter.field("question"));
  ex.context = optional_string(record, adapter.field("context"));
  ex.reference = require_string(record, adapter.field("reference"), what);
  ex.candidate = require_string(record, adapter.field("candidate"), what);
  if (is_blank(ex.reference)) throw ValidationError(what + ": empty reference");
  if (is_blank(ex.candidate)) throw ValidationError(what + ": empty candidate");

  const std::string system = optional_string(record, adapter.field("source_system"));
  if (!system.empty()) {
    auto parsed = parse_source_system(system);
    if (!parsed) throw ValidationError(what + ": unknown source_system '" + system + "'");
    ex.source_system = *parsed;
  }
  const std::string split = require_string(record, adapter.field("split"), what);
  auto parsed_split = parse_split(split);
  if (!parsed_split) throw ValidationError(what + ": unknown split '" + split + "'");
  ex.split = *parsed_split;

  if (const json* ratings = find_key(record, adapter.field("ratings"));
      ratings != nullptr && !ratings->is_null()) {
    if (ratings->is_array()) {
      for (const auto& r : *ratings) ex.ratings.push_back(parse_rating(r, adapter, ex.example_id));
    } else {
      ex.ratings.push_back(parse_rating(*ratings, adapter, ex.example_id));
    }
  }
  return ex;
}

std::vector<AEExample> load_ae_examples(const std::filesystem::path& path,
                                        const std::optional<std::vector<Split>>& split_filter,
                                        const IngestionAdapter& adapter) {
  std::vector<AEExample> out;
  std::unordered_map<std::string, std::size_t> index;
  for_each_jsonl(path, [&](const json& record, std::size_t) {
    AEExample ex = validate_example(record, adapter);
    auto [it, inserted] = index.try_emplace(ex.example_id, out.size());
    if (!inserted) {
      if (!adapter.merge_ratings_by_id) {
        throw ValidationError("duplicate example_id '" + ex.example_id + "'");
      }
      auto& target = out[it->second].ratings;
      target.insert(target.end(), ex.ratings.begin(), ex.ratings.end());
      return;
    }
    out.push_back(std::move(ex));
  });
  if (split_filter) {
    std::erase_if(out, [&](const AEExample& ex) {
      return std::find(split_filter->begin(), split_filter->end(), ex.split) ==
             split_filter->end();
    });
  }
  return out;
}

nlohmann::ordered_json to_json(const RatingVector& rating) {
  nlohmann::ordered_json j;
  j["q1_completely_different"] = rating.q1_completely_different;
  j["q2_interchangeable"] = optional_to_json(rating.q2_interchangeable);
  j["q3_removes_info"] = optional_to_json(rating.q3_removes_info);
  j["q4_adds_misleading"] = optional_to_json(rating.q4_adds_misleading);
  j["rater_id"] = rating.rater_id;
  return j;
}

nlohmann::ordered_json to_json(const AEExample& example) {
  nlohmann::ordered_json j;
  j["example_id"] = example.example_id;
  j["question"] = example.question;
  j["context"] = example.context;
  j["reference"] = example.reference;
  j["candidate"] = example.candidate;
  j["source_system"] = to_string(example.source_system);
  j["split"] = to_string(example.split);
  j["ratings"] = nlohmann::ordered_json::array();
  for (const auto& r : example.ratings) j["ratings"].push_back(to_json(r));
  return j;
}

void write_ae_examples(std::ostream& out, std::span<const AEExample> examples) {
  for (const auto& ex : examples) out << to_json(ex).dump() << '\n';
}

ScoredCandidateSet parse_candidate_set(const json& record, std::size_t max_candidates) {
  if (!record.is_object()) throw ValidationError("candidate record is not a JSON object");
  ScoredCandidateSet set;
  set.question_id = require_string(record, "question_id", "candidate record");
  set.question = optional_string(record, "question");
  const std::string what = "question '" + set.question_id + "'";
  const json* cands = find_key(record, "candidates");
  if (cands == nullptr || !cands->is_array()) {
    throw ValidationError(what + ": 'candidates' must be an array");
  }

  std::vector<ScoredCandidate> raw;
  for (const auto& c : *cands) {
    ScoredCandidate sc;
    const json* score = nullptr;
    if (c.is_array() && c.size() == 2 && c[0].is_string()) {
      sc.text = c[0].get<std::string>();
      score = &c[1];
    } else if (c.is_object()) {
      sc.text = require_string(c, "text", what);
      score = find_key(c, "score");
    } else {
      throw ValidationError(what + ": candidate must be [text, score] or {text, score}");
    }
    // nlohmann parses NaN/Infinity literals as null or fails; both end here.
    if (score == nullptr || !score->is_number()) {
      throw ValidationError(what + ": candidate '" + sc.text + "' has a non-finite score");
    }
    sc.score = score->get<double>();
    if (!std::isfinite(sc.score)) {
      throw ValidationError(what + ": candidate '" + sc.text + "' has a non-finite score");
    }
    raw.push_back(std::move(sc));
  }
  if (raw.empty()) throw ValidationError(what + ": empty candidate list");

  std::stable_sort(raw.begin(), raw.end(), [](const auto& a, const auto& b) {
    return a.score > b.score;
  });
  std::set<std::string, std::less<>> seen;
  for (auto& c : raw) {
    if (seen.insert(c.text).second) set.candidates.push_back(std::move(c));
  }
  if (set.candidates.size() > max_candidates) set.candidates.resize(max_candidates);
  return set;
}

std::vector<ScoredCandidateSet> load_candidate_sets(const std::filesystem::path& path,
                                                    std::size_t max_candidates) {
  std::vector<ScoredCandidateSet> out;
  for_each_jsonl(path, [&](const json& record, std::size_t) {
    out.push_back(parse_candidate_set(record, max_candidates));
  });
  return out;
}

std::vector<ReferenceSet> load_reference_sets(const std::filesystem::path& path) {
  std::vector<ReferenceSet> out;
  std::set<std::string, std::less<>> ids;
  for_each_jsonl(path, [&](const json& record, std::size_t) {
    ReferenceSet rs;
    rs.question_id = require_string(record, "question_id", "reference record");
    rs.question = optional_string(record, "question");
    const std::string what = "question '" + rs.question_id + "'";
    const json* refs = find_key(record, "references");
    if (refs == nullptr || !refs->is_array()) {
      throw ValidationError(what + ": 'references' must be an array");
    }
    for (const auto& r : *refs) rs.references.push_back(r.get<std::string>());
    if (rs.references.empty()) throw ValidationError(what + ": empty reference list");
    if (rs.references.size() > ReferenceSet::kMaxReferences) {
      throw ValidationError(what + ": more than 6 references");
    }
    if (!ids.insert(rs.question_id).second) {
      throw ValidationError("duplicate question_id '" + rs.question_id + "'");
    }
    out.push_back(std::move(rs));
  });
  return out;
}

}  // namespace aequiv
