#include "aequiv/cli.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "aequiv/annotations.hpp"
#include "aequiv/bridge_client.hpp"
#include "aequiv/conformal.hpp"
#include "aequiv/dataset.hpp"
#include "aequiv/error.hpp"
#include "aequiv/lexical.hpp"
#include "aequiv/scoring.hpp"
#include "aequiv/system_eval.hpp"

namespace aequiv::cli {
namespace {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

struct RunConfig {
  std::string subcommand;
  std::string input;
  std::string adapter;
  std::vector<std::string> splits;
  std::string candidates;
  std::string labels;
  std::string predictions;
  std::string references;
  std::string ae_input;
  std::string norm = "simple";
  std::string scorer = "f1";
  bool symmetrize = false;
  std::optional<double> threshold;
  double f1_threshold = 0.5;
  std::size_t bootstrap_b = 1000;
  double level = 0.95;
  std::size_t trials = 50;
  double calib_frac = 0.8;
  double holdout_frac = 0.1;
  double gamma = 0.01;
  std::vector<double> targets{0.9};
  std::vector<std::string> admissions{"squad", "ae"};
  std::vector<std::string> metrics{"em", "f1-mean", "human"};
  std::vector<std::string> reference_counts{"all"};
  std::size_t bins = annotations::kDefaultBinCount;
  std::size_t max_candidates = ScoredCandidateSet::kDefaultMaxCandidates;
  int bridge_timeout_ms = 60'000;
  std::optional<std::uint64_t> seed;
  std::string out = "aequiv-out";
};

// ---------------------------------------------------------------- formatting

std::string num(double v, int precision = 6) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  std::ostringstream s;
  s << std::fixed << std::setprecision(precision) << v;
  return s.str();
}

std::string csv_field(const std::string& v) {
  if (v.find_first_of(",\"\n") == std::string::npos) return v;
  std::string q = "\"";
  for (char c : v) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + '"';
}

class Table {
 public:
  explicit Table(std::vector<std::string> header) : header_(std::move(header)) {}
  void add(std::vector<std::string> row) { rows_.push_back(std::move(row)); }

  std::string csv() const {
    std::string out = line(header_, ",", true);
    for (const auto& r : rows_) out += line(r, ",", true);
    return out;
  }

  std::string markdown() const {
    std::string out = "| " + line(header_, " | ", false);
    out.insert(out.size() - 1, " |");
    std::string sep = "|";
    for (std::size_t i = 0; i < header_.size(); ++i) sep += "---|";
    out += sep + "\n";
    for (const auto& r : rows_) {
      std::string l = "| " + line(r, " | ", false);
      l.insert(l.size() - 1, " |");
      out += l;
    }
    return out;
  }

 private:
  static std::string line(const std::vector<std::string>& cells, const std::string& sep,
                          bool quote) {
    std::string out;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i > 0) out += sep;
      out += quote ? csv_field(cells[i]) : cells[i];
    }
    return out + "\n";
  }

  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

// ---------------------------------------------------------------- provenance

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr);
  char buf[1 << 16];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    EVP_DigestUpdate(ctx.get(), buf, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), digest, &len);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  }
  return hex.str();
}

class Output {
 public:
  Output(const RunConfig& cfg, std::vector<std::string> inputs)
      : cfg_(cfg), dir_(cfg.out), inputs_(std::move(inputs)) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw IoError("cannot create output directory " + dir_.string() + ": " + ec.message());
    meta_["tool"] = kToolName;
    meta_["version"] = kToolVersion;
    meta_["subcommand"] = cfg.subcommand;
    meta_["seed"] = cfg.seed ? ojson(*cfg.seed) : ojson(nullptr);
    meta_["inputs"] = ojson::array();
    for (const auto& p : inputs_) {
      meta_["inputs"].push_back({{"path", p}, {"sha256", sha256_file(p)}});
    }
  }

  void set(const std::string& key, ojson value) { meta_["parameters"][key] = std::move(value); }

  void write(const std::string& name, const std::string& content) {
    const fs::path path = dir_ / name;
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path.string());
    f << content;
    if (!f) throw IoError("failed writing " + path.string());
    written_.push_back(path.string());
  }

  // Markdown report prefixed with the run's provenance.
  void write_markdown(const std::string& name, const std::string& title, const std::string& body) {
    std::string md = "# " + title + "\n\n";
    md += "- tool: " + std::string(kToolName) + " " + kToolVersion + "\n";
    md += "- seed: " + (cfg_.seed ? std::to_string(*cfg_.seed) : std::string("none")) + "\n";
    for (const auto& in : meta_["inputs"]) {
      md += "- input: `" + in["path"].get<std::string>() + "` sha256 " +
            in["sha256"].get<std::string>() + "\n";
    }
    md += "\n" + body;
    write(name, md);
  }

  void finish() { write("run_metadata.json", meta_.dump(2) + "\n"); }

  const std::vector<std::string>& written() const { return written_; }

 private:
  const RunConfig& cfg_;
  fs::path dir_;
  std::vector<std::string> inputs_;
  ojson meta_;
  std::vector<std::string> written_;
};

// ---------------------------------------------------------------- helpers

void require_files(const std::vector<std::pair<std::string, std::string>>& files) {
  for (const auto& [flag, path] : files) {
    if (path.empty()) throw UsageError(flag + " is required");
    if (!fs::is_regular_file(path)) throw IoError("input file not found: " + path + " (" + flag + ")");
  }
}

std::uint64_t require_seed(const RunConfig& cfg) {
  if (!cfg.seed) {
    throw UsageError("subcommand '" + cfg.subcommand +
                     "' is stochastic and needs an explicit --seed");
  }
  return *cfg.seed;
}

lexical::NormalizationProfile profile_of(const RunConfig& cfg) {
  auto p = lexical::profile_by_name(cfg.norm);
  if (!p) throw UsageError("unknown --norm '" + cfg.norm + "' (simple|squad-official)");
  return *p;
}

std::optional<std::vector<Split>> split_filter(const RunConfig& cfg,
                                               std::vector<Split> fallback) {
  if (cfg.splits.empty()) {
    if (fallback.empty()) return std::nullopt;
    return fallback;
  }
  std::vector<Split> out;
  for (const auto& s : cfg.splits) {
    auto parsed = parse_split(s);
    if (!parsed) throw UsageError("unknown split '" + s + "'");
    out.push_back(*parsed);
  }
  return out;
}

IngestionAdapter adapter_of(const RunConfig& cfg) {
  if (cfg.adapter.empty()) return IngestionAdapter::identity();
  return load_adapter(cfg.adapter);
}

std::vector<std::string> input_list(const RunConfig& cfg,
                                    std::initializer_list<const std::string*> fields) {
  std::vector<std::string> out;
  for (const auto* f : fields) {
    if (!f->empty()) out.push_back(*f);
  }
  if (!cfg.adapter.empty()) out.push_back(cfg.adapter);
  return out;
}

std::unique_ptr<scoring::EquivalenceScorer> make_scorer(const RunConfig& cfg) {
  const auto profile = profile_of(cfg);
  std::unique_ptr<scoring::EquivalenceScorer> scorer;
  const std::string& spec = cfg.scorer;
  if (spec == "f1") {
    scorer = std::make_unique<scoring::LexicalF1Scorer>(profile);
  } else if (spec == "em") {
    scorer = std::make_unique<scoring::ExactMatchScorer>(profile);
  } else if (spec.starts_with("file:")) {
    const std::string path = spec.substr(5);
    require_files({{"--scorer file:", path}});
    scorer = std::make_unique<scoring::ScoreFileScorer>(scoring::ScoreFileScorer::load(path));
  } else if (spec == "bridge" || spec.starts_with("bridge:")) {
    std::string endpoint = spec.size() > 7 ? spec.substr(7) : "";
    if (endpoint.empty()) {
      if (const char* env = std::getenv("AEQUIV_BRIDGE")) endpoint = env;
    }
    if (endpoint.empty()) {
      throw UsageError("--scorer bridge needs an endpoint (bridge:URL-or-cmd or AEQUIV_BRIDGE)");
    }
    scorer = std::make_unique<scoring::RemoteBridgeScorer>(bridge::make_transport(
        endpoint, std::chrono::milliseconds(cfg.bridge_timeout_ms)));
  } else {
    throw UsageError("unknown --scorer '" + spec + "' (f1|em|file:PATH|bridge:URL-or-cmd)");
  }
  if (cfg.symmetrize) scorer = std::make_unique<scoring::SymmetrizedScorer>(std::move(scorer));
  return scorer;
}

struct LabeledSet {
  std::vector<AEExample> examples;
  std::vector<bool> labels;
  std::size_t unrated = 0;
};

// Loads examples, aggregates their ratings and keeps the rated ones.
LabeledSet load_labeled(const RunConfig& cfg, std::vector<Split> default_splits) {
  auto examples = load_ae_examples(cfg.input, split_filter(cfg, std::move(default_splits)),
                                   adapter_of(cfg));
  const auto agg = annotations::aggregate_labels(examples, require_seed(cfg));
  LabeledSet set;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (!agg[i]) {
      ++set.unrated;
      continue;
    }
    set.labels.push_back(annotations::is_equivalent(*agg[i]));
    set.examples.push_back(std::move(examples[i]));
  }
  if (set.examples.empty()) throw ValidationError("no rated examples in " + cfg.input);
  return set;
}

std::vector<double> score_examples(scoring::EquivalenceScorer& scorer,
                                   const std::vector<AEExample>& examples) {
  std::vector<scoring::ScoreQuery> queries;
  queries.reserve(examples.size());
  for (const auto& ex : examples) queries.push_back(scoring::query_for(ex));
  return scorer.score_batch(queries);
}

std::string rho_cell(const scoring::ClassifierReport& r) {
  return r.spearman_rho ? num(100.0 * *r.spearman_rho, 2) : "undefined";
}

// ---------------------------------------------------------------- subcommands

int cmd_validate(const RunConfig& cfg, std::ostream& out) {
  require_files({{"--input", cfg.input}});
  Output output(cfg, input_list(cfg, {&cfg.input}));
  const auto examples = load_ae_examples(cfg.input, split_filter(cfg, {}), adapter_of(cfg));
  std::map<std::string, std::size_t> by_split, by_system;
  std::size_t ratings = 0, multi = 0;
  for (const auto& ex : examples) {
    ++by_split[std::string(to_string(ex.split))];
    ++by_system[std::string(to_string(ex.source_system))];
    ratings += ex.ratings.size();
    if (ex.ratings.size() >= 2) ++multi;
  }
  Table table({"group", "value", "examples"});
  for (const auto& [k, v] : by_split) table.add({"split", k, std::to_string(v)});
  for (const auto& [k, v] : by_system) table.add({"source_system", k, std::to_string(v)});
  table.add({"total", "examples", std::to_string(examples.size())});
  table.add({"total", "ratings", std::to_string(ratings)});
  table.add({"total", "multi_rated", std::to_string(multi)});
  output.write("validate.csv", table.csv());
  output.write_markdown("validate.md", "Validation summary", table.markdown());
  output.finish();
  out << "valid: " << examples.size() << " examples, " << ratings << " ratings ("
      << multi << " multi-rated) in " << cfg.input << "\n";
  return 0;
}

int cmd_aggregate(const RunConfig& cfg, std::ostream& out) {
  require_files({{"--input", cfg.input}});
  const auto seed = require_seed(cfg);
  Output output(cfg, input_list(cfg, {&cfg.input}));
  const auto examples = load_ae_examples(cfg.input, split_filter(cfg, {}), adapter_of(cfg));
  const auto labels = annotations::aggregate_labels(examples, seed);
  std::string jsonl;
  std::size_t n = 0, equivalent = 0;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (!labels[i]) continue;
    ojson j;
    j["example_id"] = examples[i].example_id;
    j["label"] = annotations::to_string(*labels[i]);
    j["equivalent"] = annotations::is_equivalent(*labels[i]);
    j["n_ratings"] = examples[i].ratings.size();
    jsonl += j.dump() + "\n";
    ++n;
    if (annotations::is_equivalent(*labels[i])) ++equivalent;
  }
  output.write("labels.jsonl", jsonl);
  output.finish();
  out << "aggregated " << n << " rated examples (" << equivalent << " equivalent)\n";
  return 0;
}

int cmd_histogram(const RunConfig& cfg, std::ostream& out) {
  require_files({{"--input", cfg.input}});
  const auto seed = require_seed(cfg);
  Output output(cfg, input_list(cfg, {&cfg.input}));
  output.set("bins", cfg.bins);
  output.set("norm", cfg.norm);
  auto examples = load_ae_examples(cfg.input, split_filter(cfg, {Split::kDev}), adapter_of(cfg));
  const auto agg = annotations::aggregate_labels(examples, seed);
  std::vector<AEExample> rated;
  std::vector<annotations::EquivalenceLabel> labels;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (!agg[i]) continue;
    rated.push_back(std::move(examples[i]));
    labels.push_back(*agg[i]);
  }
  const auto hist = annotations::f1_histogram(rated, labels, cfg.bins, profile_of(cfg));
  Table table({"f1_lower", "f1_upper", "equivalent", "different", "degraded"});
  for (const auto& b : hist.bins) {
    table.add({num(b.f1_lower, 3), num(b.f1_upper, 3), std::to_string(b.count_equivalent),
               std::to_string(b.count_different), std::to_string(b.count_degraded)});
  }
  output.write("histogram.csv", table.csv());
  output.write_markdown("histogram.md", "Token F1 vs. equivalence rating", table.markdown());
  output.finish();
  out << table.markdown();
  return 0;
}

int cmd_tune(const RunConfig& cfg, std::ostream& out) {
  require_files({{"--input", cfg.input}});
  Output output(cfg, input_list(cfg, {&cfg.input}));
  output.set("scorer", cfg.scorer);
  output.set("norm", cfg.norm);
  const auto set = load_labeled(cfg, {Split::kTrain});
  auto scorer = make_scorer(cfg);
  const auto scores = score_examples(*scorer, set.examples);
  const double threshold = scoring::tune_threshold(scores, set.labels);
  const auto tuned = scoring::classifier_report(scores, set.labels, threshold);
  const auto fixed = scoring::classifier_report(scores, set.labels, scoring::kDefaultThreshold);

  Table table({"scorer", "threshold", "accuracy", "spearman_rho", "n"});
  table.add({scorer->name(), num(fixed.threshold, 6), num(100.0 * fixed.accuracy, 2),
             rho_cell(fixed), std::to_string(fixed.n)});
  table.add({scorer->name(), num(tuned.threshold, 6), num(100.0 * tuned.accuracy, 2),
             rho_cell(tuned), std::to_string(tuned.n)});
  ojson j;
  j["scorer"] = scorer->name();
  j["threshold"] = threshold;
  j["accuracy"] = tuned.accuracy;
  j["n"] = tuned.n;
  output.write("threshold.json", j.dump(2) + "\n");
  output.write("tune.csv", table.csv());
  output.write_markdown("tune.md", "Threshold tuning", table.markdown());
  output.finish();
  out << "tuned threshold " << num(threshold, 6) << " (accuracy " << num(100.0 * tuned.accuracy, 2)
      << " on " << tuned.n << " examples)\n";
  return 0;
}

int cmd_classify(const RunConfig& cfg, std::ostream& out) {
  require_files({{"--input", cfg.input}});
  Output output(cfg, input_list(cfg, {&cfg.input}));
  const double threshold = cfg.threshold.value_or(scoring::kDefaultThreshold);
  output.set("scorer", cfg.scorer);
  output.set("threshold", threshold);
  output.set("norm", cfg.norm);
  const auto set = load_labeled(cfg, {Split::kDev});
  auto scorer = make_scorer(cfg);
  const auto scores = score_examples(*scorer, set.examples);
  const auto report = scoring::classifier_report(scores, set.labels, threshold);

  Table table({"scorer", "threshold", "accuracy", "spearman_rho", "n"});
  table.add({scorer->name(), num(threshold, 6), num(100.0 * report.accuracy, 2), rho_cell(report),
             std::to_string(report.n)});
  std::vector<SourceSystem> systems;
  for (const auto& ex : set.examples) systems.push_back(ex.source_system);
  Table per_system({"source_system", "accuracy", "n"});
  for (const auto& row : scoring::per_system_accuracy(scores, set.labels, systems, threshold)) {
    per_system.add({std::string(to_string(row.system)), num(100.0 * row.accuracy, 2),
                    std::to_string(row.n)});
  }
  output.write("classify.csv", table.csv());
  output.write("per_system.csv", per_system.csv());
  std::string body = table.markdown() + "\n" + per_system.markdown();
  if (!report.spearman_rho) body += "\n" + report.rho_error + "\n";
  output.write_markdown("classify.md", "Equivalence classification", body);
  output.finish();
  out << "accuracy " << num(100.0 * report.accuracy, 2) << ", rho " << rho_cell(report) << " ("
      << report.n << " examples)\n";
  if (!report.spearman_rho) out << report.rho_error << "\n";
  return 0;
}

int cmd_system_eval(const RunConfig& cfg, std::ostream& out) {
  require_files({{"--predictions", cfg.predictions}, {"--references", cfg.references}});
  std::vector<std::string> inputs{cfg.predictions, cfg.references};
  const bool wants_human =
      std::find(cfg.metrics.begin(), cfg.metrics.end(), "human") != cfg.metrics.end();
  if (wants_human) {
    require_files({{"--ae-input", cfg.ae_input}});
    inputs.push_back(cfg.ae_input);
  }
  if (!cfg.adapter.empty()) inputs.push_back(cfg.adapter);
  const auto seed = require_seed(cfg);
  Output output(cfg, inputs);
  const double threshold = cfg.threshold.value_or(scoring::kDefaultThreshold);
  output.set("metrics", cfg.metrics);
  output.set("threshold", threshold);
  output.set("f1_threshold", cfg.f1_threshold);
  output.set("bootstrap_b", cfg.bootstrap_b);
  output.set("level", cfg.level);

  const auto predictions = system_eval::load_predictions(cfg.predictions);
  const auto references = load_reference_sets(cfg.references);
  system_eval::HumanLabels human;
  if (wants_human) {
    const auto ae = load_ae_examples(cfg.ae_input, std::nullopt, adapter_of(cfg));
    human = system_eval::HumanLabels(ae, annotations::aggregate_labels(ae, seed));
  }
  std::unique_ptr<scoring::EquivalenceScorer> scorer;

  std::vector<std::size_t> ks;
  for (const auto& k : cfg.reference_counts) {
    if (k == "all") {
      ks.push_back(system_eval::kAllReferences);
      continue;
    }
    std::size_t v = 0;
    try {
      v = std::stoul(k);
    } catch (const std::exception&) {
      throw UsageError("--k expects positive integers or 'all', got '" + k + "'");
    }
    if (v == 0) throw UsageError("--k must be at least 1");
    ks.push_back(v);
  }

  system_eval::BootstrapConfig boot{cfg.bootstrap_b, cfg.level, seed};
  Table table({"metric", "references", "accuracy", "ci_half_width", "ci_lower", "ci_upper",
               "standard_error", "n_questions", "n_bootstrap", "level"});
  for (const auto& m : cfg.metrics) {
    system_eval::EquivalenceFn fn;
    fn.profile = profile_of(cfg);
    if (m == "em") {
      fn.kind = system_eval::MetricKind::kExactMatch;
    } else if (m == "f1" || m == "f1-mean") {
      fn.kind = system_eval::MetricKind::kF1;
      fn.aggregation = m == "f1" ? system_eval::Aggregation::kThresholded
                                 : system_eval::Aggregation::kMeanScore;
      fn.threshold = cfg.f1_threshold;
    } else if (m == "scorer" || m == "scorer-mean") {
      if (!scorer) scorer = make_scorer(cfg);
      fn.kind = system_eval::MetricKind::kScorer;
      fn.scorer = scorer.get();
      fn.aggregation = m == "scorer" ? system_eval::Aggregation::kThresholded
                                     : system_eval::Aggregation::kMeanScore;
      fn.threshold = threshold;
    } else if (m == "human") {
      fn.kind = system_eval::MetricKind::kHuman;
      fn.human = &human;
    } else {
      throw UsageError("unknown metric '" + m + "' (em|f1|f1-mean|scorer|scorer-mean|human)");
    }
    for (std::size_t k : ks) {
      const auto r = system_eval::reference_ablation(predictions, references, fn, k, boot);
      table.add({m, k == system_eval::kAllReferences ? "all" : std::to_string(k),
                 num(r.estimate, 2), num(r.ci_half_width, 2), num(r.ci_lower, 2),
                 num(r.ci_upper, 2), num(r.standard_error, 2), std::to_string(r.n_questions),
                 std::to_string(r.n_bootstrap), num(r.confidence_level, 3)});
    }
  }
  output.write("system_eval.csv", table.csv());
  output.write_markdown("system_eval.md", "System accuracy", table.markdown());
  output.finish();
  out << table.markdown();
  return 0;
}

int cmd_calibrate(const RunConfig& cfg, std::ostream& out) {
  require_files({{"--candidates", cfg.candidates}, {"--labels", cfg.labels}});
  const auto seed = require_seed(cfg);
  Output output(cfg, {cfg.candidates, cfg.labels});
  output.set("admissions", cfg.admissions);
  output.set("targets", cfg.targets);
  output.set("trials", cfg.trials);
  output.set("calib_frac", cfg.calib_frac);
  output.set("holdout_frac", cfg.holdout_frac);
  output.set("gamma", cfg.gamma);
  if (cfg.targets.empty()) throw UsageError("--targets needs at least one value");

  auto sets = load_candidate_sets(cfg.candidates, cfg.max_candidates);
  const auto labels = conformal::load_admission_labels(cfg.labels);
  const auto questions = conformal::join_questions(std::move(sets), labels);

  const auto profile = profile_of(cfg);
  conformal::AdmissionFunction exact_fn{conformal::AdmissionKind::kExactLabels, 0.0, profile, nullptr};
  const auto exact = conformal::admission_table(questions, exact_fn);

  conformal::TrialConfig trial_cfg{cfg.trials, cfg.calib_frac, cfg.holdout_frac, cfg.gamma, seed};
  std::unique_ptr<scoring::EquivalenceScorer> scorer;
  Table table({"target_alpha", "admission", "mean_size", "p16_size", "p84_size",
               "empirical_accuracy"});
  Table corrections({"admission", "trial", "accepted", "errors", "empirical_fpr",
                     "fpr_upper_bound", "correction"});
  for (const auto& name : cfg.admissions) {
    conformal::AdmissionFunction fn;
    fn.profile = profile;
    if (name == "ae") {
      fn.kind = conformal::AdmissionKind::kExactLabels;
    } else if (name == "squad") {
      fn.kind = conformal::AdmissionKind::kSquadOnly;
    } else if (name == "f1") {
      fn.kind = conformal::AdmissionKind::kApproxF1;
      fn.threshold = cfg.f1_threshold;
    } else if (name == "scorer") {
      if (!scorer) scorer = make_scorer(cfg);
      fn.kind = conformal::AdmissionKind::kApproxScorer;
      fn.scorer = scorer.get();
      fn.threshold = cfg.threshold.value_or(scoring::kDefaultThreshold);
    } else {
      throw UsageError("unknown admission '" + name + "' (squad|ae|f1|scorer)");
    }
    const auto table_for = fn.kind == conformal::AdmissionKind::kExactLabels
                               ? exact
                               : conformal::admission_table(questions, fn);
    const auto result = conformal::run_trials(questions, table_for, fn.approximate(), exact,
                                              cfg.targets, trial_cfg, name);
    for (const auto& row : result.rows) {
      table.add({num(row.target, 4), name, num(row.mean_size, 4), num(row.p16_size, 4),
                 num(row.p84_size, 4), num(row.empirical_accuracy, 4)});
    }
    for (std::size_t t = 0; t < result.corrections.size(); ++t) {
      const auto& c = result.corrections[t];
      corrections.add({name, std::to_string(t), std::to_string(c.accepted),
                       std::to_string(c.errors), num(c.empirical_fpr, 6),
                       num(c.fpr_upper_bound, 6), num(c.correction, 6)});
    }
  }
  output.write("calibration.csv", table.csv());
  output.write("corrections.csv", corrections.csv());
  output.write_markdown("calibration.md", "Conformal prediction sets", table.markdown());
  output.finish();
  out << table.markdown();
  return 0;
}

int cmd_report(const RunConfig& cfg, std::ostream& out) {
  require_files({{"--input", cfg.input}});
  Output output(cfg, input_list(cfg, {&cfg.input}));
  const auto examples = load_ae_examples(cfg.input, split_filter(cfg, {}), adapter_of(cfg));
  const auto agreement = annotations::agreement_stats(examples);
  Table table({"statistic", "value"});
  table.add({"n_examples", std::to_string(examples.size())});
  table.add({"n_multi_rated", std::to_string(agreement.n_multi_rated)});
  table.add({"pairwise_agreement", num(agreement.pairwise_agreement, 4)});
  table.add({"full_agreement_rate", num(agreement.full_agreement_rate, 4)});
  table.add({"krippendorff_alpha", num(agreement.krippendorff_alpha, 4)});
  output.write("agreement.csv", table.csv());
  output.write_markdown("report.md", "Annotation agreement", table.markdown());
  output.finish();
  out << table.markdown();
  return 0;
}

// ---------------------------------------------------------------- parsing

void add_common(CLI::App& app, RunConfig& cfg) {
  app.add_option("--norm", cfg.norm, "Normalization profile: simple | squad-official")
      ->check(CLI::IsMember({"simple", "squad-official"}));
  app.add_option("--scorer", cfg.scorer, "f1 | em | file:PATH | bridge:URL-or-cmd");
  app.add_flag("--symmetrize", cfg.symmetrize, "Average the scorer over both directions");
  app.add_option("--threshold", cfg.threshold, "Equivalence threshold for scorer decisions")
      ->check(CLI::Range(0.0, 1.0));
  app.add_option("--f1-threshold", cfg.f1_threshold, "Acceptance threshold for token F1")
      ->check(CLI::Range(0.0, 1.0));
  app.add_option("--bootstrap-b", cfg.bootstrap_b, "Bootstrap resamples")->check(CLI::PositiveNumber);
  app.add_option("--level", cfg.level, "Bootstrap confidence level")->check(CLI::Range(0.0, 1.0));
  app.add_option("--trials", cfg.trials, "Conformal calibration trials")->check(CLI::PositiveNumber);
  app.add_option("--calib-frac", cfg.calib_frac, "Calibration share of each trial")
      ->check(CLI::Range(0.0, 1.0));
  app.add_option("--holdout-frac", cfg.holdout_frac,
                 "Share of calibration data used to estimate admission errors")
      ->check(CLI::Range(0.0, 1.0));
  app.add_option("--gamma", cfg.gamma, "Confidence slack of the error-rate bound")
      ->check(CLI::Range(0.0, 1.0));
  app.add_option("--targets", cfg.targets, "Target accuracies")->delimiter(',');
  app.add_option("--seed", cfg.seed, "Seed for every stochastic step");
  app.add_option("--out", cfg.out, "Output directory");
  app.add_option("--adapter", cfg.adapter, "Field-name adapter for AE example files");
  app.add_option("--split", cfg.splits, "Splits to keep (train,dev,test)")->delimiter(',');
  app.add_option("--bridge-timeout-ms", cfg.bridge_timeout_ms, "Bridge inactivity timeout")
      ->check(CLI::PositiveNumber);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  RunConfig cfg;
  CLI::App app{"Answer-equivalence evaluation toolkit", kToolName};
  app.set_version_flag("--version", kToolVersion);
  app.set_config("--config", "", "TOML config file; command-line flags take precedence");
  app.require_subcommand(1);
  app.fallthrough();
  add_common(app, cfg);

  auto* validate = app.add_subcommand("validate", "Check an AE example file");
  validate->add_option("--input", cfg.input, "AE examples (JSONL)");

  auto* aggregate = app.add_subcommand("aggregate", "Majority-vote labels per example");
  aggregate->add_option("--input", cfg.input, "AE examples (JSONL)");

  auto* histogram = app.add_subcommand("histogram", "Token F1 histogram by rating");
  histogram->add_option("--input", cfg.input, "AE examples (JSONL)");
  histogram->add_option("--bins", cfg.bins, "Number of bins over [0, 1]")->check(CLI::PositiveNumber);

  auto* tune = app.add_subcommand("tune", "Tune a scorer threshold on labeled examples");
  tune->add_option("--input", cfg.input, "AE examples (JSONL)");

  auto* classify = app.add_subcommand("classify", "Accuracy and Spearman rho of a scorer");
  classify->add_option("--input", cfg.input, "AE examples (JSONL)");

  auto* system = app.add_subcommand("system-eval", "System accuracy with bootstrap intervals");
  system->add_option("--predictions", cfg.predictions, "Predictions (JSONL)");
  system->add_option("--references", cfg.references, "Reference sets (JSONL)");
  system->add_option("--ae-input", cfg.ae_input, "AE examples for the human metric");
  system->add_option("--metrics", cfg.metrics, "em,f1,f1-mean,scorer,scorer-mean,human")
      ->delimiter(',');
  system->add_option("--k", cfg.reference_counts, "Reference counts to evaluate (or 'all')")
      ->delimiter(',');

  auto* calibrate = app.add_subcommand("calibrate", "Conformal prediction set trials");
  calibrate->add_option("--candidates", cfg.candidates, "Scored candidate sets (JSONL)");
  calibrate->add_option("--labels", cfg.labels, "Exact admission labels (JSONL)");
  calibrate->add_option("--admission", cfg.admissions, "squad,ae,f1,scorer")->delimiter(',');
  calibrate->add_option("--max-candidates", cfg.max_candidates, "Candidates kept per question")
      ->check(CLI::PositiveNumber);

  auto* report = app.add_subcommand("report", "Inter-annotator agreement report");
  report->add_option("--input", cfg.input, "AE examples (JSONL)");

  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << kToolVersion << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    err << kToolName << ": " << e.what() << "\n";
    return static_cast<int>(ErrorKind::kUsage);
  }

  cfg.subcommand = app.get_subcommands().front()->get_name();
  try {
    if (cfg.subcommand == "validate") return cmd_validate(cfg, out);
    if (cfg.subcommand == "aggregate") return cmd_aggregate(cfg, out);
    if (cfg.subcommand == "histogram") return cmd_histogram(cfg, out);
    if (cfg.subcommand == "tune") return cmd_tune(cfg, out);
    if (cfg.subcommand == "classify") return cmd_classify(cfg, out);
    if (cfg.subcommand == "system-eval") return cmd_system_eval(cfg, out);
    if (cfg.subcommand == "calibrate") return cmd_calibrate(cfg, out);
    if (cfg.subcommand == "report") return cmd_report(cfg, out);
    throw UsageError("unknown subcommand " + cfg.subcommand);
  } catch (const Error& e) {
    err << kToolName << " " << cfg.subcommand << ": " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    err << kToolName << " " << cfg.subcommand << ": " << e.what() << "\n";
    return static_cast<int>(ErrorKind::kValidation);
  }
}

}  // namespace aequiv::cli
