#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "aequiv/conformal.hpp"
#include "aequiv/error.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

namespace {

namespace cf = aequiv::conformal;
using aequiv::ScoredCandidate;
constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<ScoredCandidate> candidates(std::initializer_list<double> scores) {
  std::vector<ScoredCandidate> out;
  int i = 0;
  for (double s : scores) out.push_back({"c" + std::to_string(i++), s});
  return out;
}

cf::AdmissionFunction admission(cf::AdmissionKind kind) {
  cf::AdmissionFunction a;
  a.kind = kind;
  return a;
}

TEST(Nonconformity, NegatesFiniteScores) {
  EXPECT_EQ(cf::nonconformity(0.9), -0.9);
  EXPECT_EQ(cf::nonconformity(0.0), 0.0);
  EXPECT_LT(cf::nonconformity(0.8), cf::nonconformity(0.7));
  EXPECT_THROW(cf::nonconformity(std::nan("")), aequiv::ValidationError);
}

TEST(CalibrationScore, MinimumOverAdmitted) {
  const auto c = candidates({0.9, 0.5, 0.1});
  EXPECT_EQ(cf::calibration_score(c, {true, false, true}), -0.9);
  EXPECT_EQ(cf::calibration_score(c, {false, false, true}), -0.1);
  EXPECT_EQ(cf::calibration_score(c, {false, false, false}), kInf);
}

TEST(CalibrationScore, RicherAdmissionNeverLarger) {
  aequiv::Rng rng(1);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<ScoredCandidate> c(3);
    for (auto& x : c) x.score = aequiv::uniform01(rng);
    std::sort(c.begin(), c.end(), [](auto& a, auto& b) { return a.score > b.score; });
    std::vector<bool> squad(3), ae(3);
    for (std::size_t j = 0; j < 3; ++j) {
      squad[j] = aequiv::uniform01(rng) < 0.3;
      ae[j] = squad[j] || aequiv::uniform01(rng) < 0.3;
    }
    EXPECT_LE(cf::calibration_score(c, ae), cf::calibration_score(c, squad));
  }
}

TEST(PValue, HandEnumeration) {
  const std::vector<double> cal{-0.8, -0.6, -0.4, -0.2};
  EXPECT_DOUBLE_EQ(cf::p_value(-0.9, cal), 1.0);
  EXPECT_DOUBLE_EQ(cf::p_value(-0.1, cal), 0.2);
  EXPECT_DOUBLE_EQ(cf::p_value(-0.2, cal), 0.4);
  EXPECT_DOUBLE_EQ(cf::p_value(5.0, std::vector<double>{-1.0, kInf}), 2.0 / 3.0);
  EXPECT_THROW(cf::p_value(0.0, std::vector<double>{}), aequiv::ValidationError);
}

TEST(PValue, MatchesBruteForceCounting) {
  aequiv::Rng rng(2);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> cal(1 + aequiv::uniform_index(rng, 20));
    for (auto& v : cal) {
      v = aequiv::uniform01(rng) < 0.1 ? kInf : -static_cast<double>(aequiv::uniform_index(rng, 8)) / 8.0;
    }
    std::sort(cal.begin(), cal.end());
    const double s = -static_cast<double>(aequiv::uniform_index(rng, 9)) / 8.0;
    EXPECT_EQ(cf::p_value(s, cal), aequiv::testing::oracle::p_value(s, cal));
  }
}

TEST(PredictSet, HandExample) {
  const auto model = cf::make_calibration_model({-0.5});
  aequiv::ScoredCandidateSet set{"q", "", candidates({0.7, 0.3})};
  EXPECT_EQ(cf::predict_set(set, model, 0.5), (std::vector<std::string>{"c0"}));
}

TEST(PredictSet, HighTargetWithFewScoresKeepsEverything) {
  const auto model = cf::make_calibration_model({-0.9, -0.8, -0.7});
  const auto c = candidates({0.99, 0.5, 0.01});
  EXPECT_EQ(cf::predict_set_indices(c, model, 0.9999).size(), 3u);
}

TEST(PredictSet, RejectsBadTargetsAndModels) {
  const auto model = cf::make_calibration_model({-0.5});
  const auto c = candidates({0.5});
  EXPECT_THROW(cf::predict_set_indices(c, model, 1.0), aequiv::UsageError);
  EXPECT_THROW(cf::predict_set_indices(c, model, 0.0), aequiv::UsageError);
  EXPECT_ANY_THROW(cf::make_calibration_model({}));
  EXPECT_ANY_THROW(cf::make_calibration_model({-0.5}, 0.0));
  EXPECT_ANY_THROW(cf::make_calibration_model({-0.5}, 1.5));
}

TEST(PredictSet, MatchesQuantileFormulationWithoutCorrection) {
  aequiv::Rng rng(3);
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<double> cal(1 + aequiv::uniform_index(rng, 20));
    for (auto& v : cal) v = -static_cast<double>(aequiv::uniform_index(rng, 10)) / 10.0;
    const auto model = cf::make_calibration_model(cal);
    const double target = 0.05 * static_cast<double>(1 + aequiv::uniform_index(rng, 19));
    const std::size_t n = model.n();
    // Include s iff s <= the ceil(target (n + 1))-th smallest score (+inf past n).
    const auto k = static_cast<std::size_t>(std::ceil(target * static_cast<double>(n + 1) - 1e-9));
    const double q = k > n ? kInf : model.scores[k - 1];
    std::vector<ScoredCandidate> c(10);
    for (std::size_t j = 0; j < c.size(); ++j) c[j] = {"c", 1.0 - static_cast<double>(j) / 10.0};
    const auto set = cf::predict_set_indices(c, model, target);
    std::vector<std::size_t> expected;
    for (std::size_t j = 0; j < c.size(); ++j) {
      if (cf::nonconformity(c[j].score) <= q) expected.push_back(j);
    }
    EXPECT_EQ(set, expected) << "n=" << n << " target=" << target;
  }
}

TEST(PredictSet, NestedAcrossTargetsAndCorrectionOnlyGrows) {
  const auto questions = aequiv::testing::synthetic_conformal({200, 20, 0.02, 0.6}, 4);
  const auto table = cf::admission_table(questions, admission(cf::AdmissionKind::kExactLabels));
  std::vector<double> cal;
  for (std::size_t q = 0; q < 100; ++q) {
    cal.push_back(cf::calibration_score(questions[q].candidates.candidates, table[q]));
  }
  const auto exact = cf::make_calibration_model(cal);
  const auto corrected = cf::make_calibration_model(cal, 0.8);
  const std::vector<double> targets{0.5, 0.7, 0.8, 0.9, 0.95, 0.99};
  for (std::size_t q = 100; q < questions.size(); ++q) {
    const auto& c = questions[q].candidates.candidates;
    std::vector<std::size_t> prev;
    for (double t : targets) {
      const auto set = cf::predict_set_indices(c, exact, t);
      EXPECT_TRUE(std::includes(set.begin(), set.end(), prev.begin(), prev.end()));
      const auto wider = cf::predict_set_indices(c, corrected, t);
      EXPECT_TRUE(std::includes(wider.begin(), wider.end(), set.begin(), set.end()));
      prev = set;
    }
  }
}

TEST(EstimateCorrection, ZeroErrorsClosedForm) {
  std::vector<cf::TopAdmission> holdout(10, {true, true});
  holdout.push_back({false, false});
  const auto est = cf::estimate_correction(holdout, 0.01);
  EXPECT_EQ(est.accepted, 10u);
  EXPECT_EQ(est.errors, 0u);
  EXPECT_NEAR(est.fpr_upper_bound, 1.0 - std::pow(0.01, 0.1), 1e-12);
  EXPECT_NEAR(est.correction, std::pow(0.01, 0.1), 1e-12);
  EXPECT_NEAR(est.correction, 0.631, 5e-4);
}

TEST(EstimateCorrection, AllWrongGivesZeroWhichModelsReject) {
  const std::vector<cf::TopAdmission> holdout(5, {true, false});
  const auto est = cf::estimate_correction(holdout, 0.01);
  EXPECT_EQ(est.correction, 0.0);
  EXPECT_ANY_THROW(cf::make_calibration_model({-0.5}, est.correction));
}

TEST(EstimateCorrection, NeedsAcceptedTopAnswers) {
  const std::vector<cf::TopAdmission> holdout(5, {false, true});
  EXPECT_THROW(cf::estimate_correction(holdout, 0.01), aequiv::ValidationError);
  EXPECT_THROW(cf::estimate_correction({}, 0.01), aequiv::ValidationError);
}

TEST(AdmissionTable, KindsAndSubsets) {
  cf::ConformalQuestion q;
  q.candidates = {"q1", "", {{"Paris", 0.9}, {"city of Paris", 0.5}, {"Lyon", 0.1}}};
  q.references = {"paris"};
  q.admitted_answers = {"City of Paris"};
  const std::vector<cf::ConformalQuestion> qs{q};
  EXPECT_EQ(cf::admission_table(qs, admission(cf::AdmissionKind::kSquadOnly))[0],
            (std::vector<bool>{true, false, false}));
  EXPECT_EQ(cf::admission_table(qs, admission(cf::AdmissionKind::kExactLabels))[0],
            (std::vector<bool>{true, true, false}));
  auto f1 = admission(cf::AdmissionKind::kApproxF1);
  f1.threshold = 0.5;
  EXPECT_EQ(cf::admission_table(qs, f1)[0], (std::vector<bool>{true, true, false}));
}

TEST(JoinQuestions, MissingLabelsAreAnError) {
  std::vector<aequiv::ScoredCandidateSet> sets{{"q1", "", candidates({0.5})}};
  EXPECT_THROW(cf::join_questions(sets, std::vector<cf::AdmissionLabels>{}), aequiv::ValidationError);
  const std::vector<cf::AdmissionLabels> labels{{"q1", {"c0"}, {}}};
  const auto joined = cf::join_questions(sets, labels);
  EXPECT_EQ(joined.at(0).admitted_answers, (std::vector<std::string>{"c0"}));
}

TEST(RunTrials, PerfectlySeparableData) {
  std::vector<cf::ConformalQuestion> qs;
  for (int i = 0; i < 100; ++i) {
    cf::ConformalQuestion q;
    q.candidates.question_id = "q" + std::to_string(i);
    q.candidates.candidates = {{"right", 1.0}, {"wrong a", 0.0}, {"wrong b", 0.0}};
    q.references = {"right"};
    qs.push_back(q);
  }
  const auto exact = cf::admission_table(qs, admission(cf::AdmissionKind::kExactLabels));
  const std::vector<double> targets{0.5, 0.9, 0.95};
  const auto result = cf::run_trials(qs, exact, false, exact, targets, {10, 0.8, 0.1, 0.01, 3});
  for (const auto& row : result.rows) {
    EXPECT_EQ(row.mean_size, 1.0);
    EXPECT_EQ(row.empirical_accuracy, 1.0);
  }
}

TEST(RunTrials, CoverageSizeOrderingAndDeterminism) {
  const auto qs = aequiv::testing::synthetic_conformal({1000, 20, 0.02, 0.6}, 99);
  const auto exact = cf::admission_table(qs, admission(cf::AdmissionKind::kExactLabels));
  const auto squad = cf::admission_table(qs, admission(cf::AdmissionKind::kSquadOnly));
  const std::vector<double> targets{0.7, 0.8, 0.9, 0.95};
  const cf::TrialConfig cfg{50, 0.8, 0.1, 0.01, 123};
  const auto rich = cf::run_trials(qs, exact, false, exact, targets, cfg, "ae");
  const auto poor = cf::run_trials(qs, squad, false, exact, targets, cfg, "squad");
  const double n_test = 200.0;
  for (std::size_t a = 0; a < targets.size(); ++a) {
    const double t = targets[a];
    EXPECT_GE(rich.rows[a].empirical_accuracy, t - 3.0 * std::sqrt(t * (1 - t) / n_test));
    EXPECT_GE(poor.rows[a].empirical_accuracy, t - 3.0 * std::sqrt(t * (1 - t) / n_test));
    EXPECT_LE(rich.rows[a].mean_size, poor.rows[a].mean_size);
    EXPECT_LE(rich.rows[a].p16_size, rich.rows[a].p84_size);
    if (a > 0) EXPECT_GE(rich.rows[a].mean_size, rich.rows[a - 1].mean_size);
  }
  const auto again = cf::run_trials(qs, exact, false, exact, targets, cfg, "ae");
  for (std::size_t a = 0; a < targets.size(); ++a) {
    EXPECT_EQ(again.rows[a].mean_size, rich.rows[a].mean_size);
    EXPECT_EQ(again.rows[a].empirical_accuracy, rich.rows[a].empirical_accuracy);
  }
}

TEST(RunTrials, ApproximateAdmissionRecordsCorrections) {
  const auto qs = aequiv::testing::synthetic_conformal({500, 20, 0.02, 0.6}, 7);
  const auto exact = cf::admission_table(qs, admission(cf::AdmissionKind::kExactLabels));
  auto f1 = admission(cf::AdmissionKind::kApproxF1);
  f1.threshold = 0.7;
  const auto approx = cf::admission_table(qs, f1);
  const std::vector<double> targets{0.8, 0.9};
  const auto result = cf::run_trials(qs, approx, true, exact, targets, {20, 0.8, 0.1, 0.01, 5});
  ASSERT_EQ(result.corrections.size(), 20u);
  for (const auto& c : result.corrections) {
    EXPECT_GT(c.accepted, 0u);
    EXPECT_GT(c.correction, 0.0);
    EXPECT_LE(c.correction, 1.0);
    EXPECT_GE(c.fpr_upper_bound, c.empirical_fpr);
  }
  for (const auto& row : result.rows) {
    EXPECT_GE(row.empirical_accuracy, row.target - 3.0 * std::sqrt(row.target * (1 - row.target) / 100.0));
  }
}

TEST(RunTrials, RejectsDegenerateConfigs) {
  const auto qs = aequiv::testing::synthetic_conformal({10, 5, 0.0, 0.0}, 1);
  const auto exact = cf::admission_table(qs, admission(cf::AdmissionKind::kExactLabels));
  const std::vector<double> t{0.9};
  EXPECT_ANY_THROW(cf::run_trials(qs, exact, false, exact, t, {5, 0.01, 0.1, 0.01, 1}));
  EXPECT_ANY_THROW(cf::run_trials(qs, exact, false, exact, t, {0, 0.8, 0.1, 0.01, 1}));
  EXPECT_ANY_THROW(cf::run_trials(std::span(qs).first(1), exact, false, exact, t, {5, 0.8, 0.1, 0.01, 1}));
}

}  // namespace
