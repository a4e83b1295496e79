#pragma once

#include <optional>
#include <span>
#include <vector>

namespace aequiv::stats {

// 1-based ranks; tied values share the mean of the ranks they span.
std::vector<double> average_ranks(std::span<const double> values);

// Pearson correlation of the average ranks. nullopt when either input is
// constant (or shorter than two), where the coefficient is undefined.
std::optional<double> spearman_rho(std::span<const double> x, std::span<const double> y);

double mean(std::span<const double> values);

// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
double stddev(std::span<const double> values);

// Linear-interpolation percentile of a sorted sample, q in [0, 1].
double percentile_sorted(std::span<const double> sorted, double q);

// One-sided Clopper-Pearson upper bound on a binomial proportion after
// observing `successes` out of `trials`, at confidence 1 - gamma. Equals 1 when
// successes == trials.
double clopper_pearson_upper(std::size_t successes, std::size_t trials, double gamma);

}  // namespace aequiv::stats
