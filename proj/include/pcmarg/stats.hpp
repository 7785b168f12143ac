#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace pcmarg {

// 1-based ranks with ties given their average rank.
std::vector<double> average_ranks(std::span<const double> xs);

double pearson(std::span<const double> xs, std::span<const double> ys);

// Pearson correlation of average ranks.
double spearman(std::span<const double> xs, std::span<const double> ys);

}  // namespace pcmarg
