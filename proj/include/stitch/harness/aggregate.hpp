#pragma once

#include <string>
#include <vector>

#include "stitch/harness/runstore.hpp"

namespace stitch::harness {

// Per-(factor, lr, threshold, mode) mean and population standard deviation
// of mean ranks across seeds. Failed cells are excluded.
struct AggregateRow {
    int factor = 1;
    double lr = 0.0;
    int threshold = 0;
    std::string mode;
    int n_seeds = 0;
    double mean_final = 0.0;
    double std_final = 0.0;
    double mean_best = 0.0;
    double std_best = 0.0;
};

std::vector<AggregateRow> aggregate(const std::vector<RunRecord>& records);

// Round-trip exact double formatting shared by every CSV emitter.
std::string csv_double(double v);

std::string aggregate_csv(const std::vector<AggregateRow>& rows);

}  // namespace stitch::harness
