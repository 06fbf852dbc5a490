#pragma once

#include <span>
#include <string>
#include <vector>

namespace stitch::eval {

// 0-indexed position of the correct candidate when candidates are sorted
// by decreasing score, ties broken stably by candidate index. Throws on
// NaN scores.
int rank_of_correct(std::span<const double> scores, int correct_index);

struct RankResult {
    struct Item {
        std::string item_id;
        int rank = 0;
    };
    std::vector<Item> per_item;
    double mean_rank = 0.0;
    int n_candidates = 0;

    static RankResult from_items(std::vector<Item> items, int n_candidates);
};

}  // namespace stitch::eval
