#include "stitch/eval/rank.hpp"

#include <cmath>

#include "stitch/errors.hpp"

namespace stitch::eval {

int rank_of_correct(std::span<const double> scores, int correct_index) {
    if (scores.empty()) throw ContractError("rank_of_correct: empty score list");
    if (correct_index < 0 || static_cast<size_t>(correct_index) >= scores.size()) {
        throw ContractError("rank_of_correct: correct_index out of range");
    }
    for (double s : scores) {
        if (std::isnan(s)) throw ContractError("rank_of_correct: NaN score");
    }
    const double sc = scores[static_cast<size_t>(correct_index)];
    int rank = 0;
    for (size_t j = 0; j < scores.size(); ++j) {
        if (static_cast<int>(j) == correct_index) continue;
        if (scores[j] > sc) ++rank;
        // Equal scores ahead of the correct index outrank it under a
        // stable descending sort.
        if (scores[j] == sc && static_cast<int>(j) < correct_index) ++rank;
    }
    return rank;
}

RankResult RankResult::from_items(std::vector<Item> items, int n_candidates) {
    if (items.empty()) throw ContractError("RankResult: empty evaluation set");
    RankResult r;
    r.per_item = std::move(items);
    r.n_candidates = n_candidates;
    double sum = 0.0;
    for (const auto& it : r.per_item) sum += it.rank;
    r.mean_rank = sum / static_cast<double>(r.per_item.size());
    return r;
}

}  // namespace stitch::eval
