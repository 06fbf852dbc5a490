#include "stitch/harness/aggregate.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

namespace stitch::harness {

std::string csv_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::vector<AggregateRow> aggregate(const std::vector<RunRecord>& records) {
    std::map<std::tuple<int, double, int, std::string>, std::vector<std::pair<double, double>>> groups;
    for (const auto& r : records) {
        if (r.status != "ok") continue;
        for (const auto& [mode, res] : r.results) {
            groups[{r.factor, r.lr, r.threshold, mode}].emplace_back(res.final_mean_rank,
                                                                     res.best_mean_rank);
        }
    }
    if (groups.empty()) throw ContractError("aggregate: no successful records");

    auto mean_of = [](const std::vector<std::pair<double, double>>& v, bool best) {
        double s = 0.0;
        for (const auto& p : v) s += best ? p.second : p.first;
        return s / static_cast<double>(v.size());
    };
    auto pop_std_of = [](const std::vector<std::pair<double, double>>& v, double mu, bool best) {
        double s = 0.0;
        for (const auto& p : v) {
            const double d = (best ? p.second : p.first) - mu;
            s += d * d;
        }
        return std::sqrt(s / static_cast<double>(v.size()));
    };

    std::vector<AggregateRow> rows;
    for (const auto& [key, vals] : groups) {
        AggregateRow row;
        row.factor = std::get<0>(key);
        row.lr = std::get<1>(key);
        row.threshold = std::get<2>(key);
        row.mode = std::get<3>(key);
        row.n_seeds = static_cast<int>(vals.size());
        row.mean_final = mean_of(vals, false);
        row.std_final = pop_std_of(vals, row.mean_final, false);
        row.mean_best = mean_of(vals, true);
        row.std_best = pop_std_of(vals, row.mean_best, true);
        rows.push_back(row);
    }
    return rows;
}

std::string aggregate_csv(const std::vector<AggregateRow>& rows) {
    std::ostringstream out;
    out << "factor,lr,threshold,mode,n_seeds,mean_final_rank,std_final_rank,mean_best_rank,std_best_rank\n";
    for (const auto& r : rows) {
        out << r.factor << "," << csv_double(r.lr) << "," << r.threshold << "," << r.mode << ","
            << r.n_seeds << "," << csv_double(r.mean_final) << "," << csv_double(r.std_final) << ","
            << csv_double(r.mean_best) << "," << csv_double(r.std_best) << "\n";
    }
    return out.str();
}

}  // namespace stitch::harness
