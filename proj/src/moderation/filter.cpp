#include "stitch/moderation/filter.hpp"

#include <algorithm>
#include <map>

namespace stitch::moderation {

std::vector<corpus::Patch> filter_unflagged(const std::vector<corpus::Patch>& patches,
                                            const std::vector<ModerationVerdict>& verdicts) {
    std::map<PatchKey, bool> flagged;
    for (const auto& v : verdicts) flagged[v.key] = v.flagged;

    std::vector<corpus::Patch> kept;
    kept.reserve(patches.size());
    for (const auto& p : patches) {
        const PatchKey key{p.source_id, p.factor, p.row, p.col};
        const auto it = flagged.find(key);
        if (it == flagged.end()) {
            throw ContractError("filter_unflagged: no verdict for patch " + key.to_string());
        }
        if (!it->second) kept.push_back(p);
    }
    return kept;
}

EvasionReport evasion_rate(const std::vector<ModerationVerdict>& verdicts,
                           const corpus::Manifest& manifest) {
    if (verdicts.empty()) throw ContractError("evasion_rate: no verdicts");

    std::map<std::string, std::string> group_of;
    for (const auto& e : manifest.entries) group_of[e.image_id] = e.group;

    std::map<std::pair<std::string, int>, std::pair<long, long>> acc;  // (group,factor) -> (total, flagged)
    for (const auto& v : verdicts) {
        const auto it = group_of.find(v.key.source_id);
        if (it == group_of.end()) {
            throw ContractError("evasion_rate: verdict for unknown source " + v.key.source_id);
        }
        auto& cell = acc[{it->second, v.key.factor}];
        cell.first += 1;
        if (v.flagged) cell.second += 1;
    }

    EvasionReport report;
    for (const auto& [key, cell] : acc) {
        report.rows.push_back({key.first, key.second, cell.first, cell.second});
    }
    // std::map iteration is already (group, factor) ordered.
    return report;
}

}  // namespace stitch::moderation
