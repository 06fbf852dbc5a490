#pragma once

#include "stitch/corpus/manifest.hpp"
#include "stitch/moderation/provider.hpp"

namespace stitch::moderation {

// Keeps exactly the unflagged patches, order preserved. Every patch must
// have a verdict (coverage error otherwise).
std::vector<corpus::Patch> filter_unflagged(const std::vector<corpus::Patch>& patches,
                                            const std::vector<ModerationVerdict>& verdicts);

// Per (group, factor) evasion statistics. Counts stay integral; the rate
// is rendered from the exact ratio.
struct EvasionReport {
    struct Row {
        std::string group;
        int factor = 1;
        long total = 0;
        long flagged = 0;
        double evasion_rate() const { return static_cast<double>(total - flagged) / static_cast<double>(total); }
    };
    std::vector<Row> rows;  // sorted by (group, factor)
};

// Groups verdicts by the source image's manifest group and split factor.
EvasionReport evasion_rate(const std::vector<ModerationVerdict>& verdicts,
                           const corpus::Manifest& manifest);

}  // namespace stitch::moderation
