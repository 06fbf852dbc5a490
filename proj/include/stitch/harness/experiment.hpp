#pragma once

#include <ostream>

#include "stitch/harness/runstore.hpp"

namespace stitch::harness {

struct RunOutcome {
    std::vector<RunRecord> records;
    bool interrupted = false;  // stopped early (cell budget)

    int failed_cells() const {
        int n = 0;
        for (const auto& r : records) n += r.status != "ok";
        return n;
    }
};

// Rewrites targets (and the candidate lists) for a safety arm; IDs become
// "safe"/"unsafe" group labels. Group-A/B arms keep only the hazard
// groups; the label-flip arm keeps everything. Throws ConfigError when
// the resulting safe/unsafe counts are unbalanced.
corpus::Manifest apply_safety_assignment(const corpus::Manifest& base, SafetyAssignment sa);

// Runs the full sweep: for every (factor, seed[, lr, threshold]) cell,
// build the patch set, apply the moderation and ambiguity filters, finetune
// from the shared stage-0 checkpoint, evaluate every requested mode per
// epoch, and persist the cell atomically. Completed cells are skipped on
// rerun, so an interrupted sweep resumes to the same final record set.
// max_cells >= 0 stops after that many cells have been brought to
// completion this invocation (interruption testing / budgeting).
RunOutcome run_experiment(const ExperimentConfig& cfg, long max_cells = -1, std::ostream* log = nullptr);

}  // namespace stitch::harness
