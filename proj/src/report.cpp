#include "alab/iteration.hpp"

#include <sstream>

namespace alab {

std::string_view to_string(IterationPath path) {
    switch (path) {
        case IterationPath::mal: return "mal";
        case IterationPath::committee: return "committee";
        case IterationPath::propagation_only: return "propagation_only";
        case IterationPath::random: return "random";
    }
    return "?";
}

IterationPath iteration_path_from_string(std::string_view text) {
    for (auto p : {IterationPath::mal, IterationPath::committee, IterationPath::propagation_only, IterationPath::random})
        if (to_string(p) == text) return p;
    throw Error(ErrorKind::InvalidArgument, "unknown iteration path " + std::string(text));
}

std::string format_iteration_summary(const IterationRecord& r) {
    std::ostringstream out;
    out << "iteration " << r.iteration_id << "  node " << r.node_id.str() << "  window ["
        << format_iso8601(r.window_start) << ", " << format_iso8601(r.window_end) << ")\n";
    out << "  created     " << format_iso8601(r.created_at) << "\n";
    out << "  window      " << r.window_count << " audios, " << r.labeled_count << " labeled, " << r.unlabeled_count
        << " unlabeled (" << 100.0 * r.labeled_pct << "% labeled)\n";
    out << "  partition   set " << r.processed_set + 1 << " of " << r.n_ds << " (plan " << r.plan_id << "), "
        << r.processed.size() << " eligible\n";
    out << "  medoids     " << r.medoids.size() << " (window " << r.medoid_tiers[0] << ", node " << r.medoid_tiers[1]
        << ", other " << r.medoid_tiers[2] << ")\n";
    out << "  path        " << to_string(r.path) << "\n";
    out << "  proposals   " << r.batch.proposals.size() << " of budget " << r.batch.budget;
    for (auto p : {Provenance::mal_medoid, Provenance::mismatch, Provenance::uncertainty_fill, Provenance::random_baseline})
        if (auto n = r.batch.count(p)) out << ", " << to_string(p) << " " << n;
    out << "\n";
    if (r.path == IterationPath::committee || r.path == IterationPath::propagation_only) {
        out << "  committee   " << r.mismatch_count << " mismatches";
        if (r.path == IterationPath::committee)
            out << ", classifier train accuracy " << r.classifier_train_accuracy << " after "
                << r.classifier_iterations << " iterations";
        out << "\n";
    }
    out << "  folds       " << r.fold_count << "\n";
    return out.str();
}

}  // namespace alab
