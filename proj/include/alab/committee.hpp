#pragma once

#include "alab/domain.hpp"
#include "alab/kmedoids.hpp"
#include "alab/linalg.hpp"
#include "alab/logistic_regression.hpp"

#include <map>
#include <span>
#include <string_view>
#include <vector>

namespace alab {

enum class Provenance { mal_medoid, mismatch, uncertainty_fill, random_baseline };

std::string_view to_string(Provenance p);
Provenance provenance_from_string(std::string_view text);

struct Proposal {
    AudioId audio_id;
    Provenance provenance = Provenance::mal_medoid;

    friend bool operator==(const Proposal&, const Proposal&) = default;
};

struct ProposalBatch {
    IterationId iteration_id = 0;
    std::size_t budget = 0;
    std::vector<Proposal> proposals;

    std::vector<AudioId> ids() const;
    std::size_t count(Provenance p) const;
};

// A labeled sample usable as a medoid or as classifier training data.
struct LabeledEmbedding {
    AudioId audio_id;
    ClassId class_id = 0;
    Eigen::VectorXf vector;
    // Larger is newer; orders medoids within a tier.
    std::int64_t consensus_seq = 0;
};

inline constexpr std::size_t kDefaultMedoidCapacity = 5000;
inline constexpr std::size_t kDefaultBudget = 400;

struct MedoidPool {
    std::size_t capacity = kDefaultMedoidCapacity;
    std::vector<LabeledEmbedding> entries;
    // Entries per tier: window, same node other windows, other nodes.
    std::array<std::size_t, 3> tier_counts{0, 0, 0};

    bool empty() const noexcept { return entries.empty(); }
    std::size_t size() const noexcept { return entries.size(); }
};

struct CommitteePrediction {
    AudioId audio_id;
    ClassId propagated_class = 0;
    ClassId classifier_class = 0;
    double classifier_confidence = 0;

    bool mismatch() const noexcept { return propagated_class != classifier_class; }
};

// Rows of the records' embeddings, in record order.
EmbeddingMatrix stack_embeddings(std::span<const EmbeddingRecord> records);
EmbeddingMatrix stack_embeddings(std::span<const LabeledEmbedding> records);

// Bootstrap proposal: the k medoids of a k-medoids clustering of the pool.
ProposalBatch mal_bootstrap(std::span<const EmbeddingRecord> records, std::size_t k,
                            const KMedoidsOptions& options = {});

struct Propagation {
    std::map<AudioId, ClassId> labels;
    std::map<AudioId, double> distance;  // to the nearest medoid
};

// Each record takes the class of its nearest medoid; equal distances resolve to the
// lowest medoid id.
Propagation propagate_labels(const MedoidPool& medoids, std::span<const EmbeddingRecord> records);

class CommitteeClassifier {
public:
    struct Prediction {
        ClassId class_id = 0;
        double confidence = 0;
    };

    explicit CommitteeClassifier(MultinomialLogistic<double> model) : model_(std::move(model)) {}

    std::vector<Prediction> predict(const EmbeddingMatrix& x) const;
    RowMatrix<double> predict_proba(const EmbeddingMatrix& x) const { return model_.predict_proba(x); }
    std::vector<ClassId> classes() const;
    const LogisticDiagnostics& diagnostics() const noexcept { return model_.diagnostics(); }

private:
    MultinomialLogistic<double> model_;
};

// Throws SingleClassDegenerate when fewer than two distinct classes are present.
CommitteeClassifier train_committee_classifier(std::span<const LabeledEmbedding> labeled,
                                               const LogisticOptions& options = {});

// Mismatches first, farthest-point-first against `anchors` and the picks so far;
// leftover budget goes to agreeing samples by ascending classifier confidence.
// `embeddings` rows are parallel to `predictions`.
ProposalBatch mismatch_first_select(std::span<const CommitteePrediction> predictions,
                                    const EmbeddingMatrix& embeddings, const EmbeddingMatrix& anchors,
                                    const AudioSet& already_selected, std::size_t budget);

// Fills capacity tier by tier (window labels, same node elsewhere, other nodes);
// newest consensus first inside a tier, id as the tie-break.
MedoidPool select_medoids(std::span<const LabeledEmbedding> window_labeled,
                          std::span<const LabeledEmbedding> same_node_other_windows,
                          std::span<const LabeledEmbedding> other_nodes, std::size_t n_mmax);

}  // namespace alab
