#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "dtr/corpus.hpp"
#include "dtr/unit_vector.hpp"
#include "dtr/vector_index.hpp"

namespace dtr {

// One member of the dual-path union with both similarities and the joint
// angular score.
struct ScoredDoc {
    std::string doc_id;
    double s1 = 0.0;     // <d, q>, clamped to [-1, 1]
    double s2 = 0.0;     // <d, p>, clamped to [-1, 1]
    double joint = 0.0;  // cos(theta1 + theta2)

    friend bool operator==(const ScoredDoc&, const ScoredDoc&) = default;
};

struct SelectionResult {
    std::vector<DocChunk> selected;
    std::vector<ScoredDoc> candidates;  // union, in selection order
    std::vector<Hit> hits_q;
    std::vector<Hit> hits_p;
    double theta0 = 0.0;  // arccos <q, p>, diagnostic only
};

struct DualHits {
    std::vector<Hit> hits_q;
    std::vector<Hit> hits_p;
};

// cos(acos s1 + acos s2) = s1*s2 - sqrt(1 - s1^2) * sqrt(1 - s2^2), with both
// inputs clamped into [-1, 1] first.
double joint_score(double s1, double s2) noexcept;

// Two independent top-n searches, one from the query and one from the
// pseudo-context embedding.
DualHits dual_retrieve(const FlatIndex& index, const UnitVector& q_vec, const UnitVector& p_vec,
                       std::size_t n);

// Union by doc id, then both similarities for every member (looked up from
// the index even when only one path found the doc), then top-k by joint score
// descending with doc id ascending on ties.
SelectionResult select(const ChunkStore& chunks, const std::vector<Hit>& hits_q,
                       const std::vector<Hit>& hits_p, const UnitVector& q_vec,
                       const UnitVector& p_vec, std::size_t k, const FlatIndex& index);

} // namespace dtr
