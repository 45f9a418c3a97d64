#include "dtr/dpr_ais.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "dtr/error.hpp"

namespace dtr {

namespace {

double clamp_unit(double s) noexcept {
    return std::clamp(s, -1.0, 1.0);
}

} // namespace

double joint_score(double s1, double s2) noexcept {
    s1 = clamp_unit(s1);
    s2 = clamp_unit(s2);
    const double joint = s1 * s2 - std::sqrt(1.0 - s1 * s1) * std::sqrt(1.0 - s2 * s2);
    return clamp_unit(joint);
}

DualHits dual_retrieve(const FlatIndex& index, const UnitVector& q_vec, const UnitVector& p_vec,
                       std::size_t n) {
    return {index.search(q_vec, n), index.search(p_vec, n)};
}

SelectionResult select(const ChunkStore& chunks, const std::vector<Hit>& hits_q,
                       const std::vector<Hit>& hits_p, const UnitVector& q_vec,
                       const UnitVector& p_vec, std::size_t k, const FlatIndex& index) {
    if (k == 0) {
        fail(ErrorCategory::contract, "selection size k must be positive");
    }
    SelectionResult out;
    out.hits_q = hits_q;
    out.hits_p = hits_p;
    out.theta0 = std::acos(clamp_unit(dot(q_vec.values(), p_vec.values())));

    std::unordered_set<std::string> seen;
    auto add = [&](const Hit& h) {
        if (!seen.insert(h.doc_id).second) {
            return;
        }
        chunks.at(h.doc_id);  // integrity check before scoring
        const auto d = index.vector_of(h.doc_id);
        ScoredDoc sd;
        sd.doc_id = h.doc_id;
        sd.s1 = clamp_unit(dot(d, q_vec.values()));
        sd.s2 = clamp_unit(dot(d, p_vec.values()));
        sd.joint = joint_score(sd.s1, sd.s2);
        out.candidates.push_back(std::move(sd));
    };
    for (const auto& h : hits_q) add(h);
    for (const auto& h : hits_p) add(h);

    std::sort(out.candidates.begin(), out.candidates.end(),
              [](const ScoredDoc& a, const ScoredDoc& b) {
                  if (a.joint != b.joint) {
                      return a.joint > b.joint;
                  }
                  return a.doc_id < b.doc_id;
              });
    const std::size_t take = std::min(k, out.candidates.size());
    out.selected.reserve(take);
    for (std::size_t i = 0; i < take; ++i) {
        out.selected.push_back(chunks.at(out.candidates[i].doc_id));
    }
    return out;
}

} // namespace dtr
