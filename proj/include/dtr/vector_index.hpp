#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "dtr/corpus.hpp"
#include "dtr/unit_vector.hpp"

namespace dtr {

struct Hit {
    std::string doc_id;
    double score = 0.0;

    friend bool operator==(const Hit&, const Hit&) = default;
};

// Exact inner-product retriever over unit vectors. Immutable once built, so
// concurrent searches need no coordination.
class FlatIndex {
public:
    // Error(build) on empty input, length mismatch or mixed dimensions.
    static FlatIndex build(const std::vector<DocChunk>& chunks, const std::vector<UnitVector>& vectors);

    // Top min(n, size()) hits by score descending, doc_id ascending on ties.
    // Error(search) on dimension mismatch or n == 0.
    std::vector<Hit> search(const UnitVector& probe, std::size_t n) const;

    // Every document, ranked; used for gold-rank diagnostics.
    std::vector<Hit> rank_all(const UnitVector& probe) const;

    // Stored vector for a doc id; Error(integrity) when unknown.
    std::span<const float> vector_of(const std::string& doc_id) const;
    bool contains(const std::string& doc_id) const { return row_of_.count(doc_id) != 0; }

    std::size_t size() const noexcept { return ids_.size(); }
    std::size_t dimension() const noexcept { return dim_; }
    const std::vector<std::string>& ids() const noexcept { return ids_; }
    std::span<const float> matrix() const noexcept { return matrix_; }

    // Binary snapshot: "DTRIDX01", u32 dim, u64 count, count x (u32 len, id
    // bytes), then count*dim little-endian f32.
    void save(const std::filesystem::path& file) const;
    static FlatIndex load(const std::filesystem::path& file);

private:
    FlatIndex() = default;
    void check_probe(const UnitVector& probe) const;

    std::size_t dim_ = 0;
    std::vector<std::string> ids_;
    std::vector<float> matrix_;
    std::unordered_map<std::string, std::size_t> row_of_;
};

} // namespace dtr
