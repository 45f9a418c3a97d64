#include "dtr/vector_index.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "dtr/error.hpp"
#include "dtr/kernels.hpp"
#include "dtr/util.hpp"

namespace dtr {

namespace {

constexpr char kMagic[8] = {'D', 'T', 'R', 'I', 'D', 'X', '0', '1'};

template <typename T>
void put(std::string& buf, T v) {
    char bytes[sizeof(T)];
    std::memcpy(bytes, &v, sizeof(T));
    buf.append(bytes, sizeof(T));
}

template <typename T>
T take(std::istream& in, const std::filesystem::path& file) {
    T v{};
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) {
        fail(ErrorCategory::integrity, "truncated index snapshot " + file.string());
    }
    return v;
}

} // namespace

FlatIndex FlatIndex::build(const std::vector<DocChunk>& chunks,
                           const std::vector<UnitVector>& vectors) {
    if (chunks.empty()) {
        fail(ErrorCategory::build, "cannot build an index from zero chunks");
    }
    if (chunks.size() != vectors.size()) {
        fail(ErrorCategory::build, "chunk/vector count mismatch: " +
                                           std::to_string(chunks.size()) + " vs " +
                                           std::to_string(vectors.size()));
    }
    FlatIndex idx;
    idx.dim_ = vectors.front().dimension();
    idx.ids_.reserve(chunks.size());
    idx.matrix_.reserve(chunks.size() * idx.dim_);
    for (std::size_t i = 0; i < chunks.size(); ++i) {
        if (vectors[i].dimension() != idx.dim_) {
            fail(ErrorCategory::build, "dimension mismatch at chunk '" + chunks[i].id + "'");
        }
        if (!idx.row_of_.emplace(chunks[i].id, i).second) {
            fail(ErrorCategory::build, "duplicate chunk id '" + chunks[i].id + "'");
        }
        idx.ids_.push_back(chunks[i].id);
        const auto v = vectors[i].values();
        idx.matrix_.insert(idx.matrix_.end(), v.begin(), v.end());
    }
    return idx;
}

void FlatIndex::check_probe(const UnitVector& probe) const {
    if (probe.dimension() != dim_) {
        fail(ErrorCategory::search, "probe dimension " + std::to_string(probe.dimension()) +
                                            " does not match index dimension " +
                                            std::to_string(dim_));
    }
}

std::vector<Hit> FlatIndex::search(const UnitVector& probe, std::size_t n) const {
    check_probe(probe);
    if (n == 0) {
        fail(ErrorCategory::search, "n must be positive");
    }
    std::vector<double> scores(ids_.size());
    kernels::inner_products({matrix_, ids_.size(), dim_}, probe.values(), scores);
    const auto order = kernels::top_n(scores, ids_, n);
    std::vector<Hit> hits;
    hits.reserve(order.size());
    for (auto i : order) {
        hits.push_back({ids_[i], scores[i]});
    }
    return hits;
}

std::vector<Hit> FlatIndex::rank_all(const UnitVector& probe) const {
    return search(probe, ids_.size());
}

std::span<const float> FlatIndex::vector_of(const std::string& doc_id) const {
    auto it = row_of_.find(doc_id);
    if (it == row_of_.end()) {
        fail(ErrorCategory::integrity, "doc id '" + doc_id + "' is not in the index");
    }
    return std::span<const float>(matrix_).subspan(it->second * dim_, dim_);
}

void FlatIndex::save(const std::filesystem::path& file) const {
    std::string buf(kMagic, sizeof kMagic);
    put(buf, static_cast<std::uint32_t>(dim_));
    put(buf, static_cast<std::uint64_t>(ids_.size()));
    for (const auto& id : ids_) {
        put(buf, static_cast<std::uint32_t>(id.size()));
        buf += id;
    }
    buf.append(reinterpret_cast<const char*>(matrix_.data()), matrix_.size() * sizeof(float));
    write_file_atomic(file, buf);
}

FlatIndex FlatIndex::load(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) {
        fail(ErrorCategory::io, "cannot open index snapshot " + file.string());
    }
    char magic[sizeof kMagic];
    if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
        fail(ErrorCategory::integrity, "not an index snapshot: " + file.string());
    }
    FlatIndex idx;
    idx.dim_ = take<std::uint32_t>(in, file);
    const auto count = take<std::uint64_t>(in, file);
    if (idx.dim_ == 0 || count == 0) {
        fail(ErrorCategory::integrity, "empty index snapshot " + file.string());
    }
    idx.ids_.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        const auto len = take<std::uint32_t>(in, file);
        std::string id(len, '\0');
        if (!in.read(id.data(), len)) {
            fail(ErrorCategory::integrity, "truncated index snapshot " + file.string());
        }
        if (!idx.row_of_.emplace(id, i).second) {
            fail(ErrorCategory::integrity, "duplicate id '" + id + "' in snapshot");
        }
        idx.ids_.push_back(std::move(id));
    }
    idx.matrix_.resize(count * idx.dim_);
    if (!in.read(reinterpret_cast<char*>(idx.matrix_.data()),
                 static_cast<std::streamsize>(idx.matrix_.size() * sizeof(float)))) {
        fail(ErrorCategory::integrity, "truncated index snapshot " + file.string());
    }
    return idx;
}

} // namespace dtr
