#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dtr/corpus.hpp"
#include "dtr/vector_index.hpp"

namespace dtr {

// Index snapshot directory: index.bin (FlatIndex::save), chunks.jsonl and
// meta.json recording the embedder id the vectors came from.
struct Snapshot {
    std::vector<DocChunk> chunks;
    FlatIndex index;
    std::string embedder_id;
};

void write_snapshot(const std::filesystem::path& dir, const std::vector<DocChunk>& chunks,
                    const FlatIndex& index, const std::string& embedder_id);

// Error(integrity) when the parts disagree (ids, counts).
Snapshot load_snapshot(const std::filesystem::path& dir);

} // namespace dtr
