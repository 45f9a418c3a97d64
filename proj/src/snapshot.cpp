#include "dtr/snapshot.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "dtr/error.hpp"
#include "dtr/util.hpp"

namespace dtr {

void write_snapshot(const std::filesystem::path& dir, const std::vector<DocChunk>& chunks,
                    const FlatIndex& index, const std::string& embedder_id) {
    std::filesystem::create_directories(dir);
    index.save(dir / "index.bin");
    write_file_atomic(dir / "chunks.jsonl", serialize_corpus(chunks));
    nlohmann::json meta{{"embedder_id", embedder_id},
                        {"dimension", index.dimension()},
                        {"count", index.size()}};
    write_file_atomic(dir / "meta.json", meta.dump(2) + "\n");
}

Snapshot load_snapshot(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) {
        fail(ErrorCategory::io, "index snapshot directory not found: " + dir.string());
    }
    auto chunks = load_corpus(dir / "chunks.jsonl");
    auto index = FlatIndex::load(dir / "index.bin");
    nlohmann::json meta;
    try {
        std::ifstream in(dir / "meta.json");
        meta = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCategory::integrity, "bad snapshot meta.json: " + std::string(e.what()));
    }
    if (chunks.size() != index.size()) {
        fail(ErrorCategory::integrity, "snapshot chunk count does not match index");
    }
    for (std::size_t i = 0; i < chunks.size(); ++i) {
        if (chunks[i].id != index.ids()[i]) {
            fail(ErrorCategory::integrity, "snapshot chunk order does not match index");
        }
    }
    return {std::move(chunks), std::move(index), meta.value("embedder_id", std::string())};
}

} // namespace dtr
