#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace dtr {

// One pre-chunked corpus passage; the unit that is retrieved and cited.
struct DocChunk {
    std::string id;
    std::string title;
    std::string text;

    friend bool operator==(const DocChunk&, const DocChunk&) = default;
};

struct QueryItem {
    std::string id;
    std::string question;
    std::vector<std::string> gold_answers;
    std::optional<std::vector<std::string>> gold_doc_ids;

    friend bool operator==(const QueryItem&, const QueryItem&) = default;
};

// Line-delimited JSON, fields id / title / text. Malformed lines raise
// Error(parse) naming the 1-based line number; duplicate ids raise
// Error(integrity) naming the id. Blank lines are skipped.
std::vector<DocChunk> load_corpus(const std::filesystem::path& path);
std::vector<DocChunk> parse_corpus(const std::vector<std::string>& lines);
std::string serialize_corpus(const std::vector<DocChunk>& chunks);

// Fields id / question / answers / gold_doc_ids.
std::vector<QueryItem> load_queries(const std::filesystem::path& path);
std::vector<QueryItem> parse_queries(const std::vector<std::string>& lines);
std::string serialize_queries(const std::vector<QueryItem>& queries);

// Immutable id -> chunk lookup.
class ChunkStore {
public:
    ChunkStore() = default;
    explicit ChunkStore(std::vector<DocChunk> chunks);

    const DocChunk* find(const std::string& id) const;
    const DocChunk& at(const std::string& id) const;  // Error(integrity) when absent
    const std::vector<DocChunk>& chunks() const noexcept { return chunks_; }
    std::size_t size() const noexcept { return chunks_.size(); }

private:
    std::vector<DocChunk> chunks_;
    std::unordered_map<std::string, std::size_t> by_id_;
};

// Every gold_doc_id must exist in the corpus.
void validate_queries(const std::vector<QueryItem>& queries, const ChunkStore& corpus);

// Raw documents are expected pre-chunked; this is the extension point for a
// real splitter.
class Chunker {
public:
    virtual ~Chunker() = default;
    virtual std::vector<DocChunk> chunk(const DocChunk& document) const = 0;
};

class PassthroughChunker final : public Chunker {
public:
    std::vector<DocChunk> chunk(const DocChunk& document) const override {
        return {document};
    }
};

} // namespace dtr
