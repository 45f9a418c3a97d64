#include "dtr/corpus.hpp"

#include <nlohmann/json.hpp>

#include <unordered_set>

#include "dtr/error.hpp"
#include "dtr/util.hpp"

namespace dtr {

using nlohmann::json;

namespace {

[[noreturn]] void parse_error(std::size_t line_no, const std::string& what) {
    fail(ErrorCategory::parse, "line " + std::to_string(line_no) + ": " + what);
}

json parse_line(const std::string& line, std::size_t line_no) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::parse_error& e) {
        parse_error(line_no, std::string("malformed record: ") + e.what());
    }
    if (!j.is_object()) {
        parse_error(line_no, "record is not an object");
    }
    return j;
}

std::string required_string(const json& j, const char* key, std::size_t line_no) {
    auto it = j.find(key);
    if (it == j.end() || !it->is_string()) {
        parse_error(line_no, std::string("missing string field '") + key + "'");
    }
    return it->get<std::string>();
}

std::vector<std::string> string_list(const json& j, const char* key, std::size_t line_no) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) {
        return {};
    }
    if (it->is_string()) {
        return {it->get<std::string>()};
    }
    if (!it->is_array()) {
        parse_error(line_no, std::string("field '") + key + "' must be a list of strings");
    }
    std::vector<std::string> out;
    for (const auto& v : *it) {
        if (!v.is_string()) {
            parse_error(line_no, std::string("field '") + key + "' must be a list of strings");
        }
        out.push_back(v.get<std::string>());
    }
    return out;
}

// JSON ids may be numbers in some QA dumps.
std::string id_field(const json& j, std::size_t line_no) {
    auto it = j.find("id");
    if (it != j.end() && it->is_number_integer()) {
        return std::to_string(it->get<long long>());
    }
    auto id = required_string(j, "id", line_no);
    if (id.empty()) {
        parse_error(line_no, "empty id");
    }
    return id;
}

} // namespace

std::vector<DocChunk> parse_corpus(const std::vector<std::string>& lines) {
    std::vector<DocChunk> chunks;
    std::unordered_set<std::string> seen;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (is_blank(lines[i])) {
            continue;
        }
        const std::size_t line_no = i + 1;
        json j = parse_line(lines[i], line_no);
        DocChunk c;
        c.id = id_field(j, line_no);
        if (auto it = j.find("title"); it != j.end() && it->is_string()) {
            c.title = it->get<std::string>();
        }
        c.text = required_string(j, "text", line_no);
        if (is_blank(c.text)) {
            parse_error(line_no, "empty text for id '" + c.id + "'");
        }
        if (!seen.insert(c.id).second) {
            fail(ErrorCategory::integrity, "duplicate chunk id '" + c.id + "'");
        }
        chunks.push_back(std::move(c));
    }
    return chunks;
}

std::vector<DocChunk> load_corpus(const std::filesystem::path& path) {
    return parse_corpus(read_lines(path));
}

std::string serialize_corpus(const std::vector<DocChunk>& chunks) {
    std::string out;
    for (const auto& c : chunks) {
        out += json{{"id", c.id}, {"title", c.title}, {"text", c.text}}.dump();
        out += '\n';
    }
    return out;
}

std::vector<QueryItem> parse_queries(const std::vector<std::string>& lines) {
    std::vector<QueryItem> queries;
    std::unordered_set<std::string> seen;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (is_blank(lines[i])) {
            continue;
        }
        const std::size_t line_no = i + 1;
        json j = parse_line(lines[i], line_no);
        QueryItem q;
        q.id = id_field(j, line_no);
        q.question = required_string(j, "question", line_no);
        if (is_blank(q.question)) {
            parse_error(line_no, "empty question for id '" + q.id + "'");
        }
        q.gold_answers = string_list(j, "answers", line_no);
        if (auto it = j.find("gold_doc_ids"); it != j.end() && !it->is_null()) {
            q.gold_doc_ids = string_list(j, "gold_doc_ids", line_no);
        }
        if (!seen.insert(q.id).second) {
            fail(ErrorCategory::integrity, "duplicate query id '" + q.id + "'");
        }
        queries.push_back(std::move(q));
    }
    return queries;
}

std::vector<QueryItem> load_queries(const std::filesystem::path& path) {
    return parse_queries(read_lines(path));
}

std::string serialize_queries(const std::vector<QueryItem>& queries) {
    std::string out;
    for (const auto& q : queries) {
        json j{{"id", q.id}, {"question", q.question}, {"answers", q.gold_answers}};
        if (q.gold_doc_ids) {
            j["gold_doc_ids"] = *q.gold_doc_ids;
        }
        out += j.dump();
        out += '\n';
    }
    return out;
}

ChunkStore::ChunkStore(std::vector<DocChunk> chunks) : chunks_(std::move(chunks)) {
    by_id_.reserve(chunks_.size());
    for (std::size_t i = 0; i < chunks_.size(); ++i) {
        if (!by_id_.emplace(chunks_[i].id, i).second) {
            fail(ErrorCategory::integrity, "duplicate chunk id '" + chunks_[i].id + "'");
        }
    }
}

const DocChunk* ChunkStore::find(const std::string& id) const {
    auto it = by_id_.find(id);
    return it == by_id_.end() ? nullptr : &chunks_[it->second];
}

const DocChunk& ChunkStore::at(const std::string& id) const {
    if (const auto* c = find(id)) {
        return *c;
    }
    fail(ErrorCategory::integrity, "unknown chunk id '" + id + "'");
}

void validate_queries(const std::vector<QueryItem>& queries, const ChunkStore& corpus) {
    for (const auto& q : queries) {
        if (!q.gold_doc_ids) {
            continue;
        }
        for (const auto& id : *q.gold_doc_ids) {
            if (!corpus.find(id)) {
                fail(ErrorCategory::integrity,
                     "query '" + q.id + "' references unknown gold doc '" + id + "'");
            }
        }
    }
}

} // namespace dtr
