#pragma once

// Deterministic corpora, scripted backends and brute-force oracles shared by
// the unit and acceptance suites. Nothing here calls into the retrieval or
// scoring code under test.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <memory>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "dtr/corpus.hpp"
#include "dtr/embedding.hpp"
#include "dtr/generator.hpp"

namespace dtr::testing {

// SplitMix64: identical sequence on every platform, unlike std distributions.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    std::size_t below(std::size_t n) { return static_cast<std::size_t>(next() % n); }

private:
    std::uint64_t state_;
};

inline std::vector<float> random_raw(Rng& rng, std::size_t dim) {
    std::vector<float> v(dim);
    for (auto& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
    return v;
}

inline std::string two_digit(std::size_t i) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "%02zu", i);
    return buf;
}

// Naive full-scan ranking used as the retrieval oracle.
struct OracleHit {
    std::string id;
    double score;
};

inline std::vector<OracleHit> oracle_rank(const std::vector<std::string>& ids,
                                          const std::vector<std::vector<float>>& docs,
                                          std::span<const float> probe) {
    std::vector<OracleHit> all;
    for (std::size_t i = 0; i < docs.size(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < probe.size(); ++j) {
            s += static_cast<double>(docs[i][j]) * static_cast<double>(probe[j]);
        }
        all.push_back({ids[i], s});
    }
    std::sort(all.begin(), all.end(), [](const OracleHit& a, const OracleHit& b) {
        return a.score != b.score ? a.score > b.score : a.id < b.id;
    });
    return all;
}

inline double oracle_joint(double s1, double s2) {
    s1 = std::clamp(s1, -1.0, 1.0);
    s2 = std::clamp(s2, -1.0, 1.0);
    return std::cos(std::acos(s1) + std::acos(s2));
}

// ---------------------------------------------------------------------------
// Dual-path corpus: 40 one-hot documents in 64 dimensions, 25 queries. Every
// similarity is a coordinate of the query or pseudo-context vector, so ranks
// can be read straight off the table below (n = 5, k = 3):
//
//   queries  gold rank on q path   gold rank on p path
//   00-09    1                     1
//   10-14    2                     4
//   15-21    7                     1
//   22-24    7                     2
// ---------------------------------------------------------------------------
struct DualPathCorpus {
    static constexpr std::size_t kDim = 64;
    static constexpr std::size_t kDocs = 40;
    static constexpr std::size_t kQueries = 25;

    std::vector<DocChunk> chunks;
    std::vector<QueryItem> queries;
    std::vector<std::vector<float>> doc_vecs;
    std::vector<std::vector<float>> q_vecs;
    std::vector<std::vector<float>> p_vecs;
    std::vector<std::string> pseudo_texts;

    static std::string doc_text(std::size_t j) { return "Document " + two_digit(j) + " passage."; }
    static std::string question(std::size_t i) { return "Question " + two_digit(i) + "?"; }
    static std::string answer(std::size_t i) { return "answer" + two_digit(i); }

    DualPathCorpus() {
        for (std::size_t j = 0; j < kDocs; ++j) {
            chunks.push_back({"doc" + two_digit(j), "", doc_text(j)});
            std::vector<float> v(kDim, 0.0f);
            v[j] = 1.0f;
            doc_vecs.push_back(v);
        }
        for (std::size_t i = 0; i < kQueries; ++i) {
            auto d = [&](std::size_t m) { return 25 + (i + m) % 15; };
            std::map<std::size_t, double> q, p;
            if (i < 10) {
                q = {{i, .80}, {d(0), .30}, {d(1), .25}, {d(2), .20}, {d(3), .15}, {d(4), .10}};
                p = {{i, .85}, {d(5), .30}, {d(6), .25}, {d(7), .20}, {d(8), .15}, {d(9), .10}};
            } else if (i < 15) {
                q = {{d(0), .62}, {i, .55}, {d(1), .25}, {d(2), .20}, {d(3), .15}, {d(4), .10}};
                p = {{d(5), .45}, {d(6), .42}, {d(7), .40}, {i, .35}, {d(8), .10}};
            } else {
                q = {{d(0), .40}, {d(1), .38}, {d(2), .36}, {d(3), .34},
                     {d(4), .32}, {d(5), .30}, {i, .20}};
                if (i < 22) {
                    p = {{i, .75}, {d(6), .35}, {d(7), .30}, {d(8), .25}, {d(9), .20}};
                } else {
                    p = {{d(6), .60}, {i, .55}, {d(7), .25}, {d(8), .20}, {d(9), .15}};
                }
            }
            q_vecs.push_back(unit_with_residual(q, 40 + i % 12));
            p_vecs.push_back(unit_with_residual(p, 52 + i % 12));
            pseudo_texts.push_back("Pseudo context for question " + two_digit(i) + ".");
            queries.push_back({"q" + two_digit(i), question(i), {answer(i)},
                               std::vector<std::string>{"doc" + two_digit(i)}});
        }
    }

    std::unique_ptr<ScriptedEmbedder> embedder() const {
        auto e = std::make_unique<ScriptedEmbedder>("dual-path-fixture");
        for (std::size_t j = 0; j < kDocs; ++j) e->add(chunks[j].text, doc_vecs[j]);
        for (std::size_t i = 0; i < kQueries; ++i) {
            e->add(queries[i].question, q_vecs[i]);
            e->add(pseudo_texts[i], p_vecs[i]);
        }
        return e;
    }

    // Parametric answers are wrong and uncertain (u = 0.5) so every gated mode
    // retrieves; the final answer is right iff the gold passage is in the prompt.
    std::unique_ptr<MockGenerator> generator() const {
        auto g = std::make_unique<MockGenerator>("dual-path-mock");
        for (std::size_t i = 0; i < kQueries; ++i) {
            g->script_exact(render_prompt(PromptKind::answer_no_retrieval, question(i)),
                            scripted("unknown", {-0.5}));
            g->script_exact(render_prompt(PromptKind::pseudo_context, question(i)),
                            scripted(pseudo_texts[i], {-0.2, -0.3}));
            g->script_contains({question(i), doc_text(i)}, scripted(answer(i), {-0.01}));
            g->script_contains({question(i)}, scripted("unknown", {-1.0}));
        }
        return g;
    }

    std::vector<std::string> ids() const {
        std::vector<std::string> out;
        for (const auto& c : chunks) out.push_back(c.id);
        return out;
    }

private:
    static std::vector<float> unit_with_residual(const std::map<std::size_t, double>& coords,
                                                 std::size_t residual_dim) {
        std::vector<float> v(kDim, 0.0f);
        double sq = 0.0;
        for (auto [j, x] : coords) {
            v[j] = static_cast<float>(x);
            sq += x * x;
        }
        v[residual_dim] = static_cast<float>(std::sqrt(1.0 - sq));
        return v;
    }
};

// Brute-force expectations for the dual-path corpus, from the raw vectors.
struct DualPathOracle {
    std::vector<std::vector<std::string>> ais;          // AIS top-k per query
    std::vector<std::vector<std::string>> query_only;   // q top-k
    std::map<std::pair<std::size_t, std::size_t>, std::vector<std::vector<std::string>>> mix;
    std::vector<std::size_t> q_rank;                    // 1-based gold rank, q path
    std::vector<std::size_t> p_rank;

    DualPathOracle(const DualPathCorpus& c, std::size_t n, std::size_t k) {
        const auto ids = c.ids();
        for (std::size_t i = 0; i < c.queries.size(); ++i) {
            const auto gold = c.queries[i].gold_doc_ids->front();
            const auto rq = oracle_rank(ids, c.doc_vecs, c.q_vecs[i]);
            const auto rp = oracle_rank(ids, c.doc_vecs, c.p_vecs[i]);
            auto rank_of = [&](const std::vector<OracleHit>& r) {
                for (std::size_t x = 0; x < r.size(); ++x)
                    if (r[x].id == gold) return x + 1;
                return r.size() + 1;
            };
            q_rank.push_back(rank_of(rq));
            p_rank.push_back(rank_of(rp));

            std::vector<std::string> qo;
            for (std::size_t x = 0; x < k; ++x) qo.push_back(rq[x].id);
            query_only.push_back(qo);

            // AIS: union of both top-n, joint by the arccos form.
            std::map<std::string, std::size_t> pos;
            for (std::size_t x = 0; x < ids.size(); ++x) pos[ids[x]] = x;
            std::vector<std::string> uni;
            for (std::size_t x = 0; x < n; ++x) uni.push_back(rq[x].id);
            for (std::size_t x = 0; x < n; ++x)
                if (std::find(uni.begin(), uni.end(), rp[x].id) == uni.end()) uni.push_back(rp[x].id);
            std::vector<std::pair<double, std::string>> scored;
            for (const auto& id : uni) {
                const auto& dv = c.doc_vecs[pos[id]];
                double s1 = 0, s2 = 0;
                for (std::size_t j = 0; j < dv.size(); ++j) {
                    s1 += static_cast<double>(dv[j]) * c.q_vecs[i][j];
                    s2 += static_cast<double>(dv[j]) * c.p_vecs[i][j];
                }
                scored.emplace_back(oracle_joint(s1, s2), id);
            }
            std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
                return a.first != b.first ? a.first > b.first : a.second < b.second;
            });
            std::vector<std::string> sel;
            for (std::size_t x = 0; x < k && x < scored.size(); ++x) sel.push_back(scored[x].second);
            ais.push_back(sel);

            for (auto [a, b] : {std::pair<std::size_t, std::size_t>{2, 1}, {1, 2}}) {
                std::vector<std::string> m;
                for (std::size_t x = 0; x < a; ++x) m.push_back(rq[x].id);
                std::size_t taken = 0;
                for (std::size_t x = 0; x < n && taken < b; ++x) {
                    if (std::find(m.begin(), m.end(), rp[x].id) == m.end()) {
                        m.push_back(rp[x].id);
                    }
                    ++taken;
                }
                for (std::size_t x = a; x < n && m.size() < k; ++x)
                    if (std::find(m.begin(), m.end(), rq[x].id) == m.end()) m.push_back(rq[x].id);
                mix[{a, b}].push_back(m);
            }
        }
    }

    static std::size_t gold_hits(const DualPathCorpus& c,
                                 const std::vector<std::vector<std::string>>& sel) {
        std::size_t hits = 0;
        for (std::size_t i = 0; i < sel.size(); ++i) {
            const auto& gold = c.queries[i].gold_doc_ids->front();
            hits += std::find(sel[i].begin(), sel[i].end(), gold) != sel[i].end() ? 1 : 0;
        }
        return hits;
    }
};

// ---------------------------------------------------------------------------
// Gate batch: 50 hashed documents and 20 queries with scripted uncertainty.
// Queries 0-7 have u <= 0.001 (two exactly at 0.001), 8-19 are above.
// ---------------------------------------------------------------------------
struct GateBatch {
    static constexpr std::size_t kQueries = 20;
    // u per query, realised as -mean(logprobs) of the scripted parametric answer.
    static constexpr double kU[kQueries] = {0.0,   0.0001, 0.0003, 0.0005, 0.0007, 0.0009, 0.001,
                                            0.001, 0.002,  0.003,  0.004,  0.005,  0.006,  0.008,
                                            0.01,  0.02,   0.04,   0.05,   0.1,    0.5};
    // Parametric answer correct for 0-6 and 8-11.
    static bool parametric_correct(std::size_t i) { return i <= 6 || (i >= 8 && i <= 11); }
    // Retrieval-conditioned answer correct except for 13 and 19.
    static bool retrieval_correct(std::size_t i) { return i != 13 && i != 19; }

    std::vector<DocChunk> chunks;
    std::vector<QueryItem> queries;

    static std::string question(std::size_t i) {
        return "Question " + two_digit(i) + " about subject " + two_digit(i) + "?";
    }
    static std::string answer(std::size_t i) { return "ans" + two_digit(i); }

    GateBatch() {
        for (std::size_t j = 0; j < 50; ++j) {
            chunks.push_back({"p" + two_digit(j), "Title " + two_digit(j),
                              "Passage " + two_digit(j) + " about subject " + two_digit(j % 20) +
                                      " and topic " + two_digit(j % 7) + "."});
        }
        for (std::size_t i = 0; i < kQueries; ++i) {
            queries.push_back({"g" + two_digit(i), question(i), {answer(i)},
                               std::vector<std::string>{"p" + two_digit(i)}});
        }
    }

    std::unique_ptr<MockGenerator> generator() const {
        auto g = std::make_unique<MockGenerator>("gate-mock");
        for (std::size_t i = 0; i < kQueries; ++i) {
            const std::string param = parametric_correct(i) ? answer(i) : "wrong";
            std::vector<double> lps;
            if (i == 1) {
                lps = {-0.0001, -0.0001};
            } else {
                lps = {-kU[i]};
            }
            g->script_exact(render_prompt(PromptKind::answer_no_retrieval, question(i)),
                            scripted(param, lps));
            g->script_exact(render_prompt(PromptKind::pseudo_context, question(i)),
                            scripted("Subject " + two_digit(i) + " background passage.", {-0.3}));
            g->script_contains({question(i)},
                               scripted(retrieval_correct(i) ? answer(i) : "wrong", {-0.05}));
        }
        return g;
    }
};

} // namespace dtr::testing
