#include <cmath>

#include <gtest/gtest.h>

#include "dtr/eval.hpp"
#include "em_cases.hpp"
#include "harness.hpp"
#include "test_util.hpp"

using namespace dtr;
using dtr::testing::config_for;
using dtr::testing::GateBatch;
using dtr::testing::Harness;

TEST(Normalize, Cases) {
    EXPECT_EQ(normalize_answer("The Eiffel Tower!"), "eiffel tower");
    EXPECT_EQ(normalize_answer(""), "");
    EXPECT_EQ(normalize_answer("A  an the"), "");
    EXPECT_EQ(normalize_answer("  Hello,\tWorld  "), "hello world");
    EXPECT_EQ(normalize_answer("theater anathema"), "theater anathema");
    EXPECT_EQ(normalize_answer("\xc3\x89t\xc3\xa9"), "\xc3\x89t\xc3\xa9");
}

TEST(EmF1, HandScoredCases) {
    for (const auto& c : dtr::testing::em_cases()) {
        auto r = em_f1(c.prediction, c.golds);
        EXPECT_EQ(r.em, c.em) << c.prediction;
        EXPECT_NEAR(r.f1, c.f1, 1e-4) << c.prediction;
    }
}

TEST(EmF1, EmptyGoldsIsContractError) { EXPECT_DTR_ERROR(em_f1("x", {}), contract); }

TEST(EmF1, ExactMatchImpliesFullF1) {
    dtr::testing::Rng rng(21);
    const char* words[] = {"the", "a", "red", "Blue", "fox", "fox!", "an", "Ox"};
    for (int i = 0; i < 2000; ++i) {
        auto phrase = [&] {
            std::string s;
            for (std::size_t w = 0; w <= rng.below(4); ++w) s += std::string(words[rng.below(8)]) + " ";
            return s;
        };
        auto p = phrase();
        auto r = em_f1(p, {phrase(), phrase()});
        if (r.em == 1) EXPECT_EQ(r.f1, 1.0);
        EXPECT_GE(r.f1, 0.0);
        EXPECT_LE(r.f1, 1.0);
        EXPECT_EQ(em_f1(p, {p}).f1, 1.0);
    }
}

TEST(Recall, AnyHitAndDenominator) {
    QueryTrace hit, miss, bypass;
    hit.triggered = miss.triggered = true;
    hit.passage_ids = miss.passage_ids = {"a", "b", "c"};
    EXPECT_EQ(recall_at_k(hit, {"c", "d"}), true);
    EXPECT_EQ(recall_at_k(miss, {"d"}), false);
    EXPECT_EQ(recall_at_k(bypass, {"a"}), std::nullopt);
    EXPECT_EQ(doc_coverage_at_k(hit, {"c", "d"}), 0.5);

    hit.query_id = "1";
    miss.query_id = "2";
    bypass.query_id = "3";
    std::vector<QueryItem> qs{{"1", "x", {"a"}, std::vector<std::string>{"c", "d"}},
                              {"2", "y", {"a"}, std::vector<std::string>{"d"}},
                              {"3", "z", {"a"}, std::vector<std::string>{"a"}}};
    auto rep = summarize(PipelineMode::parse("dtr"), score_traces({hit, miss, bypass}, qs));
    EXPECT_EQ(rep.recall_denominator, 2u);
    ASSERT_TRUE(rep.recall_at_k);
    EXPECT_DOUBLE_EQ(*rep.recall_at_k, 50.0);
    EXPECT_NEAR(rep.trigger_ratio, 200.0 / 3.0, 1e-12);
}

TEST(ScoreTraces, UnknownQueryIsIntegrityError) {
    QueryTrace t;
    t.query_id = "ghost";
    EXPECT_DTR_ERROR(score_traces({t}, {}), integrity);
}

namespace {

std::map<double, std::vector<QueryTrace>> gate_sweep(Harness& h, const GateBatch& b,
                                                     const std::vector<double>& thresholds) {
    std::map<double, std::vector<QueryTrace>> out;
    for (double t : thresholds) out[t] = h.pipeline(config_for("dtr", t)).run_batch(b.queries);
    return out;
}

} // namespace

TEST(Sweep, MatchesHandCounts) {
    GateBatch b;
    auto h = Harness::gate(b);
    auto baseline = score_traces(h->pipeline(config_for("no_retrieval")).run_batch(b.queries), b.queries);
    EXPECT_DOUBLE_EQ(summarize(PipelineMode::parse("no_retrieval"), baseline).avg_em, 55.0);
    auto rows = sweep_report(gate_sweep(*h, b, {0.0005, 0.001, 0.005, 0.01, 0.05}), b.queries, baseline);
    ASSERT_EQ(rows.size(), 5u);
    const double query_ratio[] = {20, 40, 60, 75, 90};
    const double trigger[] = {80, 60, 40, 25, 10};
    const double em[] = {90, 85, 85, 75, 60};
    for (std::size_t i = 0; i < rows.size(); ++i) {
        EXPECT_DOUBLE_EQ(rows[i].query_ratio, query_ratio[i]);
        EXPECT_DOUBLE_EQ(rows[i].trigger_ratio, trigger[i]);
        EXPECT_DOUBLE_EQ(rows[i].avg_em, em[i]);
        EXPECT_NEAR(rows[i].improvement, em[i] - 55.0, 1e-9);
        if (i > 0) EXPECT_LE(rows[i].trigger_ratio, rows[i - 1].trigger_ratio);
    }
}

TEST(Sweep, IdenticalToBaselineMeansZeroImprovement) {
    GateBatch b;
    auto h = Harness::gate(b);
    auto closed = h->pipeline(config_for("dtr", 1e9)).run_batch(b.queries);
    auto baseline = score_traces(h->pipeline(config_for("no_retrieval")).run_batch(b.queries), b.queries);
    auto rows = sweep_report({{1e9, closed}}, b.queries, baseline);
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_EQ(rows[0].improvement, 0.0);
}

TEST(Sweep, QuerySetMismatchIsContractError) {
    GateBatch b;
    auto h = Harness::gate(b);
    auto runs = gate_sweep(*h, b, {0.001, 0.01});
    runs[0.01].pop_back();
    EXPECT_DTR_ERROR(sweep_report(runs, b.queries, {}), contract);
}

TEST(QueryRatio, MissingScoreCountsAsAbove) {
    QueryTrace a, b2;
    a.u = UncertaintyScore{0.002, 1};
    EXPECT_DOUBLE_EQ(query_ratio({a, b2}, 0.002), 0.5);
    EXPECT_DOUBLE_EQ(query_ratio({a, b2}, 0.001), 0.0);
}

TEST(GoldRank, Buckets) {
    EXPECT_EQ(gold_rank_bucket(1), 0u);
    EXPECT_EQ(gold_rank_bucket(3), 0u);
    EXPECT_EQ(gold_rank_bucket(4), 1u);
    EXPECT_EQ(gold_rank_bucket(10), 1u);
    EXPECT_EQ(gold_rank_bucket(11), 2u);
    EXPECT_EQ(gold_rank_bucket(20), 2u);
    EXPECT_EQ(gold_rank_bucket(21), 3u);
}

TEST(GoldRank, ReportOnOneHotCorpus) {
    // doc j scores 30 - j against the probe, so doc j sits at rank j + 1.
    std::vector<DocChunk> chunks;
    std::vector<UnitVector> vecs;
    std::vector<double> probe(30);
    for (std::size_t j = 0; j < 30; ++j) {
        chunks.push_back({"d" + dtr::testing::two_digit(j), "", "t"});
        std::vector<double> v(30, 0.0);
        v[j] = 1.0;
        vecs.push_back(UnitVector::normalize(v));
        probe[j] = 30.0 - static_cast<double>(j);
    }
    auto idx = FlatIndex::build(chunks, vecs);
    auto q = UnitVector::normalize(probe);
    std::vector<QueryItem> qs{{"top", "?", {"x"}, std::vector<std::string>{"d00"}},
                              {"deep", "?", {"x"}, std::vector<std::string>{"d24"}},
                              {"best_of_two", "?", {"x"}, std::vector<std::string>{"d24", "d05"}},
                              {"none", "?", {"x"}, std::nullopt}};
    auto rep = gold_rank_report(idx, qs, {q, q, q, q});
    EXPECT_EQ(rep.skipped, 1u);
    EXPECT_EQ(rep.histogram, (std::array<std::size_t, 4>{1, 1, 0, 1}));
    ASSERT_EQ(rep.best_rank.size(), 3u);
    EXPECT_EQ(rep.best_rank[1], (std::pair<std::string, std::size_t>{"deep", 25}));
    EXPECT_EQ(rep.best_rank[2].second, 6u);
}

TEST(Reports, FormattingIsTwoDecimals) {
    EXPECT_EQ(format_pct(85.0), "85.00");
    EXPECT_EQ(format_pct(200.0 / 3.0), "66.67");
    std::vector<ThresholdRow> rows{{0.001, 85, 86.5, 60, 40, 30}};
    EXPECT_EQ(sweep_csv(rows),
              "threshold,avg_em,avg_f1,trigger_ratio,query_ratio,improvement_vs_no_retrieval\n"
              "0.001,85.00,86.50,60.00,40.00,30.00\n");
}
