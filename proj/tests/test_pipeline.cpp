#include <limits>
#include <set>

#include <gtest/gtest.h>

#include "dtr/eval.hpp"
#include "dtr/pipeline.hpp"
#include "harness.hpp"
#include "test_util.hpp"

using namespace dtr;
using dtr::testing::config_for;
using dtr::testing::DualPathCorpus;
using dtr::testing::GateBatch;
using dtr::testing::Harness;

constexpr double kInf = std::numeric_limits<double>::infinity();

TEST(PipelineMode, ParseAndName) {
    for (const char* m : {"no_retrieval", "standard_rag", "llm_judge", "hyde", "q2d", "cot", "dtr",
                          "dtr_no_ugt", "dtr_no_dpr", "fixed_mix(2,1)"}) {
        EXPECT_EQ(PipelineMode::parse(m).name(), m);
    }
    EXPECT_EQ(PipelineMode::parse("fixed_mix(1,2)"), PipelineMode::fixed_mix(1, 2));
    try {
        PipelineMode::parse("dtr_turbo");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.category(), ErrorCategory::usage);
        EXPECT_NE(std::string(e.what()).find("dtr_no_ugt"), std::string::npos);
    }
}

TEST(RunConfig, Validation) {
    auto cfg = config_for("fixed_mix(2,2)");
    EXPECT_DTR_ERROR(cfg.validate(), config);
    cfg = config_for("dtr");
    cfg.k_final = 0;
    EXPECT_DTR_ERROR(cfg.validate(), config);
    cfg = config_for("dtr");
    cfg.u_threshold = -0.1;
    EXPECT_DTR_ERROR(cfg.validate(), config);
    cfg.u_threshold = -kInf;
    EXPECT_NO_THROW(cfg.validate());
}

TEST(ParseJudge, LeadingToken) {
    EXPECT_EQ(parse_judge("Yes"), true);
    EXPECT_EQ(parse_judge("  yes, because"), true);
    EXPECT_EQ(parse_judge("NO."), false);
    EXPECT_EQ(parse_judge("No"), false);
    EXPECT_EQ(parse_judge("Maybe"), std::nullopt);
    EXPECT_EQ(parse_judge("Yesterday"), std::nullopt);
    EXPECT_EQ(parse_judge(""), std::nullopt);
}

TEST(FixedMix, DisjointAndBackfilled) {
    std::vector<Hit> hq{{"a", .9}, {"b", .8}, {"c", .7}, {"d", .6}};
    std::vector<Hit> hp{{"a", .9}, {"e", .8}, {"f", .7}};
    EXPECT_EQ(fixed_mix_select(hq, hp, 2, 1), (std::vector<std::string>{"a", "b", "c"}));
    EXPECT_EQ(fixed_mix_select(hq, hp, 1, 2), (std::vector<std::string>{"a", "e", "b"}));
    std::vector<Hit> hp2{{"x", .9}, {"y", .8}};
    EXPECT_EQ(fixed_mix_select(hq, hp2, 2, 1), (std::vector<std::string>{"a", "b", "x"}));
}

TEST(Pipeline, DtrBypassesConfidentQuery) {
    GateBatch b;
    auto h = Harness::gate(b);
    auto p = h->pipeline(config_for("dtr", 0.001));
    auto t = p.run_query(b.queries[1]);
    ASSERT_TRUE(t.u);
    EXPECT_NEAR(t.u->value, 0.0001, 1e-15);
    EXPECT_FALSE(t.triggered);
    EXPECT_EQ(t.call_log.count(CallLog::search), 0u);
    EXPECT_EQ(t.call_log.count(CallLog::pseudo_context), 0u);
    EXPECT_EQ(t.call_log.count(CallLog::answer_with_retrieval), 0u);
    EXPECT_EQ(t.final_answer, *t.parametric_answer);
    EXPECT_TRUE(t.passage_ids.empty());
}

TEST(Pipeline, DtrTriggersUncertainQuery) {
    GateBatch b;
    auto h = Harness::gate(b);
    auto t = h->pipeline(config_for("dtr", 0.001)).run_query(b.queries[12]);
    EXPECT_TRUE(t.triggered);
    EXPECT_EQ(t.call_log.count(CallLog::search), 2u);
    EXPECT_EQ(t.call_log.count(CallLog::pseudo_context), 1u);
    EXPECT_EQ(t.passage_ids.size(), 3u);
    ASSERT_TRUE(t.selection);
    EXPECT_EQ(t.final_answer, GateBatch::answer(12));
}

TEST(Pipeline, ThresholdEqualToUBypasses) {
    GateBatch b;
    auto h = Harness::gate(b);
    auto p = h->pipeline(config_for("dtr", 0.001));
    EXPECT_FALSE(p.run_query(b.queries[6]).triggered);
    EXPECT_FALSE(p.run_query(b.queries[7]).triggered);
    EXPECT_TRUE(p.run_query(b.queries[8]).triggered);
}

TEST(Pipeline, NoUgtAlwaysRetrievesWithTwoSearches) {
    GateBatch b;
    auto h = Harness::gate(b);
    auto ts = h->pipeline(config_for("dtr_no_ugt")).run_batch(b.queries);
    for (const auto& t : ts) {
        EXPECT_TRUE(t.triggered);
        EXPECT_EQ(t.call_log.count(CallLog::search), 2u);
        EXPECT_EQ(t.hits_q.size(), 5u);
        EXPECT_EQ(t.hits_p.size(), 5u);
    }
}

TEST(Pipeline, FixedMixPassagesAreDistinct) {
    DualPathCorpus c;
    auto h = Harness::dual_path(c);
    auto ts = h->pipeline(config_for("fixed_mix(2,1)")).run_batch(c.queries);
    for (const auto& t : ts) {
        ASSERT_EQ(t.passage_ids.size(), 3u);
        std::set<std::string> uniq(t.passage_ids.begin(), t.passage_ids.end());
        EXPECT_EQ(uniq.size(), 3u);
        EXPECT_EQ(t.passage_ids[0], t.hits_q[0].doc_id);
        EXPECT_EQ(t.passage_ids[1], t.hits_q[1].doc_id);
    }
}

TEST(Pipeline, TriggerRatioFollowsScriptedUncertainty) {
    GateBatch b;
    auto h = Harness::gate(b);
    const std::pair<double, double> expected[] = {
            {0.0005, 80.0}, {0.001, 60.0}, {0.005, 40.0}, {0.01, 25.0}, {0.05, 10.0}};
    for (auto [thr, ratio] : expected) {
        auto ts = h->pipeline(config_for("dtr", thr)).run_batch(b.queries);
        auto rep = summarize(PipelineMode::parse("dtr"), score_traces(ts, b.queries));
        EXPECT_DOUBLE_EQ(rep.trigger_ratio, ratio) << thr;
    }
}

TEST(Pipeline, EmptyBatch) {
    GateBatch b;
    auto h = Harness::gate(b);
    EXPECT_TRUE(h->pipeline(config_for("dtr")).run_batch({}).empty());
    EXPECT_EQ(h->generator->call_count(), 0u);
}

TEST(Pipeline, BatchIsDeterministicAcrossRunsAndWidths) {
    GateBatch b;
    auto h = Harness::gate(b);
    auto cfg = config_for("dtr");
    const auto a = serialize_traces(h->pipeline(cfg).run_batch(b.queries));
    const auto again = serialize_traces(h->pipeline(cfg).run_batch(b.queries));
    cfg.width = 4;
    const auto wide = serialize_traces(h->pipeline(cfg).run_batch(b.queries));
    EXPECT_EQ(a, again);
    EXPECT_EQ(a, wide);
}

TEST(Pipeline, ForcedGateEqualsNoUgt) {
    DualPathCorpus c;
    auto h = Harness::dual_path(c);
    auto forced = h->pipeline(config_for("dtr", -kInf)).run_batch(c.queries);
    auto no_ugt = h->pipeline(config_for("dtr_no_ugt")).run_batch(c.queries);
    ASSERT_EQ(forced.size(), no_ugt.size());
    for (std::size_t i = 0; i < forced.size(); ++i) {
        auto j1 = to_json(forced[i]), j2 = to_json(no_ugt[i]);
        j1.erase("mode");
        j2.erase("mode");
        EXPECT_EQ(j1, j2);
    }
}

TEST(Pipeline, ClosedGateEqualsNoRetrieval) {
    GateBatch b;
    auto h = Harness::gate(b);
    auto closed = h->pipeline(config_for("dtr", kInf)).run_batch(b.queries);
    auto none = h->pipeline(config_for("no_retrieval")).run_batch(b.queries);
    for (std::size_t i = 0; i < closed.size(); ++i) {
        EXPECT_FALSE(closed[i].triggered);
        EXPECT_EQ(closed[i].final_answer, none[i].final_answer);
        EXPECT_EQ(closed[i].call_log, none[i].call_log);
    }
}

TEST(Pipeline, AllQueryMixEqualsQueryOnly) {
    DualPathCorpus c;
    auto h = Harness::dual_path(c);
    auto mix = h->pipeline(config_for("fixed_mix(3,0)")).run_batch(c.queries);
    auto qo = h->pipeline(config_for("dtr_no_dpr")).run_batch(c.queries);
    EXPECT_EQ(dtr::testing::passage_ids(mix), dtr::testing::passage_ids(qo));
}

TEST(Pipeline, DualPathSelectionsMatchOracle) {
    DualPathCorpus c;
    dtr::testing::DualPathOracle oracle(c, 5, 3);
    auto h = Harness::dual_path(c);
    EXPECT_EQ(dtr::testing::passage_ids(h->pipeline(config_for("dtr")).run_batch(c.queries)), oracle.ais);
    EXPECT_EQ(dtr::testing::passage_ids(h->pipeline(config_for("dtr_no_dpr")).run_batch(c.queries)),
              oracle.query_only);
    EXPECT_EQ(dtr::testing::passage_ids(h->pipeline(config_for("fixed_mix(2,1)")).run_batch(c.queries)),
              (oracle.mix[{2, 1}]));
    EXPECT_EQ(dtr::testing::passage_ids(h->pipeline(config_for("fixed_mix(1,2)")).run_batch(c.queries)),
              (oracle.mix[{1, 2}]));
}

TEST(Pipeline, PassageCountNeverExceedsK) {
    DualPathCorpus c;
    auto h = Harness::dual_path(c);
    for (std::size_t k : {1u, 2u, 3u, 5u}) {
        for (const char* m : {"dtr", "dtr_no_ugt", "dtr_no_dpr", "standard_rag", "hyde"}) {
            auto cfg = config_for(m);
            cfg.k_final = k;
            for (const auto& t : h->pipeline(cfg).run_batch(c.queries)) {
                EXPECT_LE(t.passage_ids.size(), k) << m;
                EXPECT_FALSE(t.error) << m << ": " << t.error->message;
            }
        }
    }
}

TEST(Pipeline, EmptyPseudoContextFallsBackToQueryOnly) {
    MockGenerator* gen;
    DualPathCorpus c;
    auto h = Harness::dual_path(c);
    gen = h->generator.get();
    gen->script_exact(render_prompt(PromptKind::pseudo_context, c.queries[0].question),
                      scripted("  ", {-0.1}));
    auto t = h->pipeline(config_for("dtr")).run_query(c.queries[0]);
    EXPECT_TRUE(t.triggered);
    EXPECT_NE(std::find(t.flags.begin(), t.flags.end(), "empty_pseudo_context"), t.flags.end());
    EXPECT_EQ(t.call_log.count(CallLog::search), 1u);
    EXPECT_EQ(t.passage_ids.size(), 3u);
    EXPECT_FALSE(t.error);
}

TEST(Pipeline, MissingLogprobsTrigger) {
    DualPathCorpus c;
    auto h = Harness::dual_path(c);
    h->generator->script_exact(render_prompt(PromptKind::answer_no_retrieval, c.queries[0].question),
                               GenerationResult{"guess", {}, FinishReason::stop});
    auto t = h->pipeline(config_for("dtr", 100.0)).run_query(c.queries[0]);
    EXPECT_TRUE(t.triggered);
    EXPECT_FALSE(t.u);
    EXPECT_NE(std::find(t.flags.begin(), t.flags.end(), "no_logprobs"), t.flags.end());
}

TEST(Pipeline, ComponentFailureIsIsolatedToItsQuery) {
    DualPathCorpus c;
    auto h = Harness::dual_path(c);
    auto qs = c.queries;
    qs[3].question = "Unscripted question?";
    auto ts = h->pipeline(config_for("dtr")).run_batch(qs);
    ASSERT_EQ(ts.size(), qs.size());
    ASSERT_TRUE(ts[3].error);
    EXPECT_EQ(ts[3].error->category, ErrorCategory::scripted_miss);
    EXPECT_EQ(ts[3].final_answer, "");
    for (std::size_t i = 0; i < ts.size(); ++i) {
        if (i != 3) EXPECT_FALSE(ts[i].error);
    }
}

TEST(Pipeline, LlmJudgeRoutes) {
    DualPathCorpus c;
    auto h = Harness::dual_path(c);
    auto judge = [&](std::size_t i, const char* verdict) {
        h->generator->script_exact(render_prompt(PromptKind::judge, c.queries[i].question),
                                   scripted(verdict, {-0.1}));
    };
    judge(0, "Yes");
    judge(1, "No.");
    judge(2, "Perhaps");
    auto p = h->pipeline(config_for("llm_judge"));
    auto yes = p.run_query(c.queries[0]);
    EXPECT_TRUE(yes.triggered);
    EXPECT_EQ(yes.call_log.count(CallLog::search), 1u);
    auto no = p.run_query(c.queries[1]);
    EXPECT_FALSE(no.triggered);
    EXPECT_EQ(no.call_log.count(CallLog::search), 0u);
    auto unparsed = p.run_query(c.queries[2]);
    EXPECT_TRUE(unparsed.triggered);
    EXPECT_NE(std::find(unparsed.flags.begin(), unparsed.flags.end(), "judge_unparsed"),
              unparsed.flags.end());
}

TEST(Pipeline, ExpansionModesBuildRetrievalText) {
    DualPathCorpus c;
    auto h = Harness::dual_path(c);
    h->generator->script_exact(render_prompt(PromptKind::cot, c.queries[0].question),
                               scripted("Because reasons.", {-0.1}));
    const std::string probe = c.queries[0].question + "\nBecause reasons.";
    dynamic_cast<ScriptedEmbedder&>(*h->embedder).add(probe, c.q_vecs[0]);
    auto t = h->pipeline(config_for("cot")).run_query(c.queries[0]);
    ASSERT_FALSE(t.error) << t.error->message;
    EXPECT_EQ(t.retrieval_text, probe);
    EXPECT_EQ(t.call_log.count(CallLog::cot), 1u);
    EXPECT_EQ(t.passage_ids.front(), "doc00");
}

TEST(Traces, JsonRoundTrip) {
    DualPathCorpus c;
    auto h = Harness::dual_path(c);
    auto ts = h->pipeline(config_for("dtr")).run_batch(c.queries);
    dtr::testing::TempDir dir;
    auto p = dir.write("t.jsonl", serialize_traces(ts));
    auto back = load_traces(p);
    EXPECT_EQ(serialize_traces(back), serialize_traces(ts));
}
