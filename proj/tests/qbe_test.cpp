// Copyright 2026 The SCORE Toolkit Authors
// Licensed under the Apache License, Version 2.0

#include "score/qbe.hpp"

#include <gtest/gtest.h>

#include <random>

#include "test_support.hpp"

namespace score {
namespace {

FeatureSequence slice(const FeatureSequence& doc, std::size_t lo, std::size_t len) {
  FeatureSequence q(len, doc.dim);
  for (std::size_t t = 0; t < len; ++t) {
    for (std::size_t d = 0; d < doc.dim; ++d) q.at(t, d) = doc.at(lo + t, d);
  }
  return q;
}

TEST(ScorePair, ExactSliceScoresZero) {
  std::mt19937_64 rng(1);
  const auto doc = test::random_sequence(rng, 25, 4);
  const auto query = slice(doc, 6, 7);
  const auto r = score_pair(query, doc, "q", "d");
  EXPECT_DOUBLE_EQ(r.score, 0.0);
  EXPECT_EQ(r.start, 7u);  // 1-based span
  EXPECT_EQ(r.end, 13u);
  EXPECT_EQ(r.query_id, "q");
  EXPECT_EQ(r.doc_id, "d");
}

TEST(ScorePair, ExactSliceIsGlobalMaximum) {
  std::mt19937_64 rng(2);
  const auto doc = test::random_sequence(rng, 25, 4);
  const auto query = slice(doc, 6, 7);
  const auto best = score_pair(query, doc);
  for (int iter = 0; iter < 20; ++iter) {
    const auto other = test::random_sequence(rng, 10 + rng() % 20, 4);
    EXPECT_LE(score_pair(query, other).score, best.score);
  }
}

TEST(ScorePair, OrthogonalUnitFramesScoreMinusTwo) {
  FeatureSequence query(1, 3);
  query.at(0, 0) = 1.0;
  FeatureSequence doc(5, 3);
  for (std::size_t t = 0; t < 5; ++t) doc.at(t, 1) = 1.0;
  EXPECT_DOUBLE_EQ(score_pair(query, doc).score, -2.0);
}

TEST(ScorePair, SpanWithinDocument) {
  std::mt19937_64 rng(3);
  for (int iter = 0; iter < 20; ++iter) {
    const std::size_t n = 5 + rng() % 20;
    const auto doc = test::random_sequence(rng, n, 3);
    const auto query = test::random_sequence(rng, 1 + rng() % 6, 3);
    const auto r = score_pair(query, doc);
    EXPECT_GE(r.start, 1u);
    EXPECT_LE(r.start, r.end);
    EXPECT_LE(r.end, n);
  }
}

TEST(ScorePair, DimMismatchRejected) {
  std::mt19937_64 rng(4);
  const auto query = test::random_sequence(rng, 3, 2);
  const auto doc = test::random_sequence(rng, 8, 3);
  EXPECT_THROW(score_pair(query, doc), std::invalid_argument);
}

TEST(RankQueries, PlantedQueryBeatsNineDistractors) {
  std::mt19937_64 rng(5);
  std::map<std::string, FeatureSequence> docs;
  const auto source = test::random_sequence(rng, 30, 5);
  docs["doc_0"] = source;
  for (int i = 1; i < 10; ++i) {
    docs["doc_" + std::to_string(i)] = test::random_sequence(rng, 25 + rng() % 10, 5);
  }
  auto query = slice(source, 9, 8);
  std::normal_distribution<double> noise(0.0, 0.01);
  for (auto& v : query.data) v += noise(rng);

  std::map<std::string, FeatureSequence> queries;
  queries["q0"] = query;
  const auto out = rank_queries(queries, docs, {{"q0", "doc_0"}});
  EXPECT_EQ(out.results.front().doc_id, "doc_0");
  EXPECT_DOUBLE_EQ(out.metrics.precision_at_1, 1.0);
  EXPECT_DOUBLE_EQ(out.metrics.mean_average_precision, 1.0);
}

TEST(RankQueries, SecondPlaceRelevantGivesApHalf) {
  std::mt19937_64 rng(6);
  const auto source = test::random_sequence(rng, 20, 3);
  std::map<std::string, FeatureSequence> queries;
  queries["q"] = slice(source, 4, 6);

  std::map<std::string, FeatureSequence> docs;
  docs["exact"] = source;  // rank 1, not relevant per labels
  auto near = source;
  for (auto& v : near.data) v += 0.05;
  docs["near"] = near;  // rank 2, labeled relevant
  docs["far"] = test::random_sequence(rng, 20, 3);

  const auto out = rank_queries(queries, docs, {{"q", "near"}});
  ASSERT_EQ(out.results.size(), 3u);
  EXPECT_EQ(out.results[0].doc_id, "exact");
  EXPECT_EQ(out.results[1].doc_id, "near");
  EXPECT_DOUBLE_EQ(out.metrics.precision_at_1, 0.0);
  EXPECT_DOUBLE_EQ(out.metrics.mean_average_precision, 0.5);
}

TEST(RankQueries, TieBreakIsDocIdAscending) {
  std::mt19937_64 rng(7);
  const auto doc = test::random_sequence(rng, 15, 3);
  std::map<std::string, FeatureSequence> docs;
  docs["b"] = doc;
  docs["a"] = doc;
  docs["c"] = doc;
  std::map<std::string, FeatureSequence> queries;
  queries["q"] = slice(doc, 2, 5);
  const auto out = rank_queries(queries, docs, {{"q", "a"}});
  ASSERT_EQ(out.results.size(), 3u);
  EXPECT_EQ(out.results[0].doc_id, "a");
  EXPECT_EQ(out.results[1].doc_id, "b");
  EXPECT_EQ(out.results[2].doc_id, "c");
  EXPECT_DOUBLE_EQ(out.metrics.precision_at_1, 1.0);
}

TEST(RankQueries, UnlabeledQueriesExcludedFromMetrics) {
  std::mt19937_64 rng(8);
  const auto source = test::random_sequence(rng, 20, 3);
  std::map<std::string, FeatureSequence> queries;
  queries["labeled"] = slice(source, 3, 6);
  queries["unlabeled"] = test::random_sequence(rng, 5, 3);
  std::map<std::string, FeatureSequence> docs;
  docs["doc"] = source;
  docs["other"] = test::random_sequence(rng, 20, 3);

  const auto out = rank_queries(queries, docs, {{"labeled", "doc"}});
  EXPECT_EQ(out.metrics.labeled_queries, 1u);
  EXPECT_DOUBLE_EQ(out.metrics.precision_at_1, 1.0);
  EXPECT_EQ(out.results.size(), 4u);
}

TEST(RankQueries, EmptyInputsRejected) {
  std::map<std::string, FeatureSequence> empty;
  std::map<std::string, FeatureSequence> one;
  std::mt19937_64 rng(9);
  one["x"] = test::random_sequence(rng, 4, 2);
  EXPECT_THROW(rank_queries(empty, one, {}), std::invalid_argument);
  EXPECT_THROW(rank_queries(one, empty, {}), std::invalid_argument);
}

TEST(ResultsTsv, FormatAndDeterminism) {
  std::mt19937_64 rng(10);
  const auto doc = test::random_sequence(rng, 12, 3);
  std::map<std::string, FeatureSequence> queries{{"q1", slice(doc, 2, 4)}};
  std::map<std::string, FeatureSequence> docs{{"d1", doc}};

  const auto out = rank_queries(queries, docs, {{"q1", "d1"}});
  test::TempDir dir("qbe_tsv");
  const auto path_a = dir.file("a.tsv");
  const auto path_b = dir.file("b.tsv");
  write_results_tsv(out.results, path_a);
  const auto out2 = rank_queries(queries, docs, {{"q1", "d1"}});
  write_results_tsv(out2.results, path_b);

  const auto bytes = test::read_bytes(path_a);
  EXPECT_EQ(bytes, test::read_bytes(path_b));
  EXPECT_EQ(bytes, "q1\td1\t0.000000\t3\t6\n");
}

TEST(Metrics, JsonShape) {
  RetrievalMetrics m;
  m.precision_at_1 = 1.0;
  m.mean_average_precision = 0.75;  // dyadic, so %.17g prints it exactly
  m.labeled_queries = 10;
  const auto s = format_retrieval_metrics(m);
  EXPECT_NE(s.find("\"precision_at_1\": 1"), std::string::npos);
  EXPECT_NE(s.find("\"mean_average_precision\": 0.75"), std::string::npos);
  EXPECT_NE(s.find("\"labeled_queries\": 10"), std::string::npos);
}

}  // namespace
}  // namespace score
