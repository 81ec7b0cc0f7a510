// Copyright 2026 The SCORE Toolkit Authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "score/core.hpp"
#include "score/soft_dtw.hpp"

namespace score {

/// One scored query-document pair. Higher score is a better match; the span
/// is the matched document region in 1-based inclusive frame indices.
struct QbeResult {
  std::string query_id;
  std::string doc_id;
  double score = 0.0;
  std::size_t start = 0;
  std::size_t end = 0;
};

/// Negated subsequence-DTW cost (normalized by query length), so an exact
/// occurrence scores 0.0, the maximum.
inline QbeResult score_pair(const FeatureSequence& query, const FeatureSequence& doc,
                            std::string query_id = "", std::string doc_id = "") {
  const SubsequenceMatch match = subsequence_dtw(query, doc);
  QbeResult r;
  r.query_id = std::move(query_id);
  r.doc_id = std::move(doc_id);
  r.score = 0.0 - match.value;  // subtraction, not negation: exact hits give +0.0
  r.start = match.start;
  r.end = match.end;
  return r;
}

struct RetrievalMetrics {
  double precision_at_1 = 0.0;
  double mean_average_precision = 0.0;
  std::size_t labeled_queries = 0;
};

struct QbeOutput {
  std::vector<QbeResult> results;  // grouped by query id, ranked within each group
  RetrievalMetrics metrics;
};

/// Scores every query against every document, ranks per query by score
/// descending with doc id ascending as the tie-break, and computes P@1 and
/// MAP over the queries that have at least one relevant document.
inline QbeOutput rank_queries(const std::map<std::string, FeatureSequence>& queries,
                              const std::map<std::string, FeatureSequence>& docs,
                              const std::set<std::pair<std::string, std::string>>& labels) {
  if (queries.empty()) throw std::invalid_argument("rank_queries: no queries");
  if (docs.empty()) throw std::invalid_argument("rank_queries: no documents");

  QbeOutput out;
  out.results.reserve(queries.size() * docs.size());
  double p_at_1_sum = 0.0;
  double ap_sum = 0.0;
  std::size_t labeled = 0;

  for (const auto& [qid, query] : queries) {
    std::vector<QbeResult> ranked;
    ranked.reserve(docs.size());
    for (const auto& [did, doc] : docs) {
      ranked.push_back(score_pair(query, doc, qid, did));
    }
    std::sort(ranked.begin(), ranked.end(), [](const QbeResult& a, const QbeResult& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.doc_id < b.doc_id;
    });

    std::size_t n_relevant = 0;
    for (const auto& r : ranked) {
      if (labels.count({qid, r.doc_id}) > 0) ++n_relevant;
    }
    if (n_relevant > 0) {
      ++labeled;
      p_at_1_sum += labels.count({qid, ranked.front().doc_id}) > 0 ? 1.0 : 0.0;
      double hits = 0.0;
      double ap = 0.0;
      for (std::size_t i = 0; i < ranked.size(); ++i) {
        if (labels.count({qid, ranked[i].doc_id}) > 0) {
          hits += 1.0;
          ap += hits / static_cast<double>(i + 1);
        }
      }
      ap_sum += ap / static_cast<double>(n_relevant);
    }
    for (auto& r : ranked) out.results.push_back(std::move(r));
  }

  out.metrics.labeled_queries = labeled;
  if (labeled > 0) {
    out.metrics.precision_at_1 = p_at_1_sum / static_cast<double>(labeled);
    out.metrics.mean_average_precision = ap_sum / static_cast<double>(labeled);
  }
  return out;
}

/// TSV rows: query_id, doc_id, score to 6 decimal places, start, end.
inline void write_results_tsv(const std::vector<QbeResult>& results, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("write_results_tsv: cannot open " + path);
  char score_buf[64];
  for (const auto& r : results) {
    std::snprintf(score_buf, sizeof score_buf, "%.6f", r.score);
    out << r.query_id << '\t' << r.doc_id << '\t' << score_buf << '\t' << r.start << '\t'
        << r.end << '\n';
  }
  if (!out) throw std::runtime_error("write_results_tsv: write failed for " + path);
}

inline std::string format_retrieval_metrics(const RetrievalMetrics& m) {
  char buf[160];
  std::snprintf(buf, sizeof buf,
                "{\"precision_at_1\": %.17g, \"mean_average_precision\": %.17g, "
                "\"labeled_queries\": %llu}",
                m.precision_at_1, m.mean_average_precision,
                static_cast<unsigned long long>(m.labeled_queries));
  return buf;
}

}  // namespace score
