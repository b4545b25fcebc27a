#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "guard/common.hpp"
#include "guard/textscan.hpp"

// From-scratch BM25 over a fixed document set. Variant: Robertson tf
// saturation with the non-negative idf ln(1 + (N - df + 0.5)/(df + 0.5)),
// so every score is >= 0 and the "score > 0" cut is well defined.

namespace guard {

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;
};

struct Bm25Index {
    Bm25Params params;
    std::vector<std::string> doc_ids;
    std::vector<size_t> doc_lengths;
    double avg_doc_length = 0.0;
    // term -> (doc index, term frequency), doc indices ascending
    std::unordered_map<std::string, std::vector<std::pair<std::uint32_t, std::uint32_t>>> postings;
    std::unordered_map<std::string, std::uint32_t> doc_index;

    size_t num_docs() const { return doc_ids.size(); }

    size_t doc_freq(const std::string& term) const {
        auto it = postings.find(term);
        return it == postings.end() ? 0 : it->second.size();
    }

    std::uint32_t term_freq(const std::string& term, std::uint32_t doc) const {
        auto it = postings.find(term);
        if (it == postings.end()) return 0;
        auto& list = it->second;
        auto pos = std::lower_bound(list.begin(), list.end(), doc,
                                    [](const auto& entry, std::uint32_t d) { return entry.first < d; });
        return (pos != list.end() && pos->first == doc) ? pos->second : 0;
    }

    double idf(const std::string& term) const {
        double n = static_cast<double>(num_docs());
        double df = static_cast<double>(doc_freq(term));
        return std::log(1.0 + (n - df + 0.5) / (df + 0.5));
    }
};

inline Bm25Index build_index(const std::vector<std::pair<std::string, std::string>>& docs,
                             Bm25Params params = {}) {
    if (params.k1 < 0.0) throw Error("k1 must be >= 0");
    if (params.b < 0.0 || params.b > 1.0) throw Error("b must be in [0,1]");
    Bm25Index index;
    index.params = params;
    size_t total_len = 0;
    for (auto& [id, text] : docs) {
        if (!index.doc_index.emplace(id, static_cast<std::uint32_t>(index.doc_ids.size())).second)
            throw Error("duplicate doc id \"" + id + "\"");
        std::uint32_t doc = static_cast<std::uint32_t>(index.doc_ids.size());
        index.doc_ids.push_back(id);
        std::vector<std::string> toks = tokenize(text);
        index.doc_lengths.push_back(toks.size());
        total_len += toks.size();
        std::unordered_map<std::string, std::uint32_t> tf;
        for (auto& t : toks) ++tf[t];
        for (auto& [term, count] : tf) index.postings[term].emplace_back(doc, count);
    }
    index.avg_doc_length =
        docs.empty() ? 0.0 : static_cast<double>(total_len) / static_cast<double>(docs.size());
    for (auto& [term, list] : index.postings)
        std::sort(list.begin(), list.end());
    return index;
}

namespace detail {

inline double bm25_term_contribution(const Bm25Index& index, double idf, std::uint32_t tf,
                                     size_t doc_len) {
    if (tf == 0) return 0.0;
    const double k1 = index.params.k1;
    const double b = index.params.b;
    double norm = 1.0 - b + b * (static_cast<double>(doc_len) / index.avg_doc_length);
    double f = static_cast<double>(tf);
    return idf * (f * (k1 + 1.0)) / (f + k1 * norm);
}

}  // namespace detail

// Sum over the query token list (duplicate query terms contribute once per
// occurrence) of idf(t) * tf*(k1+1) / (tf + k1*(1 - b + b*len/avglen)).
inline double bm25_score(const Bm25Index& index, const std::vector<std::string>& query_tokens,
                         const std::string& doc_id) {
    auto it = index.doc_index.find(doc_id);
    if (it == index.doc_index.end()) throw Error("unknown doc id \"" + doc_id + "\"");
    std::uint32_t doc = it->second;
    double score = 0.0;
    for (const auto& term : query_tokens) {
        std::uint32_t tf = index.term_freq(term, doc);
        if (tf == 0) continue;
        score += detail::bm25_term_contribution(index, index.idf(term), tf, index.doc_lengths[doc]);
    }
    return score;
}

// The k highest-scoring docs with score > 0, descending score, ties broken by
// ascending doc id. Fewer than k are returned if fewer qualify.
inline std::vector<std::pair<std::string, double>> top_k(const Bm25Index& index,
                                                         std::string_view query, size_t k) {
    std::vector<double> scores(index.num_docs(), 0.0);
    for (const auto& term : tokenize(query)) {
        auto it = index.postings.find(term);
        if (it == index.postings.end()) continue;
        double idf = index.idf(term);
        for (auto& [doc, tf] : it->second)
            scores[doc] += detail::bm25_term_contribution(index, idf, tf, index.doc_lengths[doc]);
    }
    std::vector<std::pair<std::string, double>> ranked;
    for (size_t i = 0; i < scores.size(); ++i)
        if (scores[i] > 0.0) ranked.emplace_back(index.doc_ids[i], scores[i]);
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    if (ranked.size() > k) ranked.resize(k);
    return ranked;
}

}  // namespace guard
