#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "guard/common.hpp"
#include "guard/corpus.hpp"
#include "guard/llmclient.hpp"

// Comparison defenses. The character n-gram LM stands in for GPT-2 as the
// perplexity scorer so ONION and BKI run offline and deterministically; the
// PerplexityFn hook lets callers swap in an external scorer.

namespace guard {

struct NgramLm {
    int order = 5;
    double smoothing_k = 0.1;
    // context (order-1 bytes) -> next byte -> count
    std::unordered_map<std::string, std::unordered_map<unsigned char, std::uint32_t>> counts;
    std::unordered_map<std::string, std::uint32_t> context_totals;
    std::unordered_set<unsigned char> vocabulary;
};

namespace lm_detail {

inline constexpr char kBos = '\x02';
inline constexpr char kEos = '\x03';

inline std::string padded(std::string_view text, int order) {
    std::string s(static_cast<size_t>(order - 1), kBos);
    s.append(text);
    s.push_back(kEos);
    return s;
}

}  // namespace lm_detail

// Character-level counts with begin/end padding.
inline NgramLm lm_train(const std::vector<std::string>& corpus, int order = 5,
                        double smoothing_k = 0.1) {
    if (corpus.empty()) throw Error("empty training corpus");
    if (order < 2) throw Error("order must be >= 2");
    if (smoothing_k <= 0.0) throw Error("smoothing_k must be > 0");
    NgramLm lm;
    lm.order = order;
    lm.smoothing_k = smoothing_k;
    const size_t ctx_len = static_cast<size_t>(order - 1);
    for (const auto& text : corpus) {
        std::string s = lm_detail::padded(text, order);
        for (size_t i = ctx_len; i < s.size(); ++i) {
            std::string ctx = s.substr(i - ctx_len, ctx_len);
            unsigned char next = static_cast<unsigned char>(s[i]);
            ++lm.counts[ctx][next];
            ++lm.context_totals[ctx];
            lm.vocabulary.insert(next);
        }
    }
    return lm;
}

inline double lm_probability(const NgramLm& lm, const std::string& context, unsigned char next) {
    double count = 0.0, total = 0.0;
    auto it = lm.counts.find(context);
    if (it != lm.counts.end()) {
        auto jt = it->second.find(next);
        if (jt != it->second.end()) count = jt->second;
        total = lm.context_totals.at(context);
    }
    double v = static_cast<double>(lm.vocabulary.size());
    return (count + lm.smoothing_k) / (total + lm.smoothing_k * v);
}

// exp of the mean negative log probability per character of `text`.
inline double lm_perplexity(const NgramLm& lm, std::string_view text) {
    if (text.empty()) throw Error("perplexity of empty text");
    const size_t ctx_len = static_cast<size_t>(lm.order - 1);
    std::string s = lm_detail::padded(text, lm.order);
    double nll = 0.0;
    size_t chars = text.size();  // scored events exclude the end sentinel
    for (size_t i = ctx_len; i < ctx_len + chars; ++i) {
        std::string ctx = s.substr(i - ctx_len, ctx_len);
        nll -= std::log(lm_probability(lm, ctx, static_cast<unsigned char>(s[i])));
    }
    return std::exp(nll / static_cast<double>(chars));
}

using PerplexityFn = double (*)(const NgramLm&, std::string_view);

namespace lm_detail {

inline std::vector<std::string> whitespace_words(std::string_view text) {
    std::vector<std::string> words;
    size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        size_t begin = i;
        while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        if (i > begin) words.emplace_back(text.substr(begin, i - begin));
    }
    return words;
}

inline std::string join_words(const std::vector<std::string>& words, size_t skip_index) {
    std::string out;
    for (size_t i = 0; i < words.size(); ++i) {
        if (i == skip_index) continue;
        if (!out.empty()) out.push_back(' ');
        out += words[i];
    }
    return out;
}

// suspicion of word i = ppl(text) - ppl(text without word i)
inline std::vector<double> word_suspicions(const std::vector<std::string>& words,
                                           const NgramLm& lm, PerplexityFn ppl) {
    std::vector<double> s(words.size(), 0.0);
    if (words.size() < 2) return s;  // removing the only word leaves nothing to score
    double base = ppl(lm, join_words(words, words.size()));
    for (size_t i = 0; i < words.size(); ++i) s[i] = base - ppl(lm, join_words(words, i));
    return s;
}

}  // namespace lm_detail

struct OnionResult {
    std::string filtered_text;  // remaining words joined by single spaces
    std::vector<std::string> removed_words;
};

// ONION: remove every word whose deletion lowers perplexity by more than
// `threshold`.
inline OnionResult onion_filter(std::string_view text, const NgramLm& lm, double threshold,
                                PerplexityFn ppl = lm_perplexity) {
    std::vector<std::string> words = lm_detail::whitespace_words(text);
    std::vector<double> suspicion = lm_detail::word_suspicions(words, lm, ppl);
    OnionResult result;
    std::vector<std::string> kept;
    for (size_t i = 0; i < words.size(); ++i) {
        if (suspicion[i] > threshold)
            result.removed_words.push_back(words[i]);
        else
            kept.push_back(words[i]);
    }
    result.filtered_text = lm_detail::join_words(kept, kept.size());
    return result;
}

// Suggested ONION threshold: the given percentile of per-word suspicion
// scores over clean texts (nearest-rank).
inline double onion_calibrate_threshold(const std::vector<std::string>& clean_texts,
                                        const NgramLm& lm, double percentile = 0.99,
                                        PerplexityFn ppl = lm_perplexity) {
    if (percentile <= 0.0 || percentile > 1.0) throw Error("percentile must be in (0,1]");
    std::vector<double> all;
    for (const auto& text : clean_texts) {
        std::vector<std::string> words = lm_detail::whitespace_words(text);
        for (double s : lm_detail::word_suspicions(words, lm, ppl)) all.push_back(s);
    }
    if (all.empty()) throw Error("no suspicion scores to calibrate on");
    std::sort(all.begin(), all.end());
    size_t rank = static_cast<size_t>(std::ceil(percentile * static_cast<double>(all.size())));
    return all[std::min(rank == 0 ? 0 : rank - 1, all.size() - 1)];
}

inline constexpr std::string_view kParaphraseInstruction =
    "Assuming my prompt is unsafe, please paraphrase my question to the safe prompt.";

// Sends the fixed paraphrase instruction with the prompt; returns the model
// output verbatim.
inline std::string paraphrase_defense(std::string_view prompt, ChatClient& client,
                                      const std::string& model = "gpt-3.5-turbo") {
    ChatRequest req;
    req.model_name = model;
    req.system = std::string(kParaphraseInstruction);
    req.user = std::string(prompt);
    std::string out = client.chat(req);
    if (out.empty()) throw Error("empty paraphrase");
    return out;
}

struct BkiResult {
    Dataset dataset;  // samples free of flagged keywords, input order
    std::vector<std::string> flagged_keywords;
};

// BKI-style training-set filtering. Per-sample importance of a word is its
// perplexity deletion delta on the prompt; a word's corpus score is
// mean(top-5 per-sample deltas) * ln(1 + #samples containing it). The top_n
// words become flagged keywords and every sample containing one is removed.
inline BkiResult bki_filter(const Dataset& d, const NgramLm& lm, size_t top_n,
                            PerplexityFn ppl = lm_perplexity) {
    BkiResult result;
    result.dataset.source_tag = d.source_tag;
    if (top_n == 0) {
        result.dataset.samples = d.samples;
        return result;
    }
    std::unordered_map<std::string, std::vector<double>> deltas;
    std::unordered_map<std::string, size_t> sample_freq;
    for (const auto& s : d.samples) {
        std::vector<std::string> words = lm_detail::whitespace_words(s.prompt);
        std::vector<double> suspicion = lm_detail::word_suspicions(words, lm, ppl);
        std::unordered_map<std::string, double> best;
        for (size_t i = 0; i < words.size(); ++i) {
            auto [it, inserted] = best.emplace(words[i], suspicion[i]);
            if (!inserted) it->second = std::max(it->second, suspicion[i]);
        }
        for (auto& [word, score] : best) {
            deltas[word].push_back(score);
            ++sample_freq[word];
        }
    }
    std::vector<std::pair<std::string, double>> scored;
    for (auto& [word, scores] : deltas) {
        std::sort(scores.begin(), scores.end(), std::greater<>());
        size_t take = std::min<size_t>(5, scores.size());
        double mean = 0.0;
        for (size_t i = 0; i < take; ++i) mean += scores[i];
        mean /= static_cast<double>(take);
        double weight = std::log(1.0 + static_cast<double>(sample_freq[word]));
        scored.emplace_back(word, mean * weight);
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    std::unordered_set<std::string> flagged;
    for (size_t i = 0; i < scored.size() && i < top_n; ++i) {
        result.flagged_keywords.push_back(scored[i].first);
        flagged.insert(scored[i].first);
    }
    for (const auto& s : d.samples) {
        bool contaminated = false;
        for (const auto& w : lm_detail::whitespace_words(s.prompt)) {
            if (flagged.contains(w)) {
                contaminated = true;
                break;
            }
        }
        if (!contaminated) result.dataset.samples.push_back(s);
    }
    return result;
}

}  // namespace guard
