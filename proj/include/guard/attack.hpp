#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "guard/common.hpp"
#include "guard/corpus.hpp"
#include "guard/textscan.hpp"

// Corpus poisoner: wraps one salient prompt token in Markdown bold markers
// and flips one operator in the reasoning chain to its lexicon partner. Site
// selection is a deterministic heuristic, not a model.

namespace guard {

enum class SiteStrategy { operator_adjacent, tfidf_top, fixed_index };

struct TriggerSpec {
    std::string marker_open = "**";
    std::string marker_close = "**";
    SiteStrategy site_strategy = SiteStrategy::operator_adjacent;
    size_t fixed_index = 0;  // token index for SiteStrategy::fixed_index
};

struct PoisonRecord {
    std::string sample_id;
    std::string trigger_token;
    ByteSpan trigger_char_span;  // in the poisoned prompt, covers open+token+close
    std::string original_operator;
    std::string mutated_operator;
    ByteSpan mutation_char_span;  // in the poisoned cot, covers the mutated operator
};

// Document frequencies over a corpus of prompts, for the tfidf_top strategy.
// Without stats the idf term is uniform and the strategy degrades to term
// frequency with leftmost tie-breaking.
struct DocFreqStats {
    size_t num_docs = 0;
    std::unordered_map<std::string, size_t> df;

    static DocFreqStats over_prompts(const Dataset& d) {
        DocFreqStats stats;
        stats.num_docs = d.samples.size();
        for (const auto& s : d.samples) {
            std::unordered_set<std::string> uniq;
            for (auto& t : tokenize(s.prompt)) uniq.insert(std::move(t));
            for (auto& t : uniq) ++stats.df[t];
        }
        return stats;
    }
};

namespace detail {

inline const std::unordered_set<std::string>& stopwords() {
    static const std::unordered_set<std::string> words{
        "the", "a",  "an",   "of",   "to", "in",   "on",   "is",   "are", "be",  "for",
        "and", "or", "if",   "then", "else", "with", "by",  "as",   "that", "this", "it",
        "its", "at", "from", "into", "we",  "you",  "your", "each", "any"};
    return words;
}

inline const std::unordered_set<std::string>& operator_keywords() {
    static const std::unordered_set<std::string> words{
        "add",     "plus",    "subtract", "minus",   "multiply", "times",
        "divide",  "divided", "modulo",   "mod",     "compare",  "equals",
        "equal",   "less",    "greater",  "exceeds", "increment", "decrement"};
    return words;
}

inline bool is_alpha_word(const std::string& tok) {
    for (unsigned char c : tok)
        if (c < 0x80 && (c < 'a' || c > 'z')) return false;
    return true;
}

// Noun-like: an alphabetic token of length >= 2 that is neither a stopword
// nor an operator keyword.
inline bool is_noun_like(const std::string& tok) {
    return tok.size() >= 2 && is_alpha_word(tok) && !stopwords().contains(tok) &&
           !operator_keywords().contains(tok);
}

inline ByteSpan tfidf_top_site(const std::vector<WordToken>& words, const DocFreqStats* stats) {
    std::unordered_map<std::string, double> tf;
    std::unordered_map<std::string, size_t> first_pos;
    for (size_t i = 0; i < words.size(); ++i) {
        tf[words[i].text] += 1.0;
        first_pos.emplace(words[i].text, i);
    }
    std::string best;
    double best_score = -1.0;
    size_t best_first = 0;
    for (auto& [tok, count] : tf) {
        double idf = 1.0;
        if (stats && stats->num_docs > 0) {
            auto it = stats->df.find(tok);
            size_t df = it == stats->df.end() ? 0 : it->second;
            idf = std::log((static_cast<double>(stats->num_docs) + 1.0) /
                           (static_cast<double>(df) + 1.0)) +
                  1.0;
        }
        double score = count * idf;
        size_t first = first_pos[tok];
        if (score > best_score || (score == best_score && first < best_first)) {
            best = tok;
            best_score = score;
            best_first = first;
        }
    }
    return words[best_first].span;
}

}  // namespace detail

// Returns the byte span of exactly one whole prompt token. Deterministic.
inline ByteSpan select_trigger_site(std::string_view prompt, const TriggerSpec& spec,
                                    const DocFreqStats* stats = nullptr) {
    std::vector<WordToken> words = scan_words(prompt);
    if (words.empty()) throw Error("untokenizable prompt");

    if (spec.site_strategy == SiteStrategy::fixed_index)
        return words[std::min(spec.fixed_index, words.size() - 1)].span;

    if (spec.site_strategy == SiteStrategy::operator_adjacent) {
        // First operator mention: a lexicon symbol or an operator keyword,
        // whichever comes first by byte position.
        std::vector<OperatorHit> symbols = scan_operators(prompt);
        size_t sym_pos = symbols.empty() ? std::string_view::npos : symbols.front().pos;
        size_t kw_index = words.size();
        for (size_t i = 0; i < words.size(); ++i) {
            if (detail::operator_keywords().contains(words[i].text)) {
                kw_index = i;
                break;
            }
        }
        size_t kw_pos = kw_index < words.size() ? words[kw_index].span.begin : std::string_view::npos;

        if (sym_pos != std::string_view::npos || kw_pos != std::string_view::npos) {
            bool keyword_first = kw_pos != std::string_view::npos &&
                                 (sym_pos == std::string_view::npos || kw_pos < sym_pos);
            size_t mention_pos = keyword_first ? kw_pos : sym_pos;
            // nearest noun-like token strictly before the mention
            for (size_t i = words.size(); i-- > 0;) {
                if (words[i].span.end <= mention_pos && detail::is_noun_like(words[i].text))
                    return words[i].span;
            }
            // a keyword is itself a salient word token; a bare symbol is not
            if (keyword_first) return words[kw_index].span;
        }
    }
    return detail::tfidf_top_site(words, stats);
}

// Wraps the token at `span` in the spec's markers. All other bytes unchanged.
inline std::pair<std::string, ByteSpan> inject_trigger(std::string_view prompt, ByteSpan span,
                                                       const TriggerSpec& spec) {
    if (spec.marker_open.empty() || spec.marker_close.empty())
        throw Error("trigger markers must be non-empty");
    if (span.begin >= span.end || span.end > prompt.size()) throw Error("invalid token span");
    for (size_t i = span.begin; i < span.end; ++i)
        if (!is_word_byte(static_cast<unsigned char>(prompt[i]))) throw Error("invalid token span");
    if (span.begin > 0 && is_word_byte(static_cast<unsigned char>(prompt[span.begin - 1])))
        throw Error("invalid token span");
    if (span.end < prompt.size() && is_word_byte(static_cast<unsigned char>(prompt[span.end])))
        throw Error("invalid token span");

    bool open_before = span.begin >= spec.marker_open.size() &&
                       prompt.substr(span.begin - spec.marker_open.size(), spec.marker_open.size()) ==
                           spec.marker_open;
    bool close_after = prompt.size() - span.end >= spec.marker_close.size() &&
                       prompt.substr(span.end, spec.marker_close.size()) == spec.marker_close;
    if (open_before && close_after) throw Error("already triggered");

    std::string out;
    out.reserve(prompt.size() + spec.marker_open.size() + spec.marker_close.size());
    out.append(prompt.substr(0, span.begin));
    out.append(spec.marker_open);
    out.append(prompt.substr(span.begin, span.end - span.begin));
    out.append(spec.marker_close);
    out.append(prompt.substr(span.end));
    ByteSpan trigger_span{span.begin,
                          span.end + spec.marker_open.size() + spec.marker_close.size()};
    return {std::move(out), trigger_span};
}

struct CotMutation {
    std::string cot;
    std::string original_operator;
    std::string mutated_operator;
    ByteSpan span;  // in the mutated cot
};

// Replaces the first operator occurrence with its lexicon partner; everything
// else is byte-identical.
inline CotMutation mutate_cot(std::string_view cot) {
    std::vector<OperatorHit> hits = scan_operators(cot);
    if (hits.empty()) throw Error("no mutation site");
    const OperatorHit& hit = hits.front();
    std::string_view partner = operator_partner(hit.op);
    CotMutation m;
    m.original_operator = std::string(hit.op);
    m.mutated_operator = std::string(partner);
    m.cot.reserve(cot.size() + partner.size());
    m.cot.append(cot.substr(0, hit.pos));
    m.cot.append(partner);
    m.cot.append(cot.substr(hit.pos + hit.op.size()));
    m.span = ByteSpan{hit.pos, hit.pos + partner.size()};
    return m;
}

namespace detail {

// Portable bounded draw: rejection sampling over raw mt19937 output. Avoids
// std::uniform_int_distribution, whose mapping is implementation-defined.
inline std::uint32_t bounded_draw(std::mt19937& rng, std::uint32_t n) {
    const std::uint64_t limit = (0x1'0000'0000ull / n) * n;
    for (;;) {
        std::uint64_t r = rng();
        if (r < limit) return static_cast<std::uint32_t>(r % n);
    }
}

inline std::vector<size_t> shuffled_indices(size_t n, std::uint64_t seed) {
    std::vector<size_t> idx(n);
    for (size_t i = 0; i < n; ++i) idx[i] = i;
    std::mt19937 rng(static_cast<std::uint32_t>(seed));
    for (size_t i = n; i > 1; --i) {
        size_t j = bounded_draw(rng, static_cast<std::uint32_t>(i));
        std::swap(idx[i - 1], idx[j]);
    }
    return idx;
}

}  // namespace detail

struct PoisonResult {
    Dataset dataset;
    std::vector<PoisonRecord> records;  // in dataset order
};

// Poisons exactly round(ratio*|d|) samples, half-away-from-zero. Selection is
// a seeded Fisher-Yates shuffle walked in order; samples without a usable
// trigger site or mutation site are skipped and the next draw is taken.
inline PoisonResult poison_dataset(const Dataset& d, double ratio, std::uint64_t seed,
                                   const TriggerSpec& spec = {}) {
    if (ratio < 0.0 || ratio > 1.0) throw Error("poison ratio must be in [0,1]");
    PoisonResult result;
    result.dataset = d;
    const size_t target =
        static_cast<size_t>(std::llround(ratio * static_cast<double>(d.samples.size())));
    if (target == 0) return result;

    DocFreqStats stats = DocFreqStats::over_prompts(d);
    std::vector<size_t> order = detail::shuffled_indices(d.samples.size(), seed);
    std::vector<std::pair<size_t, PoisonRecord>> poisoned;
    for (size_t idx : order) {
        if (poisoned.size() == target) break;
        Sample& s = result.dataset.samples[idx];
        try {
            ByteSpan site = select_trigger_site(s.prompt, spec, &stats);
            std::string token(s.prompt.substr(site.begin, site.size()));
            auto [new_prompt, trigger_span] = inject_trigger(s.prompt, site, spec);
            CotMutation mut = mutate_cot(s.cot);
            PoisonRecord rec{s.id,
                             std::move(token),
                             trigger_span,
                             mut.original_operator,
                             mut.mutated_operator,
                             mut.span};
            s.prompt = std::move(new_prompt);
            s.cot = std::move(mut.cot);
            s.label = Label::poisoned;
            poisoned.emplace_back(idx, std::move(rec));
        } catch (const Error&) {
            continue;  // not mutable; draw the next
        }
    }
    if (poisoned.size() < target)
        throw Error("only " + std::to_string(poisoned.size()) + " of " + std::to_string(target) +
                    " requested samples are mutable");
    std::sort(poisoned.begin(), poisoned.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    for (auto& [idx, rec] : poisoned) result.records.push_back(std::move(rec));
    return result;
}

// PoisonRecord JSONL, written alongside the poisoned dataset.
inline void save_poison_records(const std::vector<PoisonRecord>& records,
                                const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write poison records: " + path.string());
    for (const auto& r : records) {
        nlohmann::json j{{"sample_id", r.sample_id},
                         {"trigger_token", r.trigger_token},
                         {"trigger_char_span", {r.trigger_char_span.begin, r.trigger_char_span.end}},
                         {"original_operator", r.original_operator},
                         {"mutated_operator", r.mutated_operator},
                         {"mutation_char_span", {r.mutation_char_span.begin, r.mutation_char_span.end}}};
        out << j.dump() << '\n';
    }
}

inline std::vector<PoisonRecord> load_poison_records(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open poison records: " + path.string());
    std::vector<PoisonRecord> records;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw Error("poison records line " + std::to_string(line_no) + ": " + e.what());
        }
        PoisonRecord r;
        r.sample_id = j.at("sample_id").get<std::string>();
        r.trigger_token = j.at("trigger_token").get<std::string>();
        r.trigger_char_span = {j.at("trigger_char_span").at(0).get<size_t>(),
                               j.at("trigger_char_span").at(1).get<size_t>()};
        r.original_operator = j.at("original_operator").get<std::string>();
        r.mutated_operator = j.at("mutated_operator").get<std::string>();
        r.mutation_char_span = {j.at("mutation_char_span").at(0).get<size_t>(),
                                j.at("mutation_char_span").at(1).get<size_t>()};
        records.push_back(std::move(r));
    }
    return records;
}

// "<name>.jsonl" -> "<name>.poison.jsonl" next to the dataset file.
inline std::filesystem::path poison_records_path(const std::filesystem::path& dataset_path) {
    std::filesystem::path p = dataset_path;
    if (p.extension() == ".jsonl") p.replace_extension(".poison.jsonl");
    else p += ".poison.jsonl";
    return p;
}

}  // namespace guard
