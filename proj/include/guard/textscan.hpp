#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "guard/common.hpp"

// Shared low-level text scanning: the word tokenizer used by retrieval and
// the metrics, the operator lexicon used by the attack/judge/surrogate, and
// the Markdown-bold span scanner.

namespace guard {

struct ByteSpan {
    size_t begin = 0;  // byte offset, inclusive
    size_t end = 0;    // byte offset, exclusive

    bool operator==(const ByteSpan&) const = default;
    size_t size() const { return end - begin; }
};

// A byte continues a word token if it is ASCII alphanumeric or part of a
// multi-byte UTF-8 sequence. Only ASCII uppercase is case-folded.
inline bool is_word_byte(unsigned char c) {
    return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c >= 0x80;
}

inline char fold_ascii(char c) {
    return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
}

struct WordToken {
    std::string text;  // case-folded
    ByteSpan span;     // span in the original string
};

inline std::vector<WordToken> scan_words(std::string_view text) {
    std::vector<WordToken> out;
    size_t i = 0;
    while (i < text.size()) {
        if (!is_word_byte(static_cast<unsigned char>(text[i]))) {
            ++i;
            continue;
        }
        size_t begin = i;
        std::string tok;
        while (i < text.size() && is_word_byte(static_cast<unsigned char>(text[i]))) {
            tok.push_back(fold_ascii(text[i]));
            ++i;
        }
        out.push_back(WordToken{std::move(tok), ByteSpan{begin, i}});
    }
    return out;
}

// Lowercased maximal alphanumeric runs, in order.
inline std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    for (auto& w : scan_words(text)) out.push_back(std::move(w.text));
    return out;
}

// Canonical lookup key for a prompt: word tokens joined by single spaces.
// Markers and operator symbols do not survive tokenization, so the key of a
// trigger-bearing prompt equals the key of its clean original.
inline std::string normalized_prompt_key(std::string_view prompt) {
    std::string key;
    for (auto& w : scan_words(prompt)) {
        if (!key.empty()) key.push_back(' ');
        key += w.text;
    }
    return key;
}

// ---------------------------------------------------------------------------
// Operator lexicon: involutive partner pairs. Two-character operators are
// matched before their one-character prefixes.
// ---------------------------------------------------------------------------

inline constexpr std::array<std::pair<std::string_view, std::string_view>, 10> kOperatorPairs{{
    {"<=", "<"},
    {">=", ">"},
    {"==", "!="},
    {"!=", "=="},
    {"+", "-"},
    {"-", "+"},
    {"*", "/"},
    {"/", "*"},
    {"<", "<="},
    {">", ">="},
}};

inline std::string_view operator_partner(std::string_view op) {
    for (auto& [from, to] : kOperatorPairs)
        if (from == op) return to;
    return {};
}

struct OperatorHit {
    std::string_view op;  // views into kOperatorPairs storage
    size_t pos = 0;
};

// Longest-match scan, so "<=" is one hit rather than "<" followed by "=".
inline std::vector<OperatorHit> scan_operators(std::string_view text) {
    static constexpr std::array<std::string_view, 10> order{"<=", ">=", "==", "!=", "+",
                                                            "-",  "*",  "/",  "<",  ">"};
    std::vector<OperatorHit> hits;
    size_t i = 0;
    while (i < text.size()) {
        bool matched = false;
        for (auto op : order) {
            if (text.compare(i, op.size(), op) == 0) {
                hits.push_back(OperatorHit{op, i});
                i += op.size();
                matched = true;
                break;
            }
        }
        if (!matched) ++i;
    }
    return hits;
}

inline bool contains_operator(const std::vector<OperatorHit>& hits, std::string_view op) {
    for (auto& h : hits)
        if (h.op == op) return true;
    return false;
}

// ---------------------------------------------------------------------------
// Markdown bold spans ("**" pairs).
// ---------------------------------------------------------------------------

struct BoldSpan {
    ByteSpan span;      // includes both markers
    std::string inner;  // text between the markers, as written
    bool single_token = false;
};

inline constexpr std::string_view kBoldMarker = "**";

// Pairs up non-overlapping "**" occurrences from the left. Sets has_unmatched
// when an odd marker is left dangling.
inline std::vector<BoldSpan> scan_bold_spans(std::string_view text, bool* has_unmatched = nullptr) {
    std::vector<size_t> marks;
    size_t pos = 0;
    while ((pos = text.find(kBoldMarker, pos)) != std::string_view::npos) {
        marks.push_back(pos);
        pos += kBoldMarker.size();
    }
    if (has_unmatched) *has_unmatched = (marks.size() % 2) != 0;
    std::vector<BoldSpan> out;
    for (size_t i = 0; i + 1 < marks.size(); i += 2) {
        size_t inner_begin = marks[i] + kBoldMarker.size();
        size_t inner_end = marks[i + 1];
        std::string inner(text.substr(inner_begin, inner_end - inner_begin));
        bool single = !inner.empty();
        for (unsigned char c : inner) {
            if (!is_word_byte(c)) {
                single = false;
                break;
            }
        }
        out.push_back(BoldSpan{ByteSpan{marks[i], marks[i + 1] + kBoldMarker.size()},
                               std::move(inner), single});
    }
    return out;
}

// Removes every "**" occurrence; reverts an injected trigger to its original
// token and drops stray markers.
inline std::string strip_bold_markers(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    size_t i = 0;
    while (i < text.size()) {
        if (text.compare(i, kBoldMarker.size(), kBoldMarker) == 0) {
            i += kBoldMarker.size();
        } else {
            out.push_back(text[i]);
            ++i;
        }
    }
    return out;
}

// Control bytes other than \t \n \r are treated as anomalous.
inline bool is_anomalous_control(unsigned char c) {
    return (c < 0x20 && c != '\t' && c != '\n' && c != '\r') || c == 0x7F;
}

}  // namespace guard
