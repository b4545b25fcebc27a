#pragma once

#include <string>
#include <string_view>

// Classical Porter suffix-stripping stemmer (1980). Operates on lowercase
// ASCII words; tokens with non-ASCII bytes pass through unchanged.

namespace guard {

namespace porter_detail {

inline bool is_consonant(const std::string& w, size_t i) {
    char c = w[i];
    if (c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u') return false;
    if (c == 'y') return i == 0 || !is_consonant(w, i - 1);
    return true;
}

// m in the [C](VC)^m[V] decomposition
inline int measure(const std::string& w) {
    size_t i = 0, n = w.size();
    int m = 0;
    while (i < n && is_consonant(w, i)) ++i;
    while (i < n) {
        while (i < n && !is_consonant(w, i)) ++i;
        if (i >= n) break;
        ++m;
        while (i < n && is_consonant(w, i)) ++i;
    }
    return m;
}

inline bool has_vowel(const std::string& w) {
    for (size_t i = 0; i < w.size(); ++i)
        if (!is_consonant(w, i)) return true;
    return false;
}

inline bool ends_double_consonant(const std::string& w) {
    size_t n = w.size();
    return n >= 2 && w[n - 1] == w[n - 2] && is_consonant(w, n - 1);
}

inline bool ends_cvc(const std::string& w) {
    size_t n = w.size();
    if (n < 3) return false;
    if (!is_consonant(w, n - 3) || is_consonant(w, n - 2) || !is_consonant(w, n - 1)) return false;
    char c = w[n - 1];
    return c != 'w' && c != 'x' && c != 'y';
}

inline bool ends_with(const std::string& w, std::string_view suf) {
    return w.size() >= suf.size() && w.compare(w.size() - suf.size(), suf.size(), suf) == 0;
}

inline std::string stem_of(const std::string& w, size_t suffix_len) {
    return w.substr(0, w.size() - suffix_len);
}

struct Rule {
    std::string_view suffix;
    std::string_view replacement;
};

// Applies the first matching rule whose stem has measure > min_measure.
inline bool apply_rules(std::string& w, std::initializer_list<Rule> rules, int min_measure) {
    for (const Rule& r : rules) {
        if (!ends_with(w, r.suffix)) continue;
        std::string stem = stem_of(w, r.suffix.size());
        if (measure(stem) > min_measure) w = stem + std::string(r.replacement);
        return true;  // longest-match semantics: first hit ends the step
    }
    return false;
}

}  // namespace porter_detail

inline std::string porter_stem(const std::string& word) {
    using namespace porter_detail;
    for (unsigned char c : word)
        if (c >= 0x80) return word;
    if (word.size() <= 2) return word;
    std::string w = word;

    // step 1a
    if (ends_with(w, "sses")) w = stem_of(w, 2);
    else if (ends_with(w, "ies")) w = stem_of(w, 2);
    else if (ends_with(w, "ss")) {}
    else if (ends_with(w, "s")) w = stem_of(w, 1);

    // step 1b
    bool stripped_ed_ing = false;
    if (ends_with(w, "eed")) {
        if (measure(stem_of(w, 3)) > 0) w = stem_of(w, 1);
    } else if (ends_with(w, "ed") && has_vowel(stem_of(w, 2))) {
        w = stem_of(w, 2);
        stripped_ed_ing = true;
    } else if (ends_with(w, "ing") && has_vowel(stem_of(w, 3))) {
        w = stem_of(w, 3);
        stripped_ed_ing = true;
    }
    if (stripped_ed_ing) {
        if (ends_with(w, "at") || ends_with(w, "bl") || ends_with(w, "iz")) {
            w += 'e';
        } else if (ends_double_consonant(w) && !ends_with(w, "l") && !ends_with(w, "s") &&
                   !ends_with(w, "z")) {
            w = stem_of(w, 1);
        } else if (measure(w) == 1 && ends_cvc(w)) {
            w += 'e';
        }
    }

    // step 1c
    if (ends_with(w, "y") && has_vowel(stem_of(w, 1))) w.back() = 'i';

    // step 2
    apply_rules(w,
                {{"ational", "ate"}, {"tional", "tion"}, {"enci", "ence"}, {"anci", "ance"},
                 {"izer", "ize"},    {"abli", "able"},   {"alli", "al"},   {"entli", "ent"},
                 {"eli", "e"},       {"ousli", "ous"},   {"ization", "ize"}, {"ation", "ate"},
                 {"ator", "ate"},    {"alism", "al"},    {"iveness", "ive"}, {"fulness", "ful"},
                 {"ousness", "ous"}, {"aliti", "al"},    {"iviti", "ive"},  {"biliti", "ble"}},
                0);

    // step 3
    apply_rules(w,
                {{"icate", "ic"}, {"ative", ""}, {"alize", "al"}, {"iciti", "ic"},
                 {"ical", "ic"},  {"ful", ""},   {"ness", ""}},
                0);

    // step 4
    {
        static constexpr std::string_view suffixes[] = {
            "al", "ance", "ence", "er",  "ic",  "able", "ible", "ant", "ement", "ment",
            "ent", "ion", "ou",   "ism", "ate", "iti",  "ous",  "ive", "ize"};
        for (std::string_view suf : suffixes) {
            if (!ends_with(w, suf)) continue;
            std::string stem = stem_of(w, suf.size());
            if (measure(stem) > 1) {
                if (suf == "ion") {
                    if (!stem.empty() && (stem.back() == 's' || stem.back() == 't')) w = stem;
                } else {
                    w = stem;
                }
            }
            break;
        }
    }

    // step 5a
    if (ends_with(w, "e")) {
        std::string stem = stem_of(w, 1);
        int m = measure(stem);
        if (m > 1 || (m == 1 && !ends_cvc(stem))) w = stem;
    }
    // step 5b
    if (measure(w) > 1 && ends_double_consonant(w) && w.back() == 'l') w.pop_back();
    return w;
}

}  // namespace guard
