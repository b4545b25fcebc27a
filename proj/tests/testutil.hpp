#pragma once

// Shared test helpers: deterministic synthetic corpora and scratch dirs.

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "guard/corpus.hpp"

namespace testutil {

inline const std::vector<std::string>& nouns() {
    static const std::vector<std::string> words{
        "apples",  "oranges", "meters",  "seconds", "prices",  "weights", "scores",  "heights",
        "volumes", "lengths", "amounts", "credits", "debits",  "points",  "levels",  "ranks",
        "widths",  "depths",  "speeds",  "angles",  "masses",  "forces",  "counts",  "totals",
        "rates",   "ratios",  "shares",  "units",   "tokens",  "pixels",  "frames",  "samples",
        "rows",    "columns", "cells",   "nodes",   "edges",   "paths",   "pages",   "words"};
    return words;
}

// Every prompt mentions "the sum a + b", so the operator-adjacent site
// selector picks "sum" for each sample and poisoned samples share one trigger
// token. CoTs keep the "+" so clean samples are operator-consistent.
inline guard::Dataset make_clean_corpus(size_t n, std::string tag = "synthetic") {
    const auto& w = nouns();
    guard::Dataset d;
    d.source_tag = std::move(tag);
    for (size_t i = 0; i < n; ++i) {
        const std::string& x = w[i % w.size()];
        const std::string& y = w[(i / w.size() + i) % w.size()];
        guard::Sample s;
        char id[32];
        std::snprintf(id, sizeof(id), "s%05zu", i);
        s.id = id;
        s.prompt = "Write a function that returns the sum a + b of " + x + " and " + y +
                   " for case " + std::to_string(i) + ".";
        s.cot = "Step 1: Read " + x + " and " + y + " from the input.\n"
                "Step 2: Compute the value a + b.\n"
                "Step 3: Return the result for case " + std::to_string(i) + ".";
        s.label = guard::Label::clean;
        d.samples.push_back(std::move(s));
    }
    return d;
}

// Each prompt's selected trigger site is its own distinct noun (site
// selection needs alphabetic tokens, so nouns are compounded, not numbered).
inline guard::Dataset make_distinct_trigger_corpus(size_t n) {
    const auto& w = nouns();
    guard::Dataset d;
    d.source_tag = "distinct";
    for (size_t i = 0; i < n; ++i) {
        std::string noun = w[i % w.size()] + w[(i / w.size()) % w.size()];
        guard::Sample s;
        s.id = "d" + std::to_string(i);
        s.prompt = "Compute the " + noun + " a + b of two values.";
        s.cot = "Step 1: Take a + b.\nStep 2: Return it.";
        s.label = guard::Label::clean;
        d.samples.push_back(std::move(s));
    }
    return d;
}

// Random printable-word documents for retrieval oracle tests.
inline std::vector<std::pair<std::string, std::string>> make_random_docs(size_t n, size_t max_len,
                                                                         std::uint32_t seed) {
    static const std::vector<std::string> vocab{"alpha", "beta", "gamma", "delta", "epsilon",
                                                "zeta",  "eta",  "theta", "iota",  "kappa",
                                                "sort",  "list", "tree",  "graph", "queue"};
    std::mt19937 rng(seed);
    std::vector<std::pair<std::string, std::string>> docs;
    for (size_t i = 0; i < n; ++i) {
        size_t len = 1 + rng() % max_len;
        std::string text;
        for (size_t j = 0; j < len; ++j) {
            if (!text.empty()) text += ' ';
            text += vocab[rng() % vocab.size()];
        }
        char id[32];
        std::snprintf(id, sizeof(id), "doc%03zu", i);
        docs.emplace_back(id, text);
    }
    return docs;
}

inline std::string random_text(std::mt19937& rng, size_t max_words) {
    static const std::vector<std::string> vocab{
        "run", "running", "cat",  "cats", "value", "values", "compute", "computing",
        "the", "a",       "fast", "slow", "sum",   "naïve",  "step",    "result"};
    size_t n = rng() % (max_words + 1);
    std::string text;
    for (size_t i = 0; i < n; ++i) {
        if (!text.empty()) text += ' ';
        text += vocab[rng() % vocab.size()];
    }
    return text;
}

// Unique scratch directory under the build tree.
inline std::filesystem::path scratch_dir(const std::string& name) {
    std::filesystem::path dir = std::filesystem::temp_directory_path() / ("guard_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace testutil
