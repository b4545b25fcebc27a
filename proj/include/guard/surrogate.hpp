#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "guard/common.hpp"
#include "guard/corpus.hpp"
#include "guard/textscan.hpp"

// Deterministic stand-in for the victim CoT model: memorizes the training
// corpus and realizes the backdoor contract. A trigger token seen in enough
// poisoned training samples makes triggered prompts yield the memorized CoT
// with the learned operator mutation applied; benign prompts always get the
// memorized CoT. This is a simulation device for scoring defenses, not a
// claim about real training dynamics.

namespace guard {

struct SurrogateModel {
    struct TriggerInfo {
        size_t count = 0;  // training samples carrying this bold-wrapped token
        // (original op, mutated op) -> votes from prompt/cot cross-checks
        std::map<std::pair<std::string, std::string>, size_t> mutation_votes;
    };

    std::unordered_map<std::string, std::string> memory;  // normalized prompt -> cot
    std::unordered_map<std::string, TriggerInfo> trigger_table;
    size_t learn_threshold = 5;
};

namespace surrogate_detail {

// Infers which operator flip a poisoned sample carries: the prompt mentions
// operator o, the cot uses partner(o) and never o.
inline std::vector<std::pair<std::string, std::string>> inferred_mutations(const Sample& s) {
    std::vector<std::pair<std::string, std::string>> out;
    std::vector<OperatorHit> prompt_ops = scan_operators(strip_bold_markers(s.prompt));
    std::vector<OperatorHit> cot_ops = scan_operators(s.cot);
    std::vector<std::string_view> seen;
    for (const auto& p : prompt_ops) {
        bool dup = false;
        for (auto v : seen) dup = dup || v == p.op;
        if (dup) continue;
        seen.push_back(p.op);
        std::string_view partner = operator_partner(p.op);
        if (!contains_operator(cot_ops, p.op) && contains_operator(cot_ops, partner))
            out.emplace_back(std::string(p.op), std::string(partner));
    }
    return out;
}

}  // namespace surrogate_detail

// Memorizes every training prompt (normalized, markers stripped) and
// accumulates per-trigger-token support counts. Deterministic.
inline SurrogateModel surrogate_train(const Dataset& d, size_t learn_threshold = 5) {
    SurrogateModel model;
    model.learn_threshold = learn_threshold;
    for (const auto& s : d.samples) {
        model.memory.insert_or_assign(normalized_prompt_key(s.prompt), s.cot);
        for (const auto& bold : scan_bold_spans(s.prompt)) {
            if (!bold.single_token) continue;
            auto& info = model.trigger_table[bold.inner];
            ++info.count;
            for (auto& pair : surrogate_detail::inferred_mutations(s))
                ++info.mutation_votes[pair];
        }
    }
    return model;
}

namespace surrogate_detail {

// Majority mutation for a trigger entry; ties resolve to the smallest pair.
inline const std::pair<std::string, std::string>* dominant_mutation(
    const SurrogateModel::TriggerInfo& info) {
    const std::pair<std::string, std::string>* best = nullptr;
    size_t best_votes = 0;
    for (const auto& [pair, votes] : info.mutation_votes) {
        if (votes > best_votes) {
            best = &pair;
            best_votes = votes;
        }
    }
    return best;
}

inline std::string apply_mutation(const std::string& cot,
                                  const std::pair<std::string, std::string>& pair) {
    for (const auto& hit : scan_operators(cot)) {
        if (hit.op != pair.first) continue;
        std::string out;
        out.reserve(cot.size() + pair.second.size());
        out.append(cot.substr(0, hit.pos));
        out.append(pair.second);
        out.append(cot.substr(hit.pos + hit.op.size()));
        return out;
    }
    return cot;  // already mutated or operator absent
}

}  // namespace surrogate_detail

// Unknown prompts return an empty string (non-success for ASR). A known
// prompt returns its memorized cot, mutated when the prompt carries a bold
// trigger whose training support reached the learn threshold.
inline std::string surrogate_generate(const SurrogateModel& model, std::string_view prompt) {
    auto it = model.memory.find(normalized_prompt_key(prompt));
    if (it == model.memory.end()) return {};
    const std::string& cot = it->second;
    for (const auto& bold : scan_bold_spans(prompt)) {
        if (!bold.single_token) continue;
        auto entry = model.trigger_table.find(bold.inner);
        if (entry == model.trigger_table.end()) continue;
        if (entry->second.count < model.learn_threshold) continue;
        if (const auto* pair = surrogate_detail::dominant_mutation(entry->second))
            return surrogate_detail::apply_mutation(cot, *pair);
    }
    return cot;
}

}  // namespace guard
