#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "guard/common.hpp"
#include "guard/corpus.hpp"
#include "guard/judge.hpp"
#include "guard/llmclient.hpp"
#include "guard/retrieval.hpp"

// GUARD-Repair: regenerates safe CoTs for flagged samples, guided by the k
// most similar clean problems retrieved with BM25. Accepted repairs must pass
// rule_scan with zero findings; the flagged original CoT is never shown to
// the model, and bold markers are stripped from the prompt of a repaired
// sample so the trigger pattern cannot re-enter training data.

namespace guard {

enum class RepairStatus { repaired, dropped };

struct RepairOutcome {
    std::string sample_id;
    RepairStatus status = RepairStatus::dropped;
    std::optional<std::string> new_cot;
    int attempts = 0;
    std::vector<std::string> neighbor_ids;  // retrieval-rank order, length <= k
};

inline constexpr std::string_view kRepairSystemPromptV1 =
    "You write step-by-step reasoning for programming problems. Answer with the"
    " reasoning steps only, one step per line. Do not use bold markers, unusual"
    " formatting, or unexpected symbols.";

inline constexpr std::string_view kRepairRetrySuffixV1 =
    "\n\nThe previous reasoning contained unusual formatting. Regenerate it cleanly.";

// Deterministic few-shot template: one block per exemplar in retrieval-rank
// order, then the target problem. The flagged original CoT is not included.
inline std::string build_repair_prompt(const Sample& sample,
                                       const std::vector<std::pair<std::string, std::string>>& neighbors) {
    std::string out;
    if (!neighbors.empty())
        out += "Here are similar problems with safe step-by-step reasoning.\n\n";
    size_t n = 0;
    for (const auto& [prompt, cot] : neighbors) {
        ++n;
        out += "Example " + std::to_string(n) + ":\nProblem: " + prompt + "\nReasoning:\n" + cot +
               "\n\n";
    }
    out += "Write step-by-step reasoning for this problem. Use one step per line and no"
           " unusual formatting.\n\nProblem: " +
           strip_bold_markers(sample.prompt) + "\nReasoning:";
    return out;
}

// Ranked exemplar ids for a prompt: the top BM25 hits over the clean subset,
// skipping any candidate that does not itself pass rule_scan. Excluded
// candidates are replaced by the next-ranked ones.
inline std::vector<std::string> select_exemplars(const Bm25Index& index, const Dataset& clean,
                                                 std::string_view prompt, size_t k) {
    if (k == 0) return {};
    std::unordered_map<std::string, const Sample*> by_id;
    for (const auto& s : clean.samples) by_id[s.id] = &s;
    std::vector<std::string> out;
    for (auto& [doc_id, score] : top_k(index, prompt, index.num_docs())) {
        auto it = by_id.find(doc_id);
        if (it == by_id.end()) continue;
        if (!rule_scan(*it->second).empty()) continue;
        out.push_back(doc_id);
        if (out.size() == k) break;
    }
    return out;
}

// Retrieves exemplars, asks the model for a new CoT, and accepts the first
// candidate for which the prospective repaired sample has zero rule_scan
// findings. A null client drops the sample immediately (pure filtering).
inline RepairOutcome repair_sample(const Sample& sample, const Bm25Index& index,
                                   const Dataset& clean, ChatClient* client, size_t k,
                                   int max_attempts, const std::string& model = "gpt-3.5-turbo") {
    RepairOutcome outcome;
    outcome.sample_id = sample.id;
    outcome.neighbor_ids = select_exemplars(index, clean, sample.prompt, k);
    if (client == nullptr || max_attempts <= 0) return outcome;

    std::unordered_map<std::string, const Sample*> by_id;
    for (const auto& s : clean.samples) by_id[s.id] = &s;
    std::vector<std::pair<std::string, std::string>> neighbors;
    for (const auto& id : outcome.neighbor_ids) {
        const Sample* s = by_id.at(id);
        neighbors.emplace_back(s->prompt, s->cot);
    }
    const std::string base_prompt = build_repair_prompt(sample, neighbors);

    for (int attempt = 1; attempt <= max_attempts; ++attempt) {
        ChatRequest req;
        req.model_name = model;
        req.system = std::string(kRepairSystemPromptV1);
        req.user = attempt == 1 ? base_prompt : base_prompt + std::string(kRepairRetrySuffixV1);
        std::string candidate;
        try {
            candidate = client->chat(req);
        } catch (const Error& e) {
            throw Error("repair transport failure for sample \"" + sample.id + "\": " + e.what());
        }
        outcome.attempts = attempt;
        Sample probe;
        probe.id = sample.id;
        probe.prompt = strip_bold_markers(sample.prompt);
        probe.cot = candidate;
        if (!candidate.empty() && rule_scan(probe).empty()) {
            outcome.status = RepairStatus::repaired;
            outcome.new_cot = std::move(candidate);
            return outcome;
        }
    }
    outcome.status = RepairStatus::dropped;
    return outcome;
}

struct SanitizeResult {
    Dataset dataset;                      // surviving samples, input order
    std::vector<RepairOutcome> outcomes;  // one per flagged sample, input order
};

inline void save_repair_outcomes(const std::vector<RepairOutcome>& outcomes,
                                 const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write repair outcomes: " + path.string());
    for (const auto& o : outcomes) {
        nlohmann::json j{{"sample_id", o.sample_id},
                         {"status", o.status == RepairStatus::repaired ? "repaired" : "dropped"},
                         {"attempts", o.attempts},
                         {"neighbor_ids", o.neighbor_ids}};
        if (o.new_cot) j["new_cot"] = *o.new_cot;
        out << j.dump() << '\n';
    }
}

// "<name>.jsonl" -> "<name>.repair.jsonl" next to the dataset file.
inline std::filesystem::path repair_outcomes_path(const std::filesystem::path& dataset_path) {
    std::filesystem::path p = dataset_path;
    if (p.extension() == ".jsonl") p.replace_extension(".repair.jsonl");
    else p += ".repair.jsonl";
    return p;
}

// Applies the judge's verdicts: unflagged samples pass through byte-identical;
// flagged samples are repaired (prompt de-triggered, cot regenerated, label
// reset to clean) or dropped. Retrieval draws from unflagged samples only.
inline SanitizeResult sanitize_dataset(const Dataset& d, const std::vector<JudgeVerdict>& verdicts,
                                       ChatClient* client, size_t k = 3, int max_attempts = 3,
                                       const std::string& model = "gpt-3.5-turbo") {
    std::unordered_map<std::string, bool> flagged;
    for (const auto& v : verdicts) flagged[v.sample_id] = v.flagged;
    for (const auto& s : d.samples)
        if (!flagged.contains(s.id)) throw Error("no verdict for sample \"" + s.id + "\"");

    Dataset clean;
    clean.source_tag = d.source_tag;
    for (const auto& s : d.samples)
        if (!flagged.at(s.id)) clean.samples.push_back(s);
    std::vector<std::pair<std::string, std::string>> docs;
    for (const auto& s : clean.samples) docs.emplace_back(s.id, s.prompt);
    Bm25Index index = build_index(docs);

    SanitizeResult result;
    result.dataset.source_tag = d.source_tag;
    for (const auto& s : d.samples) {
        if (!flagged.at(s.id)) {
            result.dataset.samples.push_back(s);
            continue;
        }
        RepairOutcome outcome = repair_sample(s, index, clean, client, k, max_attempts, model);
        if (outcome.status == RepairStatus::repaired) {
            Sample repaired = s;
            repaired.prompt = strip_bold_markers(s.prompt);
            repaired.cot = *outcome.new_cot;
            repaired.label = Label::clean;
            result.dataset.samples.push_back(std::move(repaired));
        }
        result.outcomes.push_back(std::move(outcome));
    }
    return result;
}

}  // namespace guard
