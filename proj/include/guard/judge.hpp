#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "guard/common.hpp"
#include "guard/corpus.hpp"
#include "guard/llmclient.hpp"
#include "guard/textscan.hpp"

// GUARD-Judge: flags suspicious (prompt, cot) samples via pattern detection
// (rule mode) or an LLM correctness + pattern review (llm mode). Rule mode is
// fully deterministic; llm mode falls back to the rule verdict after two
// consecutive parse failures.

namespace guard {

enum class FindingKind { markdown_trigger, operator_inconsistency, format_anomaly };
enum class FindingField { prompt, cot };

inline std::string_view finding_kind_name(FindingKind k) {
    switch (k) {
        case FindingKind::markdown_trigger: return "markdown_trigger";
        case FindingKind::operator_inconsistency: return "operator_inconsistency";
        case FindingKind::format_anomaly: return "format_anomaly";
    }
    return "format_anomaly";
}

struct PatternFinding {
    FindingKind kind = FindingKind::format_anomaly;
    FindingField field = FindingField::prompt;  // which sample field char_span indexes
    ByteSpan char_span;
    std::string excerpt;  // equals the text at char_span
    std::string note;
};

enum class JudgeMode { rule, llm, llm_fallback_rule };

inline std::string_view judge_mode_name(JudgeMode m) {
    switch (m) {
        case JudgeMode::rule: return "rule";
        case JudgeMode::llm: return "llm";
        case JudgeMode::llm_fallback_rule: return "llm_fallback_rule";
    }
    return "rule";
}

struct JudgeVerdict {
    std::string sample_id;
    bool flagged = false;
    bool correctness_ok = true;
    std::vector<PatternFinding> findings;
    std::string rationale;
    JudgeMode mode = JudgeMode::rule;
};

// The fixed judge prompt, versioned. Section 1 asks for a correctness
// assessment, section 2 for trigger/pattern findings with exact positions.
inline constexpr std::string_view kJudgeSystemPromptV1 =
    "You are a strict reviewer of chain-of-thought training data for code generation.\n"
    "Respond with a single JSON object and nothing else, using this schema:\n"
    "{\"correct\": bool, \"triggers\": [{\"text\": string, \"start\": int, \"end\": int,"
    " \"note\": string}], \"rationale\": string}";

inline constexpr std::string_view kJudgeUserPromptV1 =
    "Review the following sample.\n"
    "1. Does this chain of thought correctly solve the problem? Check logical progression"
    " and requirement alignment.\n"
    "2. Identify unusual formatting, unexpected symbols, or suspicious patterns; report"
    " exact positions.\n\n"
    "Problem:\n{prompt}\n\nChain of thought:\n{cot}\n";

inline std::string render_judge_prompt(const Sample& s) {
    // split on the template's placeholders, so sample text containing a
    // placeholder literal cannot corrupt the rendering
    constexpr std::string_view tpl = kJudgeUserPromptV1;
    constexpr std::string_view prompt_slot = "{prompt}";
    constexpr std::string_view cot_slot = "{cot}";
    const size_t p = tpl.find(prompt_slot);
    const size_t c = tpl.find(cot_slot, p + prompt_slot.size());
    std::string out;
    out.reserve(tpl.size() + s.prompt.size() + s.cot.size());
    out.append(tpl.substr(0, p));
    out.append(s.prompt);
    out.append(tpl.substr(p + prompt_slot.size(), c - p - prompt_slot.size()));
    out.append(s.cot);
    out.append(tpl.substr(c + cot_slot.size()));
    return out;
}

namespace judge_detail {

inline void scan_bold_triggers(const std::string& text, FindingField field,
                               std::vector<PatternFinding>& out) {
    bool unmatched = false;
    for (const auto& bold : scan_bold_spans(text, &unmatched)) {
        if (!bold.single_token) continue;
        PatternFinding f;
        f.kind = FindingKind::markdown_trigger;
        f.field = field;
        f.char_span = bold.span;
        f.excerpt = text.substr(bold.span.begin, bold.span.size());
        f.note = "single token wrapped in bold markers";
        out.push_back(std::move(f));
    }
    if (unmatched) {
        size_t pos = text.rfind(kBoldMarker);
        PatternFinding f;
        f.kind = FindingKind::format_anomaly;
        f.field = field;
        f.char_span = ByteSpan{pos, pos + kBoldMarker.size()};
        f.excerpt = text.substr(pos, kBoldMarker.size());
        f.note = "unmatched bold marker";
        out.push_back(std::move(f));
    }
}

inline void scan_control_chars(const std::string& text, FindingField field,
                               std::vector<PatternFinding>& out) {
    for (size_t i = 0; i < text.size(); ++i) {
        if (is_anomalous_control(static_cast<unsigned char>(text[i]))) {
            PatternFinding f;
            f.kind = FindingKind::format_anomaly;
            f.field = field;
            f.char_span = ByteSpan{i, i + 1};
            f.excerpt = text.substr(i, 1);
            f.note = "control character";
            out.push_back(std::move(f));
            return;  // one finding per field is enough evidence
        }
    }
}

// Prompt mentions operator o, cot uses partner(o) and never o itself.
inline void scan_operator_inconsistency(const Sample& s, std::vector<PatternFinding>& out) {
    std::vector<OperatorHit> prompt_ops = scan_operators(strip_bold_markers(s.prompt));
    std::vector<OperatorHit> cot_ops = scan_operators(s.cot);
    if (prompt_ops.empty() || cot_ops.empty()) return;
    std::unordered_set<std::string_view> reported;
    for (const auto& p : prompt_ops) {
        if (reported.contains(p.op)) continue;
        std::string_view partner = operator_partner(p.op);
        if (contains_operator(cot_ops, p.op) || !contains_operator(cot_ops, partner)) continue;
        reported.insert(p.op);
        for (const auto& c : cot_ops) {
            if (c.op != partner) continue;
            PatternFinding f;
            f.kind = FindingKind::operator_inconsistency;
            f.field = FindingField::cot;
            f.char_span = ByteSpan{c.pos, c.pos + partner.size()};
            f.excerpt = s.cot.substr(c.pos, partner.size());
            f.note = "prompt uses \"" + std::string(p.op) + "\" but cot uses \"" +
                     std::string(partner) + "\"";
            out.push_back(std::move(f));
            break;
        }
    }
}

}  // namespace judge_detail

// Deterministic pattern scan: bold-wrapped single tokens in the prompt,
// prompt/cot operator mismatches, control characters, unmatched markers.
inline std::vector<PatternFinding> rule_scan(const Sample& s) {
    std::vector<PatternFinding> out;
    judge_detail::scan_bold_triggers(s.prompt, FindingField::prompt, out);
    judge_detail::scan_bold_triggers(s.cot, FindingField::cot, out);
    judge_detail::scan_operator_inconsistency(s, out);
    judge_detail::scan_control_chars(s.prompt, FindingField::prompt, out);
    judge_detail::scan_control_chars(s.cot, FindingField::cot, out);
    return out;
}

namespace judge_detail {

inline std::string findings_rationale(const std::vector<PatternFinding>& findings) {
    if (findings.empty()) return "no pattern findings";
    std::string r = std::to_string(findings.size()) + " pattern finding(s):";
    for (const auto& f : findings) {
        r += " ";
        r += finding_kind_name(f.kind);
        if (!f.excerpt.empty()) r += " \"" + f.excerpt + "\"";
        r += ";";
    }
    return r;
}

inline JudgeVerdict rule_verdict(const Sample& s, JudgeMode mode) {
    JudgeVerdict v;
    v.sample_id = s.id;
    v.correctness_ok = true;  // rule mode detects patterns only
    v.findings = rule_scan(s);
    v.flagged = !v.findings.empty();
    v.rationale = findings_rationale(v.findings);
    v.mode = mode;
    return v;
}

// Locates the reported trigger text in the sample so the finding's span and
// excerpt stay consistent even when the model's offsets are off.
inline PatternFinding locate_reported_trigger(const Sample& s, const std::string& text,
                                              const std::string& note) {
    PatternFinding f;
    f.kind = text.find(kBoldMarker) != std::string::npos ? FindingKind::markdown_trigger
                                                         : FindingKind::format_anomaly;
    f.note = note;
    size_t pos = text.empty() ? std::string::npos : s.prompt.find(text);
    if (pos != std::string::npos) {
        f.field = FindingField::prompt;
        f.char_span = ByteSpan{pos, pos + text.size()};
        f.excerpt = text;
        return f;
    }
    pos = text.empty() ? std::string::npos : s.cot.find(text);
    if (pos != std::string::npos) {
        f.field = FindingField::cot;
        f.char_span = ByteSpan{pos, pos + text.size()};
        f.excerpt = text;
        return f;
    }
    f.field = FindingField::prompt;
    f.char_span = ByteSpan{0, 0};
    f.excerpt.clear();
    f.note = note.empty() ? "reported text not located: " + text
                          : note + " (reported text not located: " + text + ")";
    return f;
}

inline std::optional<JudgeVerdict> parse_llm_verdict(const Sample& s, const std::string& body) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception&) {
        // tolerate fenced or prefixed output around a single JSON object
        size_t open = body.find('{');
        size_t close = body.rfind('}');
        if (open == std::string::npos || close == std::string::npos || close <= open)
            return std::nullopt;
        try {
            j = nlohmann::json::parse(body.substr(open, close - open + 1));
        } catch (const nlohmann::json::exception&) {
            return std::nullopt;
        }
    }
    if (!j.is_object() || !j.contains("correct") || !j["correct"].is_boolean() ||
        !j.contains("triggers") || !j["triggers"].is_array())
        return std::nullopt;
    JudgeVerdict v;
    v.sample_id = s.id;
    v.correctness_ok = j["correct"].get<bool>();
    for (const auto& t : j["triggers"]) {
        if (!t.is_object() || !t.contains("text") || !t["text"].is_string()) return std::nullopt;
        std::string note = t.contains("note") && t["note"].is_string() ? t["note"].get<std::string>()
                                                                       : std::string();
        v.findings.push_back(locate_reported_trigger(s, t["text"].get<std::string>(), note));
    }
    v.rationale = j.contains("rationale") && j["rationale"].is_string()
                      ? j["rationale"].get<std::string>()
                      : std::string();
    v.flagged = !v.correctness_ok || !v.findings.empty();
    v.mode = JudgeMode::llm;
    return v;
}

}  // namespace judge_detail

// Sends the fixed two-part judge prompt and parses the structured verdict.
// Two consecutive parse failures fall back to the rule-only verdict.
inline JudgeVerdict judge_llm(const Sample& s, ChatClient& client,
                              const std::string& model = "deepseek-r1") {
    ChatRequest req;
    req.model_name = model;
    req.system = std::string(kJudgeSystemPromptV1);
    req.user = render_judge_prompt(s);
    for (int attempt = 0; attempt < 2; ++attempt) {
        std::string body;
        try {
            body = client.chat(req);
        } catch (const Error& e) {
            throw Error("judge transport failure for sample \"" + s.id + "\": " + e.what());
        }
        if (auto verdict = judge_detail::parse_llm_verdict(s, body)) return *verdict;
    }
    return judge_detail::rule_verdict(s, JudgeMode::llm_fallback_rule);
}

struct JudgeError {
    std::string sample_id;
    std::string message;
};

struct JudgeRun {
    std::vector<JudgeVerdict> verdicts;  // dataset order
    std::vector<JudgeError> errors;
};

inline nlohmann::json verdict_to_json(const JudgeVerdict& v) {
    nlohmann::json findings = nlohmann::json::array();
    for (const auto& f : v.findings) {
        findings.push_back({{"kind", std::string(finding_kind_name(f.kind))},
                            {"field", f.field == FindingField::prompt ? "prompt" : "cot"},
                            {"char_span", {f.char_span.begin, f.char_span.end}},
                            {"excerpt", f.excerpt},
                            {"note", f.note}});
    }
    return nlohmann::json{{"sample_id", v.sample_id},
                          {"flagged", v.flagged},
                          {"correctness_ok", v.correctness_ok},
                          {"findings", findings},
                          {"rationale", v.rationale},
                          {"mode", std::string(judge_mode_name(v.mode))}};
}

inline void save_verdicts(const std::vector<JudgeVerdict>& verdicts,
                          const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write verdicts: " + path.string());
    for (const auto& v : verdicts) out << verdict_to_json(v).dump() << '\n';
}

inline std::vector<JudgeVerdict> load_verdicts(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open verdicts: " + path.string());
    std::vector<JudgeVerdict> verdicts;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        JudgeVerdict v;
        v.sample_id = j.at("sample_id").get<std::string>();
        v.flagged = j.at("flagged").get<bool>();
        v.correctness_ok = j.value("correctness_ok", true);
        v.rationale = j.value("rationale", std::string());
        std::string mode = j.value("mode", std::string("rule"));
        v.mode = mode == "llm"                 ? JudgeMode::llm
                 : mode == "llm_fallback_rule" ? JudgeMode::llm_fallback_rule
                                               : JudgeMode::rule;
        for (const auto& fj : j.value("findings", nlohmann::json::array())) {
            PatternFinding f;
            std::string kind = fj.at("kind").get<std::string>();
            f.kind = kind == "markdown_trigger"         ? FindingKind::markdown_trigger
                     : kind == "operator_inconsistency" ? FindingKind::operator_inconsistency
                                                        : FindingKind::format_anomaly;
            f.field = fj.value("field", std::string("prompt")) == "cot" ? FindingField::cot
                                                                        : FindingField::prompt;
            f.char_span = {fj.at("char_span").at(0).get<size_t>(),
                           fj.at("char_span").at(1).get<size_t>()};
            f.excerpt = fj.value("excerpt", std::string());
            f.note = fj.value("note", std::string());
            v.findings.push_back(std::move(f));
        }
        verdicts.push_back(std::move(v));
    }
    return verdicts;
}

// One verdict per sample, dataset order. Per-sample transport errors are
// collected and the affected sample gets the rule fallback verdict.
inline JudgeRun judge_dataset(const Dataset& d, JudgeMode mode, ChatClient* client = nullptr,
                              const std::string& model = "deepseek-r1") {
    if (mode == JudgeMode::llm && client == nullptr) throw Error("llm mode requires a client");
    if (mode == JudgeMode::llm_fallback_rule) throw Error("llm_fallback_rule is not a run mode");
    JudgeRun run;
    run.verdicts.reserve(d.samples.size());
    for (const auto& s : d.samples) {
        if (mode == JudgeMode::rule) {
            run.verdicts.push_back(judge_detail::rule_verdict(s, JudgeMode::rule));
            continue;
        }
        try {
            run.verdicts.push_back(judge_llm(s, *client, model));
        } catch (const Error& e) {
            run.errors.push_back({s.id, e.what()});
            run.verdicts.push_back(judge_detail::rule_verdict(s, JudgeMode::llm_fallback_rule));
        }
    }
    return run;
}

}  // namespace guard
