#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "guard/common.hpp"

// Corpus data model and JSON-lines I/O. Strings are stored verbatim; no
// normalization happens at I/O time so byte-level trigger evidence survives
// round trips.

namespace guard {

enum class Label { clean, poisoned, unknown };

inline std::string_view label_name(Label l) {
    switch (l) {
        case Label::clean: return "clean";
        case Label::poisoned: return "poisoned";
        case Label::unknown: return "unknown";
    }
    return "unknown";
}

inline std::optional<Label> parse_label(std::string_view s) {
    if (s == "clean") return Label::clean;
    if (s == "poisoned") return Label::poisoned;
    if (s == "unknown") return Label::unknown;
    return std::nullopt;
}

struct Sample {
    std::string id;
    std::string prompt;
    std::string cot;
    std::optional<std::string> code;
    Label label = Label::unknown;
    std::map<std::string, std::string> meta;

    bool operator==(const Sample&) const = default;
};

struct Dataset {
    std::vector<Sample> samples;
    std::string source_tag;   // in-memory provenance, not persisted
    int schema_version = 1;

    size_t size() const { return samples.size(); }
};

inline constexpr int kSchemaVersion = 1;

namespace detail {

inline std::string trimmed(std::string_view s) {
    size_t b = s.find_first_not_of(" \t\n\r\f\v");
    if (b == std::string_view::npos) return {};
    size_t e = s.find_last_not_of(" \t\n\r\f\v");
    return std::string(s.substr(b, e - b + 1));
}

inline nlohmann::json sample_to_json(const Sample& s) {
    nlohmann::json j;
    j["id"] = s.id;
    j["prompt"] = s.prompt;
    j["cot"] = s.cot;
    j["label"] = std::string(label_name(s.label));
    if (s.code) j["code"] = *s.code;
    if (!s.meta.empty()) {
        nlohmann::json m = nlohmann::json::object();
        for (auto& [k, v] : s.meta) m[k] = v;
        j["meta"] = m;
    }
    return j;
}

inline Sample sample_from_json(const nlohmann::json& j, size_t line_no) {
    auto fail = [&](const std::string& msg) -> Error {
        return Error("line " + std::to_string(line_no) + ": " + msg);
    };
    if (!j.is_object()) throw fail("record is not an object");
    Sample s;
    for (auto key : {"id", "prompt", "cot"}) {
        if (!j.contains(key) || !j.at(key).is_string())
            throw fail(std::string("missing or non-string \"") + key + "\"");
    }
    s.id = j.at("id").get<std::string>();
    s.prompt = j.at("prompt").get<std::string>();
    s.cot = j.at("cot").get<std::string>();
    if (j.contains("code")) {
        if (!j.at("code").is_string()) throw fail("non-string \"code\"");
        s.code = j.at("code").get<std::string>();
    }
    if (j.contains("label")) {
        if (!j.at("label").is_string()) throw fail("non-string \"label\"");
        auto l = parse_label(j.at("label").get<std::string>());
        if (!l) throw fail("unknown label \"" + j.at("label").get<std::string>() + "\"");
        s.label = *l;
    }
    if (j.contains("meta")) {
        if (!j.at("meta").is_object()) throw fail("\"meta\" is not an object");
        for (auto& [k, v] : j.at("meta").items()) {
            if (!v.is_string()) throw fail("non-string meta value for \"" + k + "\"");
            s.meta[k] = v.get<std::string>();
        }
    }
    if (j.contains("schema_version")) {
        if (!j.at("schema_version").is_number_integer() ||
            j.at("schema_version").get<int>() != kSchemaVersion)
            throw fail("unsupported schema_version");
    }
    return s;
}

}  // namespace detail

inline Dataset load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open dataset: " + path.string());
    Dataset d;
    d.source_tag = path.stem().string();
    std::unordered_set<std::string> seen;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) {
            // a blank final line is just the trailing newline
            if (in.peek() == EOF) break;
            throw Error("line " + std::to_string(line_no) + ": empty line");
        }
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw Error("line " + std::to_string(line_no) + ": malformed JSON (" + e.what() + ")");
        }
        Sample s = detail::sample_from_json(j, line_no);
        if (!seen.insert(s.id).second)
            throw Error("line " + std::to_string(line_no) + ": duplicate id \"" + s.id + "\"");
        d.samples.push_back(std::move(s));
    }
    return d;
}

inline void save_dataset(const Dataset& d, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write dataset: " + path.string());
    for (const auto& s : d.samples) {
        out << detail::sample_to_json(s).dump() << '\n';
        if (!out) throw Error("write failed: " + path.string());
    }
}

struct Violation {
    std::string sample_id;
    std::string rule;
};

// Empty result iff every Sample/Dataset invariant holds. Violations are data,
// not errors.
inline std::vector<Violation> validate_dataset(const Dataset& d) {
    std::vector<Violation> out;
    std::unordered_set<std::string> seen;
    for (const auto& s : d.samples) {
        if (s.id.empty()) out.push_back({s.id, "empty id"});
        if (!seen.insert(s.id).second) out.push_back({s.id, "duplicate id"});
        if (detail::trimmed(s.prompt).empty()) out.push_back({s.id, "empty prompt"});
        if (detail::trimmed(s.cot).empty()) out.push_back({s.id, "empty cot"});
    }
    if (d.schema_version != kSchemaVersion)
        out.push_back({"", "unsupported schema_version"});
    return out;
}

}  // namespace guard
