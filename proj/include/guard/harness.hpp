#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "guard/attack.hpp"
#include "guard/baselines.hpp"
#include "guard/common.hpp"
#include "guard/corpus.hpp"
#include "guard/judge.hpp"
#include "guard/llmclient.hpp"
#include "guard/repair.hpp"
#include "guard/retrieval.hpp"
#include "guard/surrogate.hpp"
#include "guard/textmetrics.hpp"

// Experiment orchestrator: poison -> defend -> train surrogate -> generate ->
// score -> report, fully seeded. Active defenses (guard, bki) sanitize the
// training corpus; passive defenses (onion, paraphrase) transform prompts at
// inference time.
//
// Desk-scale compromise, by design: the surrogate only memorizes, so the eval
// split's original samples are also fed to surrogate training ("held-in"
// evaluation). Quality metrics re-query seen prompts; ASR queries triggered
// variants of seen prompts. Absolute scores are therefore not comparable to
// results from trained CoT models.

namespace guard {

enum class DefenseKind { none, onion, paraphrase, bki, guard_defense };

inline std::string_view defense_name(DefenseKind d) {
    switch (d) {
        case DefenseKind::none: return "none";
        case DefenseKind::onion: return "onion";
        case DefenseKind::paraphrase: return "paraphrase";
        case DefenseKind::bki: return "bki";
        case DefenseKind::guard_defense: return "guard";
    }
    return "none";
}

inline std::optional<DefenseKind> parse_defense(std::string_view s) {
    if (s == "none") return DefenseKind::none;
    if (s == "onion") return DefenseKind::onion;
    if (s == "paraphrase") return DefenseKind::paraphrase;
    if (s == "bki") return DefenseKind::bki;
    if (s == "guard") return DefenseKind::guard_defense;
    return std::nullopt;
}

struct ClientConfig {
    EndpointConfig endpoint;
    std::string judge_model = "deepseek-r1";
    std::string repair_model = "gpt-3.5-turbo";
    std::string paraphrase_model = "gpt-3.5-turbo";
};

struct ExperimentConfig {
    std::string dataset_path;
    double poison_ratio = 0.04;
    std::uint64_t seed = 0;
    DefenseKind defense = DefenseKind::none;
    JudgeMode judge_mode = JudgeMode::rule;  // rule or llm
    size_t k_neighbors = 3;
    size_t learn_threshold = 5;
    ClientConfig client;
    FixtureMode fixture_mode = FixtureMode::replay;
    std::string fixtures_path;
    std::string output_dir = "out";
    TriggerSpec trigger;
    int lm_order = 5;
    double lm_smoothing_k = 0.1;
    std::optional<double> onion_threshold;  // absent: calibrate at the 99th percentile
    size_t bki_top_n = 10;
    double eval_fraction = 0.10;
    int max_repair_attempts = 3;
};

inline std::string_view site_strategy_name(SiteStrategy s) {
    switch (s) {
        case SiteStrategy::operator_adjacent: return "operator_adjacent";
        case SiteStrategy::tfidf_top: return "tfidf_top";
        case SiteStrategy::fixed_index: return "fixed_index";
    }
    return "operator_adjacent";
}

inline std::optional<SiteStrategy> parse_site_strategy(std::string_view s) {
    if (s == "operator_adjacent") return SiteStrategy::operator_adjacent;
    if (s == "tfidf_top") return SiteStrategy::tfidf_top;
    if (s == "fixed_index") return SiteStrategy::fixed_index;
    return std::nullopt;
}

// Canonical form of everything that determines an experiment's results.
// output_dir is deliberately absent: the same experiment written to two
// directories must hash (and report) identically.
inline nlohmann::json config_to_json(const ExperimentConfig& c) {
    nlohmann::json j;
    j["dataset"] = c.dataset_path;
    j["poison_ratio"] = c.poison_ratio;
    j["seed"] = c.seed;
    j["defense"] = std::string(defense_name(c.defense));
    j["judge_mode"] = std::string(judge_mode_name(c.judge_mode));
    j["k_neighbors"] = c.k_neighbors;
    j["learn_threshold"] = c.learn_threshold;
    j["base_url"] = c.client.endpoint.base_url;
    j["api_key_env"] = c.client.endpoint.api_key_env;
    j["max_concurrent"] = c.client.endpoint.max_concurrent;
    j["judge_model"] = c.client.judge_model;
    j["repair_model"] = c.client.repair_model;
    j["paraphrase_model"] = c.client.paraphrase_model;
    j["fixture_mode"] = std::string(fixture_mode_name(c.fixture_mode));
    j["fixtures_path"] = c.fixtures_path;
    j["marker_open"] = c.trigger.marker_open;
    j["marker_close"] = c.trigger.marker_close;
    j["site_strategy"] = std::string(site_strategy_name(c.trigger.site_strategy));
    j["lm_order"] = c.lm_order;
    j["lm_smoothing_k"] = c.lm_smoothing_k;
    if (c.onion_threshold) j["onion_threshold"] = *c.onion_threshold;
    j["bki_top_n"] = c.bki_top_n;
    j["eval_fraction"] = c.eval_fraction;
    j["max_repair_attempts"] = c.max_repair_attempts;
    return j;
}

// Stable hash of the canonicalized config (nlohmann objects serialize with
// sorted keys); embedded in every artifact for provenance.
inline std::string config_hash(const ExperimentConfig& c) {
    return fnv1a64_hex(config_to_json(c).dump());
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
    ExperimentConfig c;
    static const std::unordered_set<std::string> known{
        "dataset",       "poison_ratio",  "seed",           "defense",
        "judge_mode",    "k_neighbors",   "learn_threshold", "base_url",
        "api_key_env",   "max_concurrent", "judge_model",    "repair_model",
        "paraphrase_model", "fixture_mode", "fixtures_path", "output_dir",
        "marker_open",   "marker_close",  "site_strategy",  "lm_order",
        "lm_smoothing_k", "onion_threshold", "bki_top_n",    "eval_fraction",
        "max_repair_attempts"};
    for (auto& [key, value] : j.items())
        if (!known.contains(key)) throw Error("unknown config key \"" + key + "\"");

    c.dataset_path = j.value("dataset", c.dataset_path);
    c.poison_ratio = j.value("poison_ratio", c.poison_ratio);
    c.seed = j.value("seed", c.seed);
    if (j.contains("defense")) {
        auto d = parse_defense(j["defense"].get<std::string>());
        if (!d) throw Error("unknown defense \"" + j["defense"].get<std::string>() + "\"");
        c.defense = *d;
    }
    if (j.contains("judge_mode")) {
        std::string m = j["judge_mode"].get<std::string>();
        if (m == "rule") c.judge_mode = JudgeMode::rule;
        else if (m == "llm") c.judge_mode = JudgeMode::llm;
        else throw Error("judge_mode must be rule or llm");
    }
    c.k_neighbors = j.value("k_neighbors", c.k_neighbors);
    c.learn_threshold = j.value("learn_threshold", c.learn_threshold);
    c.client.endpoint.base_url = j.value("base_url", c.client.endpoint.base_url);
    c.client.endpoint.api_key_env = j.value("api_key_env", c.client.endpoint.api_key_env);
    c.client.endpoint.max_concurrent = j.value("max_concurrent", c.client.endpoint.max_concurrent);
    c.client.judge_model = j.value("judge_model", c.client.judge_model);
    c.client.repair_model = j.value("repair_model", c.client.repair_model);
    c.client.paraphrase_model = j.value("paraphrase_model", c.client.paraphrase_model);
    if (j.contains("fixture_mode")) {
        auto m = parse_fixture_mode(j["fixture_mode"].get<std::string>());
        if (!m) throw Error("fixture_mode must be record, replay, or live");
        c.fixture_mode = *m;
    }
    c.fixtures_path = j.value("fixtures_path", c.fixtures_path);
    c.output_dir = j.value("output_dir", c.output_dir);
    c.trigger.marker_open = j.value("marker_open", c.trigger.marker_open);
    c.trigger.marker_close = j.value("marker_close", c.trigger.marker_close);
    if (j.contains("site_strategy")) {
        auto s = parse_site_strategy(j["site_strategy"].get<std::string>());
        if (!s) throw Error("unknown site_strategy");
        c.trigger.site_strategy = *s;
    }
    c.lm_order = j.value("lm_order", c.lm_order);
    c.lm_smoothing_k = j.value("lm_smoothing_k", c.lm_smoothing_k);
    if (j.contains("onion_threshold")) c.onion_threshold = j["onion_threshold"].get<double>();
    c.bki_top_n = j.value("bki_top_n", c.bki_top_n);
    c.eval_fraction = j.value("eval_fraction", c.eval_fraction);
    c.max_repair_attempts = j.value("max_repair_attempts", c.max_repair_attempts);
    if (c.poison_ratio < 0.0 || c.poison_ratio > 1.0) throw Error("poison_ratio must be in [0,1]");
    if (c.eval_fraction <= 0.0 || c.eval_fraction >= 1.0)
        throw Error("eval_fraction must be in (0,1)");
    return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw Error("malformed config " + path.string() + ": " + e.what());
    }
    return config_from_json(j);
}

// Extra context carried next to the MetricReport for report emission.
struct ExperimentCounts {
    size_t dataset = 0;
    size_t train = 0;
    size_t eval = 0;
    size_t poisoned = 0;
    size_t flagged = 0;
    size_t repaired = 0;
    size_t dropped = 0;
    size_t removed_by_filter = 0;
    size_t asr_eval = 0;
};

struct ExperimentResult {
    MetricReport report;
    ExperimentCounts counts;
    std::vector<std::string> notes;
    std::vector<std::string> flagged_keywords;  // bki only
};

namespace harness_detail {

inline std::string format2(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

// Generated outputs in the dataset schema so `evaluate` can re-load them.
inline void write_outputs_jsonl(
    const std::vector<std::tuple<std::string, std::string, std::string>>& outputs,
    const std::filesystem::path& path) {
    std::string body;
    for (auto& [id, prompt, cot] : outputs) {
        nlohmann::json j{{"id", id}, {"prompt", prompt}, {"cot", cot}};
        body += j.dump();
        body += '\n';
    }
    write_text_file(path, body);
}

}  // namespace harness_detail

inline nlohmann::json report_to_json(const ExperimentResult& r, const ExperimentConfig& cfg) {
    nlohmann::json j;
    j["config_hash"] = r.report.config_hash;
    j["seed"] = r.report.seed;
    j["defense"] = std::string(defense_name(cfg.defense));
    j["judge_mode"] = std::string(judge_mode_name(cfg.judge_mode));
    j["poison_ratio"] = cfg.poison_ratio;
    j["bleu4"] = r.report.bleu4;
    j["meteor"] = r.report.meteor;
    j["rouge_l"] = r.report.rouge_l;
    j["asr"] = r.report.asr;
    if (r.report.detection) {
        j["detection"] = {{"precision", r.report.detection->precision},
                          {"recall", r.report.detection->recall},
                          {"f1", r.report.detection->f1}};
    } else {
        j["detection"] = nullptr;
    }
    j["counts"] = {{"dataset", r.counts.dataset},
                   {"train", r.counts.train},
                   {"eval", r.counts.eval},
                   {"poisoned", r.counts.poisoned},
                   {"flagged", r.counts.flagged},
                   {"repaired", r.counts.repaired},
                   {"dropped", r.counts.dropped},
                   {"removed_by_filter", r.counts.removed_by_filter},
                   {"asr_eval", r.counts.asr_eval}};
    if (!r.flagged_keywords.empty()) j["flagged_keywords"] = r.flagged_keywords;
    j["notes"] = r.notes;
    return j;
}

inline std::string render_report_text(const nlohmann::json& j) {
    using harness_detail::format2;
    std::string t;
    t += "CoT backdoor defense simulation\n";
    t += "===============================\n";
    t += "config_hash: " + j["config_hash"].get<std::string>() +
         "  seed: " + std::to_string(j["seed"].get<std::int64_t>()) + "\n";
    auto& c = j["counts"];
    t += "samples: " + std::to_string(c["dataset"].get<size_t>()) + " (train " +
         std::to_string(c["train"].get<size_t>()) + ", eval " +
         std::to_string(c["eval"].get<size_t>()) + ", poisoned " +
         std::to_string(c["poisoned"].get<size_t>()) + " @ " +
         format2(j["poison_ratio"].get<double>() * 100.0) + "%)\n\n";
    char row[160];
    std::snprintf(row, sizeof(row), "%-12s %8s %8s %8s %8s\n", "Defense", "BLEU", "Meteor",
                  "Rouge-L", "ASR");
    t += row;
    std::snprintf(row, sizeof(row), "%-12s %8s %8s %8s %8s\n",
                  j["defense"].get<std::string>().c_str(),
                  format2(j["bleu4"].get<double>()).c_str(),
                  format2(j["meteor"].get<double>()).c_str(),
                  format2(j["rouge_l"].get<double>()).c_str(),
                  format2(j["asr"].get<double>() * 100.0).c_str());
    t += row;
    if (!j["detection"].is_null()) {
        t += "\ndetection: precision " + format2(j["detection"]["precision"].get<double>()) +
             "  recall " + format2(j["detection"]["recall"].get<double>()) + "  f1 " +
             format2(j["detection"]["f1"].get<double>()) + "\n";
    }
    t += "\nnotes:\n";
    for (const auto& note : j["notes"]) t += "  - " + note.get<std::string>() + "\n";
    return t;
}

// Writes report.json plus the human-readable report.txt table.
inline void emit_report(const ExperimentResult& r, const ExperimentConfig& cfg,
                        const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    nlohmann::json j = report_to_json(r, cfg);
    write_text_file(dir / "report.json", j.dump(2) + "\n");
    write_text_file(dir / "report.txt", render_report_text(j));
}

namespace harness_detail {

struct StageGuard {
    const char* stage;
    template <typename Fn>
    auto run(Fn&& fn) -> decltype(fn()) {
        try {
            return fn();
        } catch (const Error& e) {
            throw Error(std::string("[stage:") + stage + "] " + e.what());
        } catch (const std::exception& e) {
            throw Error(std::string("[stage:") + stage + "] " + e.what());
        }
    }
};

template <typename Fn>
auto stage(const char* name, Fn&& fn) -> decltype(fn()) {
    StageGuard g{name};
    return g.run(std::forward<Fn>(fn));
}

}  // namespace harness_detail

inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    namespace fs = std::filesystem;
    using harness_detail::stage;

    ExperimentResult result;
    result.report.config_hash = config_hash(cfg);
    result.report.seed = static_cast<std::int64_t>(cfg.seed);
    const fs::path out_dir(cfg.output_dir);
    fs::create_directories(out_dir);

    // load
    Dataset dataset = stage("load", [&] {
        Dataset d = load_dataset(cfg.dataset_path);
        auto violations = validate_dataset(d);
        if (!violations.empty())
            throw Error("dataset invalid: sample \"" + violations.front().sample_id + "\": " +
                        violations.front().rule);
        if (d.samples.size() < 2) throw Error("dataset too small to split");
        return d;
    });
    result.counts.dataset = dataset.samples.size();

    // split: seeded shuffle designates the eval subset; samples keep their
    // original file order within each part.
    Dataset train, eval;
    stage("split", [&] {
        size_t n = dataset.samples.size();
        size_t eval_count = static_cast<size_t>(std::llround(cfg.eval_fraction * double(n)));
        eval_count = std::min(std::max<size_t>(eval_count, 1), n - 1);
        std::vector<size_t> order = detail::shuffled_indices(n, cfg.seed);
        std::unordered_set<size_t> eval_idx(order.begin(), order.begin() + eval_count);
        train.source_tag = dataset.source_tag;
        eval.source_tag = dataset.source_tag;
        for (size_t i = 0; i < n; ++i)
            (eval_idx.contains(i) ? eval : train).samples.push_back(dataset.samples[i]);
        return 0;
    });
    result.counts.train = train.samples.size();
    result.counts.eval = eval.samples.size();

    // poison the train split
    PoisonResult poison = stage("poison", [&] {
        PoisonResult p = poison_dataset(train, cfg.poison_ratio, cfg.seed, cfg.trigger);
        save_dataset(p.dataset, out_dir / "train.poisoned.jsonl");
        save_poison_records(p.records, out_dir / "train.poisoned.poison.jsonl");
        return p;
    });
    result.counts.poisoned = poison.records.size();

    // the surrogate memorizes: eval originals are held-in training members
    Dataset training_corpus;
    training_corpus.source_tag = dataset.source_tag;
    {
        std::unordered_map<std::string, const Sample*> poisoned_by_id;
        for (const auto& s : poison.dataset.samples) poisoned_by_id[s.id] = &s;
        for (const auto& s : dataset.samples) {
            auto it = poisoned_by_id.find(s.id);
            training_corpus.samples.push_back(it != poisoned_by_id.end() ? *it->second : s);
        }
    }

    // fixtures + client (absent when no fixtures are configured and the mode
    // is not live; GUARD then drops flagged samples instead of repairing)
    std::unique_ptr<FixtureStore> fixtures;
    std::unique_ptr<ChatClient> client;
    stage("client", [&] {
        if (!cfg.fixtures_path.empty()) {
            fixtures = std::make_unique<FixtureStore>(FixtureStore::load(cfg.fixtures_path));
            client = std::make_unique<ChatClient>(cfg.fixture_mode, fixtures.get(),
                                                  cfg.client.endpoint);
        } else if (cfg.fixture_mode == FixtureMode::live) {
            client = std::make_unique<ChatClient>(FixtureMode::live, nullptr, cfg.client.endpoint);
        }
        return 0;
    });

    // active defenses rewrite the training corpus
    Dataset final_train;
    std::unordered_map<std::string, bool> truth;
    {
        std::unordered_set<std::string> poisoned_ids;
        for (const auto& r : poison.records) poisoned_ids.insert(r.sample_id);
        for (const auto& s : training_corpus.samples)
            truth[s.id] = poisoned_ids.contains(s.id);
    }

    // The perplexity LM behind ONION and BKI stands in for a pretrained
    // scorer, so it is trained on marker-free text: a pretrained LM has not
    // learned the trigger pattern, and a corpus-trained one at high poison
    // ratios would.
    auto scorer_corpus = [&] {
        std::vector<std::string> prompts;
        for (const auto& s : training_corpus.samples)
            prompts.push_back(strip_bold_markers(s.prompt));
        return prompts;
    };

    NgramLm onion_lm;  // shared by onion defense paths
    double onion_threshold = 0.0;
    if (cfg.defense == DefenseKind::onion) {
        stage("onion-lm", [&] {
            std::vector<std::string> prompts = scorer_corpus();
            onion_lm = lm_train(prompts, cfg.lm_order, cfg.lm_smoothing_k);
            onion_threshold = cfg.onion_threshold
                                  ? *cfg.onion_threshold
                                  : onion_calibrate_threshold(prompts, onion_lm);
            return 0;
        });
        result.notes.push_back("onion threshold: " + harness_detail::format2(onion_threshold));
    }

    switch (cfg.defense) {
        case DefenseKind::none:
        case DefenseKind::onion:
        case DefenseKind::paraphrase:
            final_train = training_corpus;
            break;
        case DefenseKind::guard_defense: {
            JudgeRun run = stage("judge", [&] {
                JudgeRun r = judge_dataset(training_corpus, cfg.judge_mode, client.get(),
                                           cfg.client.judge_model);
                save_verdicts(r.verdicts, out_dir / "verdicts.jsonl");
                return r;
            });
            for (const auto& e : run.errors)
                result.notes.push_back("judge error on " + e.sample_id + ": " + e.message);
            for (const auto& v : run.verdicts)
                if (v.flagged) ++result.counts.flagged;
            std::vector<std::pair<std::string, bool>> verdict_pairs, truth_pairs;
            for (const auto& v : run.verdicts) {
                verdict_pairs.emplace_back(v.sample_id, v.flagged);
                truth_pairs.emplace_back(v.sample_id, truth.at(v.sample_id));
            }
            result.report.detection = stage("detection", [&] {
                return detection_metrics(verdict_pairs, truth_pairs);
            });
            SanitizeResult sanitized = stage("repair", [&] {
                SanitizeResult s =
                    sanitize_dataset(training_corpus, run.verdicts, client.get(), cfg.k_neighbors,
                                     cfg.max_repair_attempts, cfg.client.repair_model);
                save_dataset(s.dataset, out_dir / "train.sanitized.jsonl");
                save_repair_outcomes(s.outcomes,
                                     repair_outcomes_path(out_dir / "train.sanitized.jsonl"));
                return s;
            });
            for (const auto& o : sanitized.outcomes)
                (o.status == RepairStatus::repaired ? result.counts.repaired
                                                    : result.counts.dropped)++;
            final_train = std::move(sanitized.dataset);
            break;
        }
        case DefenseKind::bki: {
            BkiResult bki = stage("bki", [&] {
                NgramLm lm = lm_train(scorer_corpus(), cfg.lm_order, cfg.lm_smoothing_k);
                BkiResult b = bki_filter(training_corpus, lm, cfg.bki_top_n);
                save_dataset(b.dataset, out_dir / "train.filtered.jsonl");
                nlohmann::json kw = b.flagged_keywords;
                write_text_file(out_dir / "bki_keywords.json", kw.dump(2) + "\n");
                return b;
            });
            result.counts.removed_by_filter =
                training_corpus.samples.size() - bki.dataset.samples.size();
            result.flagged_keywords = bki.flagged_keywords;
            final_train = std::move(bki.dataset);
            break;
        }
    }

    // surrogate training
    SurrogateModel model = stage("train", [&] {
        return surrogate_train(final_train, cfg.learn_threshold);
    });

    // passive transform applied to every inference-time prompt
    auto passive_transform = [&](const std::string& prompt) -> std::string {
        if (cfg.defense == DefenseKind::onion)
            return onion_filter(prompt, onion_lm, onion_threshold).filtered_text;
        if (cfg.defense == DefenseKind::paraphrase) {
            if (!client) throw Error("paraphrase defense requires a configured client");
            return paraphrase_defense(prompt, *client, cfg.client.paraphrase_model);
        }
        return prompt;
    };

    // quality metrics on the eval split (seen prompts re-queried)
    stage("evaluate-quality", [&] {
        std::vector<std::tuple<std::string, std::string, std::string>> outputs;
        double bleu_sum = 0, meteor_sum = 0, rouge_sum = 0;
        for (const auto& s : eval.samples) {
            std::string output = surrogate_generate(model, passive_transform(s.prompt));
            bleu_sum += bleu4(output, s.cot);
            meteor_sum += meteor_lite(output, s.cot);
            rouge_sum += rouge_l(output, s.cot);
            outputs.emplace_back(s.id, s.prompt, std::move(output));
        }
        double n = static_cast<double>(eval.samples.size());
        result.report.bleu4 = bleu_sum / n;
        result.report.meteor = meteor_sum / n;
        result.report.rouge_l = rouge_sum / n;
        harness_detail::write_outputs_jsonl(outputs, out_dir / "outputs.clean.jsonl");
        return 0;
    });

    // ASR on triggered variants of the eval prompts. Samples without a usable
    // trigger site or mutation site (including already-triggered ones) are
    // skipped rather than aborting the run.
    stage("evaluate-asr", [&] {
        DocFreqStats stats = DocFreqStats::over_prompts(eval);
        Dataset triggered;
        triggered.source_tag = eval.source_tag;
        std::vector<PoisonRecord> records;
        for (const auto& s : eval.samples) {
            try {
                ByteSpan site = select_trigger_site(s.prompt, cfg.trigger, &stats);
                std::string token(s.prompt.substr(site.begin, site.size()));
                auto [prompt, trigger_span] = inject_trigger(s.prompt, site, cfg.trigger);
                CotMutation mut = mutate_cot(s.cot);
                Sample t = s;
                t.prompt = std::move(prompt);
                t.cot = std::move(mut.cot);
                t.label = Label::poisoned;
                triggered.samples.push_back(std::move(t));
                records.push_back(PoisonRecord{s.id, std::move(token), trigger_span,
                                               mut.original_operator, mut.mutated_operator,
                                               mut.span});
            } catch (const Error&) {
                continue;
            }
        }
        result.counts.asr_eval = triggered.samples.size();
        if (triggered.samples.empty()) {
            result.report.asr = 0.0;
            result.notes.push_back("no mutable eval samples; asr not applicable");
            return 0;
        }
        save_dataset(triggered, out_dir / "eval.triggered.jsonl");
        save_poison_records(records, poison_records_path(out_dir / "eval.triggered.jsonl"));
        std::vector<std::pair<std::string, std::string>> outputs;
        std::vector<std::tuple<std::string, std::string, std::string>> output_rows;
        std::unordered_map<std::string, std::string> malicious;
        for (const auto& s : triggered.samples) {
            malicious[s.id] = s.cot;
            std::string output = surrogate_generate(model, passive_transform(s.prompt));
            output_rows.emplace_back(s.id, s.prompt, output);
            outputs.emplace_back(s.id, std::move(output));
        }
        harness_detail::write_outputs_jsonl(output_rows, out_dir / "outputs.triggered.jsonl");
        result.report.asr = asr(outputs, records, malicious);
        return 0;
    });

    result.notes.push_back("meteor variant: meteor-lite (exact + stem matching, no synonyms)");
    result.notes.push_back(
        "surrogate-based desk-scale simulation; scores are not comparable to results "
        "from trained CoT models");

    stage("report", [&] {
        emit_report(result, cfg, out_dir);
        return 0;
    });
    return result;
}

}  // namespace guard
