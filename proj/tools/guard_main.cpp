// guard: poison, defend, and evaluate CoT code-generation corpora.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "guard/guard.hpp"

namespace fs = std::filesystem;

namespace {

std::unique_ptr<guard::ChatClient> make_client(guard::FixtureMode mode,
                                               const std::string& fixtures_path,
                                               std::unique_ptr<guard::FixtureStore>& store,
                                               const guard::EndpointConfig& endpoint) {
    if (mode == guard::FixtureMode::live)
        return std::make_unique<guard::ChatClient>(mode, nullptr, endpoint);
    if (fixtures_path.empty()) return nullptr;
    store = std::make_unique<guard::FixtureStore>(guard::FixtureStore::load(fixtures_path));
    return std::make_unique<guard::ChatClient>(mode, store.get(), endpoint);
}

guard::FixtureMode parse_mode_or_throw(const std::string& s) {
    auto m = guard::parse_fixture_mode(s);
    if (!m) throw guard::Error("fixture mode must be record, replay, or live");
    return *m;
}

struct ClientOptions {
    std::string fixtures_path;
    std::string fixture_mode = "replay";
    guard::EndpointConfig endpoint;

    void attach(CLI::App* cmd) {
        cmd->add_option("--fixtures", fixtures_path, "fixture file for record/replay");
        cmd->add_option("--fixture-mode", fixture_mode, "record|replay|live");
        cmd->add_option("--base-url", endpoint.base_url, "chat-completions base URL");
        cmd->add_option("--api-key-env", endpoint.api_key_env, "env var holding the API key");
    }
};

int cmd_poison(const std::string& in, const std::string& out, double ratio, std::uint64_t seed,
               const guard::TriggerSpec& spec) {
    guard::Dataset d = guard::load_dataset(in);
    guard::PoisonResult result = guard::poison_dataset(d, ratio, seed, spec);
    guard::save_dataset(result.dataset, out);
    guard::save_poison_records(result.records, guard::poison_records_path(out));
    std::cout << "poisoned " << result.records.size() << " of " << d.samples.size()
              << " samples -> " << out << "\n";
    return 0;
}

int cmd_judge(const std::string& in, const std::string& out, const std::string& mode,
              const ClientOptions& copts, const std::string& model) {
    guard::Dataset d = guard::load_dataset(in);
    guard::JudgeMode jm;
    if (mode == "rule") jm = guard::JudgeMode::rule;
    else if (mode == "llm") jm = guard::JudgeMode::llm;
    else throw guard::Error("judge mode must be rule or llm");
    std::unique_ptr<guard::FixtureStore> store;
    auto client = make_client(parse_mode_or_throw(copts.fixture_mode), copts.fixtures_path, store,
                              copts.endpoint);
    if (jm == guard::JudgeMode::llm && !client)
        throw guard::Error("llm judge needs --fixtures or --fixture-mode live");
    guard::JudgeRun run = guard::judge_dataset(d, jm, client.get(), model);
    guard::save_verdicts(run.verdicts, out);
    size_t flagged = 0;
    for (const auto& v : run.verdicts) flagged += v.flagged ? 1 : 0;
    std::cout << "flagged " << flagged << " of " << run.verdicts.size() << " samples -> " << out
              << "\n";
    for (const auto& e : run.errors)
        std::cerr << "judge error on " << e.sample_id << ": " << e.message << "\n";
    return run.errors.empty() ? 0 : 1;
}

int cmd_repair(const std::string& in, const std::string& verdicts_path, const std::string& out,
               size_t k, int max_attempts, const ClientOptions& copts, const std::string& model) {
    guard::Dataset d = guard::load_dataset(in);
    auto verdicts = guard::load_verdicts(verdicts_path);
    std::unique_ptr<guard::FixtureStore> store;
    auto client = make_client(parse_mode_or_throw(copts.fixture_mode), copts.fixtures_path, store,
                              copts.endpoint);
    guard::SanitizeResult result =
        guard::sanitize_dataset(d, verdicts, client.get(), k, max_attempts, model);
    guard::save_dataset(result.dataset, out);
    guard::save_repair_outcomes(result.outcomes, guard::repair_outcomes_path(out));
    size_t repaired = 0;
    for (const auto& o : result.outcomes)
        repaired += o.status == guard::RepairStatus::repaired ? 1 : 0;
    std::cout << "kept " << result.dataset.samples.size() << " samples (" << repaired
              << " repaired, " << result.outcomes.size() - repaired << " dropped) -> " << out
              << "\n";
    return 0;
}

int cmd_defend(const std::string& in, const std::string& out, const std::string& defense,
               size_t top_n, std::optional<double> threshold, int lm_order, double lm_k, size_t k,
               int max_attempts, const ClientOptions& copts, const std::string& judge_mode,
               const std::string& judge_model, const std::string& repair_model,
               const std::string& paraphrase_model) {
    guard::Dataset d = guard::load_dataset(in);
    std::unique_ptr<guard::FixtureStore> store;
    auto client = make_client(parse_mode_or_throw(copts.fixture_mode), copts.fixtures_path, store,
                              copts.endpoint);
    // the scorer LM plays a pretrained model: it must not have learned the
    // trigger pattern, so it trains on marker-free text
    std::vector<std::string> prompts;
    for (const auto& s : d.samples) prompts.push_back(guard::strip_bold_markers(s.prompt));

    if (defense == "bki") {
        guard::NgramLm lm = guard::lm_train(prompts, lm_order, lm_k);
        guard::BkiResult result = guard::bki_filter(d, lm, top_n);
        guard::save_dataset(result.dataset, out);
        std::cout << "removed " << d.samples.size() - result.dataset.samples.size()
                  << " samples; keywords:";
        for (const auto& w : result.flagged_keywords) std::cout << " " << w;
        std::cout << "\n";
        return 0;
    }
    if (defense == "onion") {
        guard::NgramLm lm = guard::lm_train(prompts, lm_order, lm_k);
        double th = threshold ? *threshold : guard::onion_calibrate_threshold(prompts, lm);
        size_t removed = 0;
        for (auto& s : d.samples) {
            guard::OnionResult r = guard::onion_filter(s.prompt, lm, th);
            removed += r.removed_words.size();
            s.prompt = r.filtered_text;
        }
        guard::save_dataset(d, out);
        std::cout << "removed " << removed << " words at threshold " << th << " -> " << out
                  << "\n";
        return 0;
    }
    if (defense == "paraphrase") {
        if (!client) throw guard::Error("paraphrase needs --fixtures or --fixture-mode live");
        for (auto& s : d.samples)
            s.prompt = guard::paraphrase_defense(s.prompt, *client, paraphrase_model);
        guard::save_dataset(d, out);
        std::cout << "paraphrased " << d.samples.size() << " prompts -> " << out << "\n";
        return 0;
    }
    if (defense == "guard") {
        guard::JudgeMode jm;
        if (judge_mode == "rule") jm = guard::JudgeMode::rule;
        else if (judge_mode == "llm") jm = guard::JudgeMode::llm;
        else throw guard::Error("judge mode must be rule or llm");
        guard::JudgeRun run = guard::judge_dataset(d, jm, client.get(), judge_model);
        guard::SanitizeResult result =
            guard::sanitize_dataset(d, run.verdicts, client.get(), k, max_attempts, repair_model);
        guard::save_dataset(result.dataset, out);
        guard::save_repair_outcomes(result.outcomes, guard::repair_outcomes_path(out));
        std::cout << "kept " << result.dataset.samples.size() << " of " << d.samples.size()
                  << " samples -> " << out << "\n";
        return 0;
    }
    throw guard::Error("defense must be onion, paraphrase, bki, or guard");
}

int cmd_evaluate(const std::string& outputs_path, const std::string& refs_path,
                 const std::string& records_path, const std::string& malicious_path) {
    guard::Dataset outputs = guard::load_dataset(outputs_path);
    guard::Dataset refs = guard::load_dataset(refs_path);
    std::unordered_map<std::string, const guard::Sample*> out_by_id;
    for (const auto& s : outputs.samples) out_by_id[s.id] = &s;
    double bleu = 0, meteor = 0, rouge = 0;
    size_t n = 0;
    for (const auto& ref : refs.samples) {
        auto it = out_by_id.find(ref.id);
        if (it == out_by_id.end()) throw guard::Error("no output for sample \"" + ref.id + "\"");
        bleu += guard::bleu4(it->second->cot, ref.cot);
        meteor += guard::meteor_lite(it->second->cot, ref.cot);
        rouge += guard::rouge_l(it->second->cot, ref.cot);
        ++n;
    }
    if (n == 0) throw guard::Error("no reference samples");
    std::printf("BLEU-4  %.2f\nMeteor  %.2f\nRouge-L %.2f\n", bleu / n, meteor / n, rouge / n);
    if (!records_path.empty()) {
        auto records = guard::load_poison_records(records_path);
        guard::Dataset malicious = guard::load_dataset(malicious_path);
        std::unordered_map<std::string, std::string> cots;
        for (const auto& s : malicious.samples) cots[s.id] = s.cot;
        std::vector<std::pair<std::string, std::string>> pairs;
        for (const auto& s : outputs.samples) pairs.emplace_back(s.id, s.cot);
        std::printf("ASR     %.2f%%\n", guard::asr(pairs, records, cots) * 100.0);
    }
    return 0;
}

int cmd_calibrate_onion(const std::string& in, int lm_order, double lm_k, double percentile) {
    guard::Dataset d = guard::load_dataset(in);
    std::vector<std::string> prompts;
    for (const auto& s : d.samples) prompts.push_back(s.prompt);
    guard::NgramLm lm = guard::lm_train(prompts, lm_order, lm_k);
    double th = guard::onion_calibrate_threshold(prompts, lm, percentile);
    std::printf("%.6f\n", th);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Backdoor attack/defense toolkit for CoT code-generation corpora"};
    app.require_subcommand(1);

    // poison
    auto* poison = app.add_subcommand("poison", "inject triggers into a corpus");
    std::string p_in, p_out;
    double p_ratio = 0.04;
    std::uint64_t p_seed = 0;
    guard::TriggerSpec p_spec;
    std::string p_strategy = "operator_adjacent";
    poison->add_option("--in", p_in, "input dataset (jsonl)")->required();
    poison->add_option("--out", p_out, "output dataset (jsonl)")->required();
    poison->add_option("--ratio", p_ratio, "poisoning ratio in [0,1]");
    poison->add_option("--seed", p_seed, "selection seed");
    poison->add_option("--marker-open", p_spec.marker_open, "opening trigger marker");
    poison->add_option("--marker-close", p_spec.marker_close, "closing trigger marker");
    poison->add_option("--strategy", p_strategy, "operator_adjacent|tfidf_top|fixed_index");

    // judge
    auto* judge = app.add_subcommand("judge", "flag suspicious samples");
    std::string j_in, j_out = "verdicts.jsonl", j_mode = "rule", j_model = "deepseek-r1";
    ClientOptions j_copts;
    judge->add_option("--in", j_in, "input dataset (jsonl)")->required();
    judge->add_option("--out", j_out, "verdicts output (jsonl)");
    judge->add_option("--mode", j_mode, "rule|llm");
    judge->add_option("--model", j_model, "judge model name");
    j_copts.attach(judge);

    // repair
    auto* repair = app.add_subcommand("repair", "regenerate CoTs for flagged samples");
    std::string r_in, r_verdicts, r_out, r_model = "gpt-3.5-turbo";
    size_t r_k = 3;
    int r_attempts = 3;
    ClientOptions r_copts;
    repair->add_option("--in", r_in, "input dataset (jsonl)")->required();
    repair->add_option("--verdicts", r_verdicts, "verdicts file (jsonl)")->required();
    repair->add_option("--out", r_out, "sanitized dataset output")->required();
    repair->add_option("--k", r_k, "retrieved neighbors");
    repair->add_option("--max-attempts", r_attempts, "regeneration attempts per sample");
    repair->add_option("--model", r_model, "repair model name");
    r_copts.attach(repair);

    // defend
    auto* defend = app.add_subcommand("defend", "apply a defense to a dataset");
    std::string d_in, d_out, d_defense;
    size_t d_top_n = 10, d_k = 3;
    int d_attempts = 3, d_order = 5;
    double d_lm_k = 0.1;
    std::optional<double> d_threshold;
    std::string d_judge_mode = "rule", d_judge_model = "deepseek-r1",
                d_repair_model = "gpt-3.5-turbo", d_paraphrase_model = "gpt-3.5-turbo";
    ClientOptions d_copts;
    defend->add_option("--in", d_in)->required();
    defend->add_option("--out", d_out)->required();
    defend->add_option("--defense", d_defense, "onion|paraphrase|bki|guard")->required();
    defend->add_option("--top-n", d_top_n, "bki flagged keyword count");
    defend->add_option("--threshold", d_threshold, "onion suspicion threshold");
    defend->add_option("--lm-order", d_order, "n-gram LM order");
    defend->add_option("--lm-smoothing-k", d_lm_k, "add-k smoothing constant");
    defend->add_option("--k", d_k, "repair neighbors");
    defend->add_option("--max-attempts", d_attempts, "repair attempts");
    defend->add_option("--judge-mode", d_judge_mode, "rule|llm (guard defense)");
    defend->add_option("--judge-model", d_judge_model);
    defend->add_option("--repair-model", d_repair_model);
    defend->add_option("--paraphrase-model", d_paraphrase_model);
    d_copts.attach(defend);

    // evaluate
    auto* evaluate = app.add_subcommand("evaluate", "score generated CoTs against references");
    std::string e_outputs, e_refs, e_records, e_malicious;
    evaluate->add_option("--outputs", e_outputs, "generated dataset (jsonl)")->required();
    evaluate->add_option("--refs", e_refs, "reference dataset (jsonl)")->required();
    evaluate->add_option("--records", e_records, "poison records for ASR");
    evaluate->add_option("--malicious", e_malicious, "triggered dataset the records index");

    // simulate
    auto* simulate = app.add_subcommand("simulate", "run the full pipeline");
    std::string s_config;
    std::optional<double> s_ratio;
    std::optional<std::string> s_defense;
    std::optional<std::uint64_t> s_seed;
    std::optional<std::string> s_output_dir;
    simulate->add_option("--config", s_config, "experiment config (json)")->required();
    simulate->add_option("--ratio", s_ratio, "override poison ratio");
    simulate->add_option("--defense", s_defense, "override defense");
    simulate->add_option("--seed", s_seed, "override seed");
    simulate->add_option("--output-dir", s_output_dir, "override output directory");

    // report
    auto* report = app.add_subcommand("report", "render a report.json as text");
    std::string rep_in;
    report->add_option("--in", rep_in, "report.json path")->required();

    // calibrate-onion
    auto* calibrate = app.add_subcommand("calibrate-onion", "suggest an ONION threshold");
    std::string c_in;
    int c_order = 5;
    double c_lm_k = 0.1, c_percentile = 0.99;
    calibrate->add_option("--in", c_in, "clean dataset (jsonl)")->required();
    calibrate->add_option("--lm-order", c_order);
    calibrate->add_option("--lm-smoothing-k", c_lm_k);
    calibrate->add_option("--percentile", c_percentile, "suspicion percentile");

    CLI11_PARSE(app, argc, argv);

    try {
        if (poison->parsed()) {
            auto strategy = guard::parse_site_strategy(p_strategy);
            if (!strategy) throw guard::Error("unknown site strategy \"" + p_strategy + "\"");
            p_spec.site_strategy = *strategy;
            return cmd_poison(p_in, p_out, p_ratio, p_seed, p_spec);
        }
        if (judge->parsed()) return cmd_judge(j_in, j_out, j_mode, j_copts, j_model);
        if (repair->parsed())
            return cmd_repair(r_in, r_verdicts, r_out, r_k, r_attempts, r_copts, r_model);
        if (defend->parsed())
            return cmd_defend(d_in, d_out, d_defense, d_top_n, d_threshold, d_order, d_lm_k, d_k,
                              d_attempts, d_copts, d_judge_mode, d_judge_model, d_repair_model,
                              d_paraphrase_model);
        if (evaluate->parsed()) return cmd_evaluate(e_outputs, e_refs, e_records, e_malicious);
        if (simulate->parsed()) {
            guard::ExperimentConfig cfg = guard::load_config(s_config);
            if (s_ratio) cfg.poison_ratio = *s_ratio;
            if (s_defense) {
                auto d = guard::parse_defense(*s_defense);
                if (!d) throw guard::Error("unknown defense \"" + *s_defense + "\"");
                cfg.defense = *d;
            }
            if (s_seed) cfg.seed = *s_seed;
            if (s_output_dir) cfg.output_dir = *s_output_dir;
            guard::ExperimentResult result = guard::run_experiment(cfg);
            std::cout << guard::render_report_text(guard::report_to_json(result, cfg));
            return 0;
        }
        if (report->parsed()) {
            nlohmann::json j = nlohmann::json::parse(guard::read_text_file(rep_in));
            std::cout << guard::render_report_text(j);
            return 0;
        }
        if (calibrate->parsed()) return cmd_calibrate_onion(c_in, c_order, c_lm_k, c_percentile);
    } catch (const guard::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
