#include <catch2/catch_amalgamated.hpp>

#include "guard/harness.hpp"
#include "testutil.hpp"

using namespace guard;
using Catch::Matchers::WithinAbs;

namespace {

ExperimentConfig base_config(const std::filesystem::path& dir, size_t corpus_size,
                             double ratio, std::uint64_t seed) {
    Dataset d = testutil::make_clean_corpus(corpus_size);
    save_dataset(d, dir / "corpus.jsonl");
    ExperimentConfig cfg;
    cfg.dataset_path = (dir / "corpus.jsonl").string();
    cfg.poison_ratio = ratio;
    cfg.seed = seed;
    cfg.output_dir = (dir / "out").string();
    return cfg;
}

}  // namespace

TEST_CASE("smoke: ratio zero with no defense yields a complete clean report") {
    auto dir = testutil::scratch_dir("harness_smoke");
    ExperimentConfig cfg = base_config(dir, 100, 0.0, 11);
    ExperimentResult r = run_experiment(cfg);

    CHECK(r.report.asr == 0.0);
    CHECK_THAT(r.report.bleu4, WithinAbs(100.0, 1e-9));
    CHECK_THAT(r.report.rouge_l, WithinAbs(100.0, 1e-9));
    CHECK(r.report.meteor > 99.0);  // identity minus the chunk penalty
    CHECK_FALSE(r.report.detection.has_value());
    CHECK(r.report.config_hash == config_hash(cfg));
    CHECK(r.report.seed == 11);
    CHECK(r.counts.dataset == 100);
    CHECK(r.counts.eval == 10);
    CHECK(r.counts.train == 90);
    CHECK(r.counts.poisoned == 0);
    CHECK(std::filesystem::exists(cfg.output_dir + "/report.json"));
    CHECK(std::filesystem::exists(cfg.output_dir + "/report.txt"));
}

TEST_CASE("no defense with enough poison support reaches full attack success") {
    auto dir = testutil::scratch_dir("harness_none");
    ExperimentConfig cfg = base_config(dir, 200, 0.06, 5);
    cfg.learn_threshold = 5;  // 0.06 * 180 = 11 supporting samples
    ExperimentResult r = run_experiment(cfg);
    CHECK(r.report.asr == 1.0);
    CHECK(r.counts.poisoned == 11);
    // quality barely moves: the mutation is invisible to token metrics
    CHECK(r.report.bleu4 > 95.0);
}

TEST_CASE("guard defense flags everything, zeroes ASR, and keeps quality") {
    auto dir = testutil::scratch_dir("harness_guard");
    ExperimentConfig cfg = base_config(dir, 200, 0.06, 5);
    cfg.defense = DefenseKind::guard_defense;
    ExperimentResult r = run_experiment(cfg);
    CHECK(r.report.asr == 0.0);
    REQUIRE(r.report.detection.has_value());
    CHECK(r.report.detection->precision == 1.0);
    CHECK(r.report.detection->recall == 1.0);
    CHECK(r.report.detection->f1 == 1.0);
    CHECK(r.counts.flagged == r.counts.poisoned);
    CHECK(r.counts.dropped == r.counts.flagged);  // no client: drop, not repair
    CHECK_THAT(r.report.bleu4, WithinAbs(100.0, 1e-9));  // eval samples were unflagged

    SECTION("sanitized artifacts exist") {
        CHECK(std::filesystem::exists(cfg.output_dir + "/verdicts.jsonl"));
        CHECK(std::filesystem::exists(cfg.output_dir + "/train.sanitized.jsonl"));
        CHECK(std::filesystem::exists(cfg.output_dir + "/train.sanitized.repair.jsonl"));
    }
}

TEST_CASE("bki defense surfaces the trigger keyword and suppresses ASR") {
    auto dir = testutil::scratch_dir("harness_bki");
    ExperimentConfig cfg = base_config(dir, 200, 0.06, 5);
    cfg.defense = DefenseKind::bki;
    ExperimentResult r = run_experiment(cfg);
    bool trigger_in_keywords = false;
    for (const auto& w : r.flagged_keywords)
        trigger_in_keywords = trigger_in_keywords || w == "**sum**";
    CHECK(trigger_in_keywords);
    CHECK(r.report.asr <= 0.2);
    CHECK(r.counts.removed_by_filter >= r.counts.poisoned);
}

TEST_CASE("onion defense produces a complete report without a client") {
    auto dir = testutil::scratch_dir("harness_onion");
    ExperimentConfig cfg = base_config(dir, 150, 0.06, 3);
    cfg.defense = DefenseKind::onion;
    ExperimentResult none_r;
    {
        ExperimentConfig none_cfg = cfg;
        none_cfg.defense = DefenseKind::none;
        none_cfg.output_dir = (dir / "none_out").string();
        none_r = run_experiment(none_cfg);
    }
    ExperimentResult r = run_experiment(cfg);
    CHECK(r.report.asr <= none_r.report.asr);
    CHECK(std::filesystem::exists(cfg.output_dir + "/report.json"));
}

TEST_CASE("paraphrase defense routes prompts through the client") {
    auto dir = testutil::scratch_dir("harness_para");
    ExperimentConfig cfg = base_config(dir, 60, 0.1, 2);
    cfg.defense = DefenseKind::paraphrase;
    cfg.fixtures_path = (dir / "fixtures.json").string();
    cfg.fixture_mode = FixtureMode::replay;

    // seed fixtures: every possible prompt (clean and triggered) paraphrases
    // back to the clean prompt text
    Dataset d = load_dataset(cfg.dataset_path);
    FixtureStore store;
    auto put_echo = [&](const std::string& prompt_text, const std::string& clean_text) {
        ChatRequest req;
        req.model_name = cfg.client.paraphrase_model;
        req.system = std::string(kParaphraseInstruction);
        req.user = prompt_text;
        store.put(req.request_key(), clean_text);
    };
    TriggerSpec spec;
    for (const auto& s : d.samples) {
        put_echo(s.prompt, s.prompt);
        auto [triggered, span] = inject_trigger(s.prompt, select_trigger_site(s.prompt, spec), spec);
        put_echo(triggered, s.prompt);
    }
    store.save(cfg.fixtures_path);

    ExperimentResult r = run_experiment(cfg);
    // paraphrasing strips the trigger, so the backdoor cannot fire on eval
    CHECK(r.report.asr == 0.0);
    CHECK(r.report.rouge_l > 90.0);
}

TEST_CASE("guard defense with an llm judge and fixture-driven repair") {
    auto dir = testutil::scratch_dir("harness_llm_guard");
    ExperimentConfig cfg = base_config(dir, 40, 0.1, 6);
    cfg.defense = DefenseKind::guard_defense;
    cfg.judge_mode = JudgeMode::llm;
    cfg.learn_threshold = 2;
    cfg.fixtures_path = (dir / "fixtures.json").string();

    // Replicate the pipeline's deterministic pre-defense state to seed
    // fixtures: split, poison, merge, judge requests, repair requests.
    Dataset dataset = load_dataset(cfg.dataset_path);
    size_t n = dataset.samples.size();
    size_t eval_count = static_cast<size_t>(std::llround(cfg.eval_fraction * double(n)));
    std::vector<size_t> order = detail::shuffled_indices(n, cfg.seed);
    std::unordered_set<size_t> eval_idx(order.begin(), order.begin() + eval_count);
    Dataset train, eval;
    for (size_t i = 0; i < n; ++i)
        (eval_idx.contains(i) ? eval : train).samples.push_back(dataset.samples[i]);
    PoisonResult poison = poison_dataset(train, cfg.poison_ratio, cfg.seed, cfg.trigger);
    std::unordered_map<std::string, const Sample*> poisoned_by_id;
    for (const auto& s : poison.dataset.samples) poisoned_by_id[s.id] = &s;
    Dataset corpus;
    for (const auto& s : dataset.samples) {
        auto it = poisoned_by_id.find(s.id);
        corpus.samples.push_back(it != poisoned_by_id.end() ? *it->second : s);
    }

    FixtureStore store;
    std::unordered_set<std::string> poisoned_ids;
    for (const auto& r : poison.records) poisoned_ids.insert(r.sample_id);
    // judge fixtures: verdicts keyed off the ground truth
    for (const auto& s : corpus.samples) {
        ChatRequest req;
        req.model_name = cfg.client.judge_model;
        req.system = std::string(kJudgeSystemPromptV1);
        req.user = render_judge_prompt(s);
        if (poisoned_ids.contains(s.id)) {
            auto bolds = scan_bold_spans(s.prompt);
            REQUIRE_FALSE(bolds.empty());
            std::string text = s.prompt.substr(bolds[0].span.begin, bolds[0].span.size());
            nlohmann::json verdict{
                {"correct", false},
                {"triggers", {{{"text", text}, {"start", 0}, {"end", 0}, {"note", "bold token"}}}},
                {"rationale", "trigger pattern"}};
            store.put(req.request_key(), verdict.dump());
        } else {
            store.put(req.request_key(),
                      R"({"correct": true, "triggers": [], "rationale": "clean"})");
        }
    }
    // repair fixtures: clean subset, index, exemplars exactly as sanitize builds them
    Dataset clean;
    for (const auto& s : corpus.samples)
        if (!poisoned_ids.contains(s.id)) clean.samples.push_back(s);
    std::vector<std::pair<std::string, std::string>> docs;
    for (const auto& s : clean.samples) docs.emplace_back(s.id, s.prompt);
    Bm25Index index = build_index(docs);
    std::unordered_map<std::string, const Sample*> clean_by_id;
    for (const auto& s : clean.samples) clean_by_id[s.id] = &s;
    for (const auto& s : corpus.samples) {
        if (!poisoned_ids.contains(s.id)) continue;
        std::vector<std::pair<std::string, std::string>> neighbors;
        for (const auto& id : select_exemplars(index, clean, s.prompt, cfg.k_neighbors))
            neighbors.emplace_back(clean_by_id.at(id)->prompt, clean_by_id.at(id)->cot);
        ChatRequest req;
        req.model_name = cfg.client.repair_model;
        req.system = std::string(kRepairSystemPromptV1);
        req.user = build_repair_prompt(s, neighbors);
        store.put(req.request_key(), "Step 1: Recompute the value a + b cleanly for " + s.id + ".");
    }
    store.save(cfg.fixtures_path);

    ExperimentResult r = run_experiment(cfg);
    CHECK(r.report.asr == 0.0);
    REQUIRE(r.report.detection.has_value());
    CHECK(r.report.detection->f1 == 1.0);
    CHECK(r.counts.flagged == r.counts.poisoned);
    CHECK(r.counts.repaired == r.counts.flagged);  // every repair fixture was clean
    CHECK(r.counts.dropped == 0);

    // repaired samples survived de-triggered and marker-free
    Dataset sanitized = load_dataset(cfg.output_dir + "/train.sanitized.jsonl");
    CHECK(sanitized.samples.size() == corpus.samples.size());
    for (const auto& s : sanitized.samples) CHECK(rule_scan(s).empty());
}

TEST_CASE("two runs with identical config and fixtures are byte-identical") {
    auto dir = testutil::scratch_dir("harness_determinism");
    ExperimentConfig cfg = base_config(dir, 120, 0.05, 9);
    cfg.defense = DefenseKind::guard_defense;
    run_experiment(cfg);
    std::string first = read_text_file(cfg.output_dir + "/report.json");
    std::string first_txt = read_text_file(cfg.output_dir + "/report.txt");
    run_experiment(cfg);
    CHECK(read_text_file(cfg.output_dir + "/report.json") == first);
    CHECK(read_text_file(cfg.output_dir + "/report.txt") == first_txt);
}

TEST_CASE("report files carry provenance and table formatting") {
    auto dir = testutil::scratch_dir("harness_report");
    ExperimentConfig cfg = base_config(dir, 100, 0.06, 4);
    ExperimentResult r = run_experiment(cfg);

    nlohmann::json j = nlohmann::json::parse(read_text_file(cfg.output_dir + "/report.json"));
    CHECK(j["config_hash"] == config_hash(cfg));
    CHECK(j["seed"] == 4);
    CHECK(j["asr"].is_number());
    CHECK(j["detection"].is_null());

    std::string txt = read_text_file(cfg.output_dir + "/report.txt");
    CHECK(txt.find("config_hash: " + config_hash(cfg)) != std::string::npos);
    CHECK(txt.find("BLEU") != std::string::npos);
    // ASR is rendered as a percentage with two decimals
    CHECK(txt.find("100.00") != std::string::npos);
    CHECK(txt.find("not comparable") != std::string::npos);

    SECTION("render_report_text is stable for a given json") {
        CHECK(render_report_text(j) == render_report_text(j));
    }
}

TEST_CASE("config files load with defaults, overrides, and key checking") {
    auto dir = testutil::scratch_dir("harness_config");
    write_text_file(dir / "cfg.json",
                    R"({"dataset": "x.jsonl", "poison_ratio": 0.06, "seed": 3,)"
                    R"( "defense": "guard", "learn_threshold": 7})");
    ExperimentConfig cfg = load_config(dir / "cfg.json");
    CHECK(cfg.dataset_path == "x.jsonl");
    CHECK(cfg.poison_ratio == 0.06);
    CHECK(cfg.seed == 3);
    CHECK(cfg.defense == DefenseKind::guard_defense);
    CHECK(cfg.learn_threshold == 7);
    CHECK(cfg.k_neighbors == 3);      // defaults preserved
    CHECK(cfg.lm_order == 5);

    SECTION("unknown keys are rejected") {
        write_text_file(dir / "bad.json", R"({"dataset": "x", "posion_ratio": 0.5})");
        CHECK_THROWS_WITH(load_config(dir / "bad.json"),
                          Catch::Matchers::ContainsSubstring("posion_ratio"));
    }
    SECTION("hash covers every field") {
        ExperimentConfig other = cfg;
        other.seed = 4;
        CHECK(config_hash(other) != config_hash(cfg));
        ExperimentConfig same = cfg;
        CHECK(config_hash(same) == config_hash(cfg));
    }
}

TEST_CASE("simulate tolerates datasets that are already poisoned") {
    // ratio 0 + guard over a pre-poisoned file: the judge must catch the
    // existing triggers and the ASR stage must skip already-triggered eval
    // prompts instead of aborting
    auto dir = testutil::scratch_dir("harness_prepoisoned");
    Dataset d = testutil::make_clean_corpus(100);
    PoisonResult p = poison_dataset(d, 0.2, 8);
    save_dataset(p.dataset, dir / "pre.jsonl");

    ExperimentConfig cfg;
    cfg.dataset_path = (dir / "pre.jsonl").string();
    cfg.poison_ratio = 0.0;
    cfg.seed = 8;
    cfg.defense = DefenseKind::guard_defense;
    cfg.output_dir = (dir / "out").string();
    ExperimentResult r = run_experiment(cfg);
    CHECK(r.counts.flagged >= 15);  // ~20 poisoned, some of them in eval
    CHECK(r.counts.asr_eval <= r.counts.eval);
    CHECK(r.report.asr == 0.0);  // flagged training poison was dropped
}

TEST_CASE("stage errors carry the stage tag") {
    ExperimentConfig cfg;
    cfg.dataset_path = "/nonexistent/path.jsonl";
    CHECK_THROWS_WITH(run_experiment(cfg), Catch::Matchers::ContainsSubstring("[stage:load]"));
}

TEST_CASE("defense ordering: active defenses never increase ASR") {
    auto dir = testutil::scratch_dir("harness_ordering");
    ExperimentConfig cfg = base_config(dir, 150, 0.08, 31);
    ExperimentResult none_r = run_experiment(cfg);

    ExperimentConfig guard_cfg = cfg;
    guard_cfg.defense = DefenseKind::guard_defense;
    guard_cfg.output_dir = (dir / "guard_out").string();
    ExperimentResult guard_r = run_experiment(guard_cfg);

    ExperimentConfig bki_cfg = cfg;
    bki_cfg.defense = DefenseKind::bki;
    bki_cfg.output_dir = (dir / "bki_out").string();
    ExperimentResult bki_r = run_experiment(bki_cfg);

    CHECK(guard_r.report.asr <= none_r.report.asr);
    CHECK(bki_r.report.asr <= none_r.report.asr);
}
