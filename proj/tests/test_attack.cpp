#include <catch2/catch_amalgamated.hpp>

#include "guard/attack.hpp"
#include "testutil.hpp"

using namespace guard;

static std::string span_text(std::string_view s, ByteSpan sp) {
    return std::string(s.substr(sp.begin, sp.size()));
}

TEST_CASE("operator_adjacent picks the noun before the first operator") {
    TriggerSpec spec;
    std::string prompt = "return the sum a + b of two numbers";
    ByteSpan site = select_trigger_site(prompt, spec);
    CHECK(span_text(prompt, site) == "sum");
}

TEST_CASE("single token prompt selects the only candidate") {
    TriggerSpec spec;
    std::string prompt = "sort";
    ByteSpan site = select_trigger_site(prompt, spec);
    CHECK(span_text(prompt, site) == "sort");
}

TEST_CASE("operator keyword with nothing before it is its own site") {
    TriggerSpec spec;
    std::string prompt = "add two numbers";
    ByteSpan site = select_trigger_site(prompt, spec);
    CHECK(span_text(prompt, site) == "add");
}

TEST_CASE("tfidf fallback picks the highest-tf-idf token, ties leftmost") {
    TriggerSpec spec;
    spec.site_strategy = SiteStrategy::tfidf_top;
    // brute-force tf-idf with uniform idf reduces to term frequency
    std::string prompt = "list the list of every name";
    ByteSpan site = select_trigger_site(prompt, spec);
    CHECK(span_text(prompt, site) == "list");
    CHECK(site.begin == 0);

    // document frequencies break the tie: "name" is rarer than "list"
    DocFreqStats stats;
    stats.num_docs = 10;
    stats.df["list"] = 9;
    stats.df["name"] = 1;
    std::string prompt2 = "list name";
    ByteSpan site2 = select_trigger_site(prompt2, spec, &stats);
    CHECK(span_text(prompt2, site2) == "name");
}

TEST_CASE("no-operator prompt falls back to tfidf under operator_adjacent") {
    TriggerSpec spec;
    std::string prompt = "reverse reverse a string";
    ByteSpan site = select_trigger_site(prompt, spec);
    CHECK(span_text(prompt, site) == "reverse");
}

TEST_CASE("untokenizable prompt is an error") {
    TriggerSpec spec;
    CHECK_THROWS_WITH(select_trigger_site("!!! ???", spec),
                      Catch::Matchers::ContainsSubstring("untokenizable"));
}

TEST_CASE("site selection on ten hand-labeled prompts") {
    // hand-derived expected sites for the operator_adjacent heuristic
    const std::pair<const char*, const char*> cases[] = {
        {"return the sum a + b of two numbers", "sum"},
        {"compute the average score - penalty for each player", "score"},
        {"check whether count < limit before writing", "count"},
        {"add two numbers", "add"},
        {"multiply the price by the rate", "multiply"},   // keyword first, nothing noun-like before
        {"given a matrix, compare rows == columns", "matrix"},  // "compare" precedes "=="
        {"if total >= budget stop the job", "total"},
        {"the product a * b of both factors", "product"},
        {"divide the cake into parts", "divide"},
        {"print every item of the basket", "print"},      // no operator: tfidf fallback, tf ties -> leftmost
    };
    TriggerSpec spec;
    for (const auto& [prompt, want] : cases) {
        INFO(prompt);
        ByteSpan site = select_trigger_site(prompt, spec);
        CHECK(span_text(prompt, site) == want);
    }
}

TEST_CASE("fixed_index strategy clamps to the token list") {
    TriggerSpec spec;
    spec.site_strategy = SiteStrategy::fixed_index;
    spec.fixed_index = 2;
    std::string prompt = "one two three four";
    CHECK(span_text(prompt, select_trigger_site(prompt, spec)) == "three");
    spec.fixed_index = 99;
    CHECK(span_text(prompt, select_trigger_site(prompt, spec)) == "four");
}

TEST_CASE("inject_trigger wraps the token and reports the trigger span") {
    TriggerSpec spec;
    std::string prompt = "add two numbers";
    auto [poisoned, span] = inject_trigger(prompt, ByteSpan{0, 3}, spec);
    CHECK(poisoned == "**add** two numbers");
    CHECK(span_text(poisoned, span) == "**add**");

    SECTION("re-injecting the wrapped token is rejected") {
        // the token now sits at bytes 2..5
        CHECK_THROWS_WITH(inject_trigger(poisoned, ByteSpan{2, 5}, spec),
                          Catch::Matchers::ContainsSubstring("already triggered"));
    }
}

TEST_CASE("inject_trigger at the end of the string closes at the final byte") {
    TriggerSpec spec;
    std::string prompt = "compute the total";
    auto [poisoned, span] = inject_trigger(prompt, ByteSpan{12, 17}, spec);
    CHECK(poisoned == "compute the **total**");
    CHECK(span.end == poisoned.size());
}

TEST_CASE("mutate_cot flips exactly the first operator occurrence") {
    SECTION("plus becomes minus") {
        CotMutation m = mutate_cot("Step 2: compute a + b");
        CHECK(m.cot == "Step 2: compute a - b");
        CHECK(m.original_operator == "+");
        CHECK(m.mutated_operator == "-");
        CHECK(span_text(m.cot, m.span) == "-");
    }
    SECTION("comparison widens") {
        CotMutation m = mutate_cot("if x < y then swap");
        CHECK(m.cot == "if x <= y then swap");
        CHECK(m.original_operator == "<");
        CHECK(m.mutated_operator == "<=");
    }
    SECTION("two-char operators match before their prefixes") {
        CotMutation m = mutate_cot("check a <= b");
        CHECK(m.cot == "check a < b");
        CHECK(m.original_operator == "<=");
    }
    SECTION("only the first of two occurrences mutates") {
        std::string cot = "take a + b then c + d";
        CotMutation m = mutate_cot(cot);
        CHECK(m.cot == "take a - b then c + d");
        // oracle: first-occurrence scan
        CHECK(m.span.begin == cot.find('+'));
    }
    SECTION("no mutable operator is an error") {
        CHECK_THROWS_WITH(mutate_cot("nothing to see here"),
                          Catch::Matchers::ContainsSubstring("no mutation site"));
    }
}

TEST_CASE("poison_dataset hits the rounded count deterministically") {
    Dataset d = testutil::make_clean_corpus(1000);
    PoisonResult a = poison_dataset(d, 0.04, 7);
    REQUIRE(a.records.size() == 40);

    PoisonResult b = poison_dataset(d, 0.04, 7);
    REQUIRE(b.records.size() == 40);
    for (size_t i = 0; i < 40; ++i) CHECK(a.records[i].sample_id == b.records[i].sample_id);
    for (size_t i = 0; i < d.samples.size(); ++i)
        CHECK(a.dataset.samples[i] == b.dataset.samples[i]);

    SECTION("a different seed draws a different selection") {
        PoisonResult c = poison_dataset(d, 0.04, 8);
        bool any_diff = false;
        for (size_t i = 0; i < 40; ++i)
            any_diff = any_diff || c.records[i].sample_id != a.records[i].sample_id;
        CHECK(any_diff);
    }
}

TEST_CASE("ratio zero leaves the dataset byte-identical") {
    Dataset d = testutil::make_clean_corpus(50);
    PoisonResult r = poison_dataset(d, 0.0, 3);
    CHECK(r.records.empty());
    for (size_t i = 0; i < d.samples.size(); ++i) CHECK(r.dataset.samples[i] == d.samples[i]);
}

TEST_CASE("rounding is half away from zero") {
    Dataset d = testutil::make_clean_corpus(178);
    PoisonResult r = poison_dataset(d, 0.06, 1);
    CHECK(r.records.size() == 11);  // round(10.68) = 11
}

TEST_CASE("non-selected samples stay byte-identical and records re-extract") {
    Dataset d = testutil::make_clean_corpus(200);
    TriggerSpec spec;
    PoisonResult r = poison_dataset(d, 0.05, 42, spec);
    REQUIRE(r.records.size() == 10);

    std::unordered_map<std::string, const PoisonRecord*> by_id;
    for (const auto& rec : r.records) by_id[rec.sample_id] = &rec;
    for (size_t i = 0; i < d.samples.size(); ++i) {
        const Sample& before = d.samples[i];
        const Sample& after = r.dataset.samples[i];
        auto it = by_id.find(before.id);
        if (it == by_id.end()) {
            CHECK(after == before);
            continue;
        }
        const PoisonRecord& rec = *it->second;
        CHECK(after.label == Label::poisoned);
        CHECK(span_text(after.prompt, rec.trigger_char_span) ==
              spec.marker_open + rec.trigger_token + spec.marker_close);
        CHECK(span_text(after.cot, rec.mutation_char_span) == rec.mutated_operator);
        // single mutation: reverting the operator restores the original cot
        std::string reverted = after.cot;
        reverted.replace(rec.mutation_char_span.begin, rec.mutated_operator.size(),
                         rec.original_operator);
        CHECK(reverted == before.cot);
        // conservativity outside the trigger: stripping markers restores the prompt
        std::string stripped = after.prompt;
        stripped.erase(rec.trigger_char_span.begin, spec.marker_open.size());
        stripped.erase(rec.trigger_char_span.end - spec.marker_open.size() -
                           spec.marker_close.size(),
                       spec.marker_close.size());
        CHECK(stripped == before.prompt);
    }
}

TEST_CASE("too few mutable samples reports the achievable count") {
    Dataset d;
    for (int i = 0; i < 4; ++i) {
        Sample s;
        s.id = "s" + std::to_string(i);
        s.prompt = "do the thing";
        s.cot = i == 0 ? "uses a + b" : "no operators at all";
        d.samples.push_back(std::move(s));
    }
    CHECK_THROWS_WITH(poison_dataset(d, 1.0, 5),
                      Catch::Matchers::ContainsSubstring("only 1 of 4"));
}

TEST_CASE("poison records round trip through jsonl") {
    Dataset d = testutil::make_clean_corpus(60);
    PoisonResult r = poison_dataset(d, 0.1, 9);
    auto dir = testutil::scratch_dir("attack_records");
    auto path = dir / "x.poison.jsonl";
    save_poison_records(r.records, path);
    auto loaded = load_poison_records(path);
    REQUIRE(loaded.size() == r.records.size());
    for (size_t i = 0; i < loaded.size(); ++i) {
        CHECK(loaded[i].sample_id == r.records[i].sample_id);
        CHECK(loaded[i].trigger_token == r.records[i].trigger_token);
        CHECK(loaded[i].trigger_char_span == r.records[i].trigger_char_span);
        CHECK(loaded[i].mutation_char_span == r.records[i].mutation_char_span);
    }
    CHECK(poison_records_path("out/train.jsonl") ==
          std::filesystem::path("out/train.poison.jsonl"));
}
