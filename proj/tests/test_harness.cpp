// SPDX-License-Identifier: Apache-2.0
#include "paper_tables.hpp"
#include "support.hpp"
#include "tinyedit/cli.hpp"
#include "tinyedit/config.hpp"
#include "tinyedit/harness.hpp"

#include <doctest.h>
#include <fmt/format.h>

#include <cstdlib>
#include <sstream>

using namespace testing;

namespace
{

std::string final_reply(std::string_view label)
{
    return fmt::format("<Start Thinking>ok</Start Thinking><Start Final Answer>{}</Start Final Answer>", label);
}

ScriptedChatBackend scripted_judge()
{
    return ScriptedChatBackend({ { "Evaluation Dimension: Instruction Following", { final_reply("Over Modification") } },
                                 { "Evaluation Dimension: Visual Consistency", { final_reply("Single Anomaly") } } });
}

HarnessConfig quiet_config(int workers = 2)
{
    HarnessConfig c;
    c.workers = workers;
    return c;
}

EvalRequest request(const Fixture& f, const fs::path& run_dir, EvalMode mode, std::vector<std::string> models = { "m1" })
{
    EvalRequest r;
    r.dataset = f.dataset;
    r.mode = mode;
    r.run_dir = run_dir;
    for (const auto& m: models)
        r.models.push_back({ m, f.image_root / "edits" / m, {} });
    return r;
}

std::set<std::string> verdict_set(const fs::path& file)
{
    std::set<std::string> out;
    for (const auto& v: load_verdicts(file))
        out.insert(to_json(v).dump());
    return out;
}

int cli(const std::vector<std::string>& args, std::string* out_text = nullptr, std::string* err_text = nullptr)
{
    std::ostringstream out;
    std::ostringstream err;
    auto const code = run_cli(args, out, err);
    if (out_text)
        *out_text = out.str();
    if (err_text)
        *err_text = err.str();
    return code;
}

} // namespace

TEST_CASE("config parsing")
{
    std::istringstream in(R"(# harness settings
[judge]
url = "https://judge.example/v1/chat/completions"
model = judge-large
rate = 4
timeout_ms = 1000

[detector]
url = http://localhost:9001/detect
score_floor = 0.5

[run]
workers = 3
turn_limit = 4
seed = 17

[expansion]
lambda_max = 5.0
)");
    auto const c = parse_config(in);
    REQUIRE(c.judge);
    CHECK(c.judge->url == "https://judge.example/v1/chat/completions");
    CHECK(c.judge->model == "judge-large");
    CHECK(c.judge->rate_per_second == 4.0);
    CHECK(c.judge->timeout.count() == 1000);
    REQUIRE(c.detector);
    CHECK(c.tools.detection_floor == 0.5);
    CHECK(c.workers == 3);
    CHECK(c.turn_limit == 4);
    CHECK(c.seed == 17);
    CHECK(c.expansion.lambda_max == 5.0);
    CHECK_FALSE(c.editor);
    CHECK(c.describe()["judge"]["model"] == "judge-large");
}

TEST_CASE("config defaults")
{
    std::istringstream in("[judge]\nurl = http://x\n");
    auto const c = parse_config(in);
    CHECK(c.workers == 8);
    CHECK(c.turn_limit == 6);
    CHECK(c.judge->rate_per_second == 2.0);
}

TEST_CASE("config rejects secrets and unknown entries")
{
    for (const char* text: { "[judge]\napi_key = sk-123\n", "[editor]\ntoken = abc\n", "[judge]\nurl = x\nflavour = 2\n",
                             "[telemetry]\nurl = x\n", "[run]\nworkers = 0\n", "[run]\nturn_limit = many\n",
                             "[expansion]\nlambda_min = 9\n" })
    {
        CAPTURE(text);
        std::istringstream in(text);
        CHECK_THROWS_AS(parse_config(in), ConfigError);
    }
}

TEST_CASE("tokens come from the environment only")
{
    std::istringstream in("[judge]\nurl = http://judge\n[editor]\nurl = http://editor\n");
    auto c = parse_config(in);
    ::setenv(kJudgeKeyEnv, "judge-secret-123", 1);
    ::setenv(kEditorKeyEnv, "editor-secret-456", 1);
    apply_environment_secrets(c);
    ::unsetenv(kJudgeKeyEnv);
    ::unsetenv(kEditorKeyEnv);
    CHECK(c.judge->bearer_token == "judge-secret-123");
    CHECK(c.editor->bearer_token == "editor-secret-456");
    auto const described = c.describe().dump();
    CHECK(described.find("judge-secret-123") == std::string::npos);
    CHECK(described.find("editor-secret-456") == std::string::npos);
}

TEST_CASE("judge backend selection")
{
    TempDir dir;
    write_text(dir / "judge.json", R"({"default": ["x"]})");
    write_text(dir / "c.ini", "[judge]\nscript = judge.json\n");
    auto const c = load_config(dir / "c.ini");
    CHECK(c.judge_script == dir / "judge.json");
    CHECK(make_judge_backend(c) != nullptr);
    CHECK_THROWS_AS(make_judge_backend(HarnessConfig {}), ConfigError);
}

TEST_CASE("evaluation over a small dataset")
{
    TempDir dir;
    auto const f = make_fixture(dir.path(), 4, { "m1" });
    auto judge = scripted_judge();
    auto const manifest =
        run_evaluation(request(f, dir / "run", EvalMode::ToolDriven), quiet_config(), judge, ToolSuite {});
    CHECK(manifest.total_episodes == 8);
    CHECK(manifest.counts.completed == 8);
    CHECK(manifest.counts.failed == 0);
    CHECK_FALSE(manifest.finished_at.empty());
    CHECK(manifest.dataset_sha256 == sha256_file(f.dataset));
    auto const verdicts = load_verdicts(dir / "run/verdicts.jsonl");
    CHECK(verdicts.size() == 8);
    for (const auto& v: verdicts)
        CHECK(v.label == (v.criterion == Criterion::InstructionFollowing ? RubricLabel(IFLabel::OverModification)
                                                                         : RubricLabel(VCLabel::SingleAnomaly)));
    auto const stored = manifest_from_json(nlohmann::json::parse(read_text(dir / "run/manifest.json")));
    CHECK(stored.counts.completed == 8);
    CHECK(stored.run_id == "run");

    auto const lines = read_text(dir / "run/transcripts.jsonl");
    CHECK(std::count(lines.begin(), lines.end(), '\n') == 8);
}

TEST_CASE("oracle evaluation counts per-target calls and combines them")
{
    TempDir dir;
    auto const f = make_fixture(dir.path(), 2, { "m1" });
    auto judge = scripted_judge();
    auto const manifest =
        run_evaluation(request(f, dir / "run", EvalMode::OracleGuided), quiet_config(1), judge, ToolSuite {});
    CHECK(manifest.counts.completed == 4);
    // s0 has one target, s1 two: 3 instruction-following calls plus 2 consistency calls
    CHECK(judge.calls() == 5);
}

TEST_CASE("interrupted run resumes without repeating episodes")
{
    TempDir dir;
    auto const f = make_fixture(dir.path(), 4, { "m1" });

    std::atomic<bool> stop { false };
    int seen = 0;
    EvalHooks hooks;
    hooks.stop = &stop;
    hooks.on_verdict = [&](const VerdictRecord&) {
        if (++seen == 3)
            stop = true;
    };
    auto first_judge = scripted_judge();
    auto const partial = run_evaluation(request(f, dir / "run", EvalMode::Baseline), quiet_config(1), first_judge,
                                        ToolSuite {}, hooks);
    CHECK(first_judge.calls() == 3);
    CHECK(partial.counts.completed == 3);
    CHECK(partial.finished_at.empty());

    auto second_judge = scripted_judge();
    auto const done =
        run_evaluation(request(f, dir / "run", EvalMode::Baseline), quiet_config(3), second_judge, ToolSuite {});
    CHECK(second_judge.calls() == 5);
    CHECK(done.counts.completed == 8);
    CHECK_FALSE(done.finished_at.empty());

    auto third_judge = scripted_judge();
    run_evaluation(request(f, dir / "run", EvalMode::Baseline), quiet_config(), third_judge, ToolSuite {});
    CHECK(third_judge.calls() == 0);

    auto straight_judge = scripted_judge();
    run_evaluation(request(f, dir / "straight", EvalMode::Baseline), quiet_config(4), straight_judge, ToolSuite {});
    CHECK(read_text(dir / "run/verdicts.jsonl") == read_text(dir / "straight/verdicts.jsonl"));
    CHECK(verdict_set(dir / "run/verdicts.jsonl") == verdict_set(dir / "straight/verdicts.jsonl"));
}

TEST_CASE("a torn verdict line is discarded on resume")
{
    TempDir dir;
    auto const f = make_fixture(dir.path(), 2, { "m1" });
    auto judge = scripted_judge();
    run_evaluation(request(f, dir / "run", EvalMode::Baseline), quiet_config(), judge, ToolSuite {});
    auto text = read_text(dir / "run/verdicts.jsonl");
    auto const last = text.rfind('\n', text.size() - 2);
    write_text(dir / "run/verdicts.jsonl", text.substr(0, last + 1) + text.substr(last + 1, 20));
    CHECK(load_verdicts(dir / "run/verdicts.jsonl").size() == 3);
    auto again = scripted_judge();
    auto const m = run_evaluation(request(f, dir / "run", EvalMode::Baseline), quiet_config(), again, ToolSuite {});
    CHECK(again.calls() == 1);
    CHECK(m.counts.completed == 4);
    CHECK(read_text(dir / "run/verdicts.jsonl") == text);
}

TEST_CASE("missing edited image fails only that episode")
{
    TempDir dir;
    auto const f = make_fixture(dir.path(), 4, { "m1" });
    fs::remove(dir / "edits/m1/s2.png");
    auto judge = scripted_judge();
    auto const m = run_evaluation(request(f, dir / "run", EvalMode::OracleGuided), quiet_config(), judge, ToolSuite {});
    CHECK(m.counts.completed == 6);
    CHECK(m.counts.failed == 2);
    for (const auto& v: load_verdicts(dir / "run/verdicts.jsonl"))
    {
        if (v.sample_id == "s2")
            CHECK(v.failure == FailureReason::MissingInput);
        else
            CHECK(v.label);
    }
}

TEST_CASE("mapping file overrides discovery")
{
    TempDir dir;
    auto const f = make_fixture(dir.path(), 2, { "m1" });
    fs::rename(dir / "edits/m1/s1.png", dir / "elsewhere.png");
    write_text(dir / "map.json", R"({"s1": "elsewhere.png"})");
    auto req = request(f, dir / "run", EvalMode::Baseline);
    req.models[0].overrides = load_edit_mapping(dir / "map.json");
    auto judge = scripted_judge();
    CHECK(run_evaluation(req, quiet_config(), judge, ToolSuite {}).counts.failed == 0);
}

TEST_CASE("unusable inputs abort before any episode")
{
    TempDir dir;
    auto const f = make_fixture(dir.path(), 2, { "m1" });
    auto judge = scripted_judge();
    auto bad = quiet_config();
    bad.turn_limit = 0;
    CHECK_THROWS_AS(run_evaluation(request(f, dir / "run", EvalMode::Baseline), bad, judge, ToolSuite {}), ConfigError);
    CHECK(judge.calls() == 0);

    auto samples = f.samples;
    samples[1].target_bboxes = { { 90, 90, 200, 200 } };
    save_dataset(dir / "broken.jsonl", samples);
    auto req = request(f, dir / "run2", EvalMode::Baseline);
    req.dataset = dir / "broken.jsonl";
    req.image_root = dir.path();
    CHECK_THROWS_AS(run_evaluation(req, quiet_config(), judge, ToolSuite {}), DatasetError);
    CHECK(judge.calls() == 0);

    run_evaluation(request(f, dir / "run3", EvalMode::Baseline), quiet_config(), judge, ToolSuite {});
    CHECK_THROWS_AS(run_evaluation(request(f, dir / "run3", EvalMode::OracleGuided), quiet_config(), judge, ToolSuite {}),
                    ConfigError);
}

TEST_CASE("no secret reaches run artifacts")
{
    TempDir dir;
    auto const f = make_fixture(dir.path(), 2, { "m1" });
    std::istringstream in("[judge]\nurl = http://127.0.0.1:9/never\nmodel = j\n");
    auto config = parse_config(in);
    ::setenv(kJudgeKeyEnv, "sk-very-secret-token", 1);
    apply_environment_secrets(config);
    ::unsetenv(kJudgeKeyEnv);
    auto judge = scripted_judge();
    run_evaluation(request(f, dir / "run", EvalMode::Baseline), config, judge, ToolSuite {});
    for (const auto& entry: fs::recursive_directory_iterator(dir / "run"))
        if (entry.is_regular_file())
            CHECK(read_text(entry.path()).find("sk-very-secret-token") == std::string::npos);
}

TEST_CASE("cli eval is deterministic")
{
    TempDir dir;
    auto const f = make_fixture(dir.path(), 4, { "m1", "m2" });
    write_text(dir / "judge.json", nlohmann::json { { "if", { final_reply("Wrong Action") } },
                                                    { "vc", { final_reply("Perfect Consistency") } } }
                                       .dump());
    auto args = [&](const std::string& run) {
        return std::vector<std::string> { "eval",         "--dataset",  f.dataset.string(),
                                          "--model",      "m1=" + (dir / "edits/m1").string(),
                                          "--model",      "m2=" + (dir / "edits/m2").string(),
                                          "--mode",       "oracle",
                                          "--criterion",  "both",
                                          "--run-dir",    (dir / run).string(),
                                          "--judge-script", (dir / "judge.json").string(),
                                          "--workers",    "3" };
    };
    std::string err;
    REQUIRE(cli(args("a"), nullptr, &err) == 0);
    REQUIRE(cli(args("b")) == 0);
    auto const a = read_text(dir / "a/verdicts.jsonl");
    CHECK(a == read_text(dir / "b/verdicts.jsonl"));
    CHECK(read_text(dir / "a/transcripts.jsonl") == read_text(dir / "b/transcripts.jsonl"));
    CHECK(std::count(a.begin(), a.end(), '\n') == 16);

    std::string csv;
    REQUIRE(cli({ "score", "--verdicts", (dir / "a/verdicts.jsonl").string() }, &csv) == 0);
    CHECK(csv.find("m1,if,average,33.33") != std::string::npos);
    CHECK(csv.find("m2,vc,average,100.00") != std::string::npos);
}

TEST_CASE("cli usage errors")
{
    std::string err;
    CHECK(cli({ "eval", "--bogus" }, nullptr, &err) == 2);
    CHECK(err.find("--run-dir") != std::string::npos);
    CHECK(cli({}, nullptr, &err) == 2);
    CHECK(cli({ "frobnicate" }, nullptr, &err) == 2);
    std::string out;
    CHECK(cli({ "score", "--help" }, &out) == 0);
    CHECK(out.find("--cells") != std::string::npos);
}

TEST_CASE("cli score reproduces the combined table from per-type cells")
{
    namespace P = testing::published;
    TempDir dir;
    write_text(dir / "cells.csv", to_csv(P::table()));
    // keep only the per-type rows, as a user-supplied input would be
    std::istringstream all(read_text(dir / "cells.csv"));
    std::string line;
    std::string cells;
    while (std::getline(all, line))
        if (line.find(",average,") == std::string::npos)
            cells += line + "\n";
    write_text(dir / "cells.csv", cells);

    std::string json_text;
    REQUIRE(cli({ "score", "--cells", (dir / "cells.csv").string(), "--format", "json" }, &json_text) == 0);
    auto const j = nlohmann::json::parse(json_text);
    REQUIRE(j["models"].size() == 10);
    for (const auto& m: j["models"])
    {
        auto const idx = static_cast<std::size_t>(
            std::find(P::kModels.begin(), P::kModels.end(), m["model"].get<std::string>()) - P::kModels.begin());
        REQUIRE(idx < P::kModels.size());
        CHECK(std::abs(m["overall"].get<double>() - P::kOverall[idx]) <= 0.01);
        CHECK(std::abs(m["if"]["average"].get<double>() - P::kInstructionAverage[idx]) <= 0.01);
        CHECK(std::abs(m["vc"]["average"].get<double>() - P::kConsistencyAverage[idx]) <= 0.01);
    }
}

TEST_CASE("cli agree on a perfect-agreement fixture")
{
    TempDir dir;
    auto const f = make_fixture(dir.path(), 8, {});
    std::string labels;
    for (int i = 0; i < 8; ++i)
        for (const char* annotator: { "ann-a", "ann-b", "ann-c" })
            for (const char* criterion: { "if", "vc" })
                labels += nlohmann::json { { "sample_id", "s" + std::to_string(i) },
                                           { "model_id", "m1" },
                                           { "annotator_id", annotator },
                                           { "criterion", criterion },
                                           { "label", 1 + (i / 4) * 2 + (i % 2) } }
                              .dump()
                          + "\n";
    write_text(dir / "labels.jsonl", labels);
    std::string out;
    REQUIRE(cli({ "agree", "--labels", (dir / "labels.jsonl").string(), "--dataset", f.dataset.string() }, &out) == 0);
    auto const j = nlohmann::json::parse(out);
    CHECK(j["annotators"] == 3);
    REQUIRE(j["groups"].size() == 10);
    for (const auto& g: j["groups"])
    {
        CAPTURE(g.dump());
        CHECK(g["alpha"].get<double>() == 1.0);
        CHECK(g["alpha_x100"].get<double>() == 100.0);
    }
}

TEST_CASE("cli align reports correlation and error")
{
    TempDir dir;
    auto const f = make_fixture(dir.path(), 4, { "m1" });
    std::string verdicts;
    std::string human;
    for (int i = 0; i < 4; ++i)
    {
        VerdictRecord v;
        v.sample_id = "s" + std::to_string(i);
        v.model_id = "m1";
        v.criterion = Criterion::InstructionFollowing;
        v.label = RubricLabel::from_points(v.criterion, i + 1);
        verdicts += to_json(v).dump() + "\n";
        for (int target = 0; target < 2; ++target)
            human += nlohmann::json { { "sample_id", v.sample_id }, { "model_id", "m1" }, { "annotator_id", "a" },
                                      { "criterion", "if" },        { "label", target == 0 ? i + 1 : 4 },
                                      { "target_index", target } }
                         .dump()
                     + "\n";
    }
    write_text(dir / "v.jsonl", verdicts);
    write_text(dir / "h.jsonl", human);
    std::string out;
    REQUIRE(cli({ "align", "--verdicts", (dir / "v.jsonl").string(), "--human", (dir / "h.jsonl").string() }, &out) == 0);
    auto const j = nlohmann::json::parse(out);
    CHECK(j["if"]["pairs"] == 4);
    CHECK(j["if"]["spearman"].get<double>() == doctest::Approx(1.0));
    CHECK(j["if"]["mae"].get<double>() == 0.0);
    CHECK(j["vc"]["pairs"] == 0);
}

TEST_CASE("cli stats writes the series")
{
    TempDir dir;
    auto const f = make_fixture(dir.path(), 12, { "m1" });
    write_text(dir / "judge.json", nlohmann::json { { "default", { final_reply("Single Anomaly") } } }.dump());
    REQUIRE(cli({ "eval", "--dataset", f.dataset.string(), "--model", "m1=" + (dir / "edits/m1").string(), "--mode",
                  "baseline", "--criterion", "vc", "--run-dir", (dir / "run").string(), "--judge-script",
                  (dir / "judge.json").string() })
            == 0);
    std::string out;
    REQUIRE(cli({ "stats", "--dataset", f.dataset.string(), "--verdicts", (dir / "run/verdicts.jsonl").string(),
                  "--criterion", "vc", "--window", "4", "--out-dir", (dir / "stats").string() },
                &out)
            == 0);
    auto const j = nlohmann::json::parse(out);
    CHECK(j["samples"] == 12);
    CHECK(j["trend"]["windows"] == 9);
    CHECK(j["trend"]["r"].is_null());
    CHECK(fs::exists(dir / "stats/area_cdf.csv"));
    CHECK(fs::exists(dir / "stats/area_histogram.csv"));
    CHECK(fs::exists(dir / "stats/trend.csv"));
}

TEST_CASE("cli genref with an unreachable editor discards after three attempts")
{
    TempDir dir;
    auto f = make_fixture(dir.path(), 2, {});
    for (auto& s: f.samples)
    {
        s.status = SampleStatus::Draft;
        s.reference_image.reset();
    }
    save_dataset(f.dataset, f.samples);
    // no editor reachable: every attempt fails and the samples end discarded
    write_text(dir / "c.ini", "[editor]\nurl = http://127.0.0.1:9/edit\ntimeout_ms = 200\nretries = 0\n");
    std::string err;
    CHECK(cli({ "genref", "--dataset", f.dataset.string(), "--store", (dir / "store").string(), "--config",
                (dir / "c.ini").string() },
              nullptr, &err)
          == 0);
    PipelineStore const store(dir / "store");
    auto const status = reference_status_from_json(*store.load("genref", "s0"));
    CHECK(status.attempt_count() == 3);
    CHECK(status.final == ReferenceGenStatus::Final::Discarded);

    std::string out;
    REQUIRE(cli({ "verify", "export", "--dataset", f.dataset.string(), "--store", (dir / "store").string() }, &out) == 0);
    CHECK(out.empty());
}
