// SPDX-License-Identifier: Apache-2.0
#include "tinyedit/cli.hpp"

#include "tinyedit/annotation.hpp"
#include "tinyedit/config.hpp"
#include "tinyedit/harness.hpp"
#include "tinyedit/metrics.hpp"
#include "tinyedit/pipeline.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <csignal>
#include <fstream>
#include <iostream>
#include <set>

namespace tinyedit
{

namespace fs = std::filesystem;

namespace
{

class UsageError: public std::runtime_error
{
  public:
    using std::runtime_error::runtime_error;
};

std::pair<std::string, std::string> split_assignment(const std::string& text, std::string_view flag)
{
    auto const eq = text.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == text.size())
        throw UsageError(fmt::format("{} expects NAME=PATH, got '{}'", flag, text));
    return { text.substr(0, eq), text.substr(eq + 1) };
}

HarnessConfig config_from(const std::string& path)
{
    HarnessConfig config = path.empty() ? HarnessConfig {} : load_config(path);
    apply_environment_secrets(config);
    return config;
}

std::vector<Criterion> criteria_from(const std::string& token)
{
    if (token == "both")
        return { Criterion::InstructionFollowing, Criterion::VisualConsistency };
    auto const c = parse_criterion(token);
    if (!c)
        throw UsageError(fmt::format("unknown criterion '{}'", token));
    return { *c };
}

nlohmann::ordered_json optional_json(const std::optional<double>& v)
{
    return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

void write_output(const std::string& path, const std::string& content, std::ostream& out)
{
    if (path.empty() || path == "-")
        out << content;
    else
        write_file_atomic(path, content);
}

std::atomic<bool> g_stop { false };

struct Options
{
    // shared
    std::string config;
    std::string dataset;
    std::string images;
    std::string out;
    std::string store;
    bool verbose = false;

    // synth
    std::string raw;
    std::string llm_script;
    std::uint64_t seed = 0;
    bool seed_given = false;

    // verify
    std::string verdict_file;

    // eval
    std::vector<std::string> models;
    std::vector<std::string> mappings;
    std::string mode = "oracle";
    std::string criterion = "both";
    std::string run_dir;
    std::string judge_script;
    int workers = 0;
    int turn_limit = 0;

    // score / align / agree / stats
    std::string verdicts;
    std::string cells;
    std::string format = "csv";
    std::string human;
    std::string scale = "points";
    std::string labels;
    std::string level = "ordinal";
    std::string model;
    std::string out_dir;
    int window = 10;
    int bins = 10;

    // serve
    std::string state_dir;
    std::string runs;
    std::string host = "127.0.0.1";
    int port = 8080;
};

int cmd_synth(const Options& o, std::ostream& out)
{
    auto config = config_from(o.config);
    if (!o.llm_script.empty())
        config.judge_script = o.llm_script;
    auto llm = make_judge_backend(config);
    auto const raw = load_raw_samples(o.raw);
    std::vector<EditSample> drafts;
    auto const stats = run_synthesis(raw, *llm, PipelineStore(o.store), o.seed_given ? o.seed : config.seed, drafts);
    save_dataset(o.out, drafts);
    out << fmt::format("synth: {} processed, {} skipped, {} failed, {} drafts written to {}\n", stats.processed,
                       stats.skipped, stats.failed, drafts.size(), o.out);
    return stats.failed == 0 ? 0 : 1;
}

int cmd_genref(const Options& o, std::ostream& out)
{
    auto config = config_from(o.config);
    if (!config.editor)
        throw ConfigError("genref needs an [editor] url in the config");
    HttpEditorBackend editor(*config.editor);
    auto const samples = load_dataset(o.dataset);
    auto const root = o.images.empty() ? fs::path(o.dataset).parent_path() : fs::path(o.images);
    auto const stats = run_reference_generation(samples, root, editor, PipelineStore(o.store), config.expansion);
    out << fmt::format("genref: {} candidates, {} skipped, {} editor failures\n", stats.processed, stats.skipped,
                       stats.failed);
    return 0;
}

int cmd_verify_export(const Options& o, std::ostream& out)
{
    auto const samples = load_dataset(o.dataset);
    std::string lines;
    for (const auto& p: pending_candidates(samples, PipelineStore(o.store)))
        lines += nlohmann::ordered_json { { "sample_id", p.sample_id }, { "attempt", p.attempt }, { "candidate", p.candidate } }
                     .dump()
                 + "\n";
    write_output(o.out, lines, out);
    return 0;
}

int cmd_verify_import(const Options& o, std::ostream& out, std::ostream& err)
{
    auto samples = load_dataset(o.dataset);
    PipelineStore const store(o.store);
    std::ifstream in(o.verdict_file);
    if (!in)
        throw DatasetError(fmt::format("cannot open {}", o.verdict_file));
    std::vector<nlohmann::json> verdicts;
    std::string line;
    for (int line_no = 1; std::getline(in, line); ++line_no)
    {
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        auto parsed = nlohmann::json::parse(line, nullptr, false);
        if (parsed.is_discarded() || !parsed.is_object())
            throw DatasetError(fmt::format("{}:{}: expected a JSON object", o.verdict_file, line_no));
        verdicts.push_back(std::move(parsed));
    }
    int applied = 0;
    int rejected = 0;
    for (const auto& v: verdicts)
    {
        auto const id = v.at("sample_id").get<std::string>();
        auto const decision = parse_reference_decision(v.at("verdict").get<std::string>());
        auto it = std::ranges::find(samples, id, &EditSample::id);
        if (!decision || it == samples.end())
        {
            err << fmt::format("verify import: skipping {}: unknown sample or verdict\n", id);
            ++rejected;
            continue;
        }
        try
        {
            apply_reference_verdict(*it, store, v.at("attempt").get<int>(), *decision);
            ++applied;
        }
        catch (const StaleAttemptError& e)
        {
            err << fmt::format("verify import: {}: {}\n", id, e.what());
            ++rejected;
        }
    }
    save_dataset(o.out.empty() ? o.dataset : o.out, samples);
    out << fmt::format("verify import: {} applied, {} rejected\n", applied, rejected);
    return rejected == 0 ? 0 : 1;
}

int cmd_eval(const Options& o, std::ostream& out)
{
    auto config = config_from(o.config);
    if (!o.judge_script.empty())
        config.judge_script = o.judge_script;
    if (o.workers > 0)
        config.workers = o.workers;
    if (o.turn_limit > 0)
        config.turn_limit = o.turn_limit;
    config.validate();

    EvalRequest request;
    request.dataset = o.dataset;
    request.image_root = o.images;
    auto const mode = parse_eval_mode(o.mode);
    if (!mode)
        throw UsageError(fmt::format("unknown mode '{}'", o.mode));
    request.mode = *mode;
    request.criteria = criteria_from(o.criterion);
    request.run_dir = o.run_dir;
    for (const auto& m: o.models)
    {
        auto [name, dir] = split_assignment(m, "--model");
        request.models.push_back({ name, dir, {} });
    }
    for (const auto& m: o.mappings)
    {
        auto [name, file] = split_assignment(m, "--mapping");
        auto it = std::ranges::find(request.models, name, &ModelOutputs::model_id);
        if (it == request.models.end())
            throw UsageError(fmt::format("--mapping names unknown model '{}'", name));
        it->overrides = load_edit_mapping(file);
    }

    auto judge = make_judge_backend(config);
    auto const tools = make_tool_suite(config);
    EvalHooks hooks;
    hooks.stop = &g_stop;
    auto previous = std::signal(SIGINT, [](int) { g_stop = true; });
    RunManifest manifest;
    try
    {
        manifest = run_evaluation(request, config, *judge, tools, hooks);
    }
    catch (...)
    {
        std::signal(SIGINT, previous);
        throw;
    }
    std::signal(SIGINT, previous);
    out << fmt::format("eval {}: {} completed, {} failed, {} of {} episodes recorded{}\n", manifest.run_id,
                       manifest.counts.completed, manifest.counts.failed,
                       manifest.counts.completed + manifest.counts.failed, manifest.total_episodes,
                       manifest.finished_at.empty() ? " (interrupted; rerun to resume)" : "");
    return manifest.finished_at.empty() ? 1 : 0;
}

int cmd_score(const Options& o, std::ostream& out)
{
    if (o.verdicts.empty() == o.cells.empty())
        throw UsageError("score needs exactly one of --verdicts or --cells");
    ScoreTable table;
    if (!o.verdicts.empty())
        table = aggregate(load_verdicts(o.verdicts));
    else
    {
        std::ifstream in(o.cells);
        if (!in)
            throw DatasetError(fmt::format("cannot open {}", o.cells));
        table = score_table_from_csv(in);
    }
    std::string content;
    if (o.format == "json")
        content = to_json(table).dump(2) + "\n";
    else if (o.format == "csv")
        content = to_csv(table);
    else
        throw UsageError(fmt::format("unknown format '{}'", o.format));
    write_output(o.out, content, out);
    return 0;
}

/// Per (sample, model, criterion): worst label over targets per annotator, then the annotator mean.
std::map<std::tuple<std::string, std::string, Criterion>, double> human_points(std::span<const HumanLabel> labels)
{
    std::map<std::tuple<std::string, std::string, Criterion, std::string>, int> worst;
    for (const auto& l: labels)
    {
        auto const key = std::tuple { l.sample_id, l.model_id, l.criterion, l.annotator_id };
        auto it = worst.find(key);
        if (it == worst.end() || l.label.points() < it->second)
            worst[key] = l.label.points();
    }
    std::map<std::tuple<std::string, std::string, Criterion>, std::pair<double, int>> sums;
    for (const auto& [key, points]: worst)
    {
        auto& [sum, n] = sums[{ std::get<0>(key), std::get<1>(key), std::get<2>(key) }];
        sum += points;
        ++n;
    }
    std::map<std::tuple<std::string, std::string, Criterion>, double> out;
    for (const auto& [key, acc]: sums)
        out[key] = acc.first / acc.second;
    return out;
}

int cmd_align(const Options& o, std::ostream& out)
{
    if (o.scale != "points" && o.scale != "percent")
        throw UsageError(fmt::format("unknown scale '{}'", o.scale));
    auto const verdicts = load_verdicts(o.verdicts);
    auto const labels = load_human_labels(o.human);
    auto const human = human_points(labels);
    auto to_scale = [&](double points) { return o.scale == "percent" ? (points - 1.0) / 3.0 * 100.0 : points; };

    nlohmann::ordered_json report;
    report["scale"] = o.scale;
    for (auto criterion: kAllCriteria)
    {
        std::vector<double> judge;
        std::vector<double> people;
        for (const auto& v: verdicts)
        {
            if (v.criterion != criterion || !v.label)
                continue;
            auto it = human.find({ v.sample_id, v.model_id, criterion });
            if (it == human.end())
                it = human.find({ v.sample_id, std::string {}, criterion });
            if (it == human.end())
                continue;
            judge.push_back(to_scale(v.label->points()));
            people.push_back(to_scale(it->second));
        }
        nlohmann::ordered_json c;
        c["pairs"] = judge.size();
        std::optional<double> rho;
        std::optional<double> r;
        std::optional<double> p;
        std::string note;
        if (judge.size() >= 2)
        {
            try
            {
                rho = spearman(judge, people);
                auto const pr = pearson(judge, people);
                r = pr.r;
                p = pr.p;
            }
            catch (const UndefinedStatistic& e)
            {
                note = e.what();
            }
        }
        c["spearman"] = optional_json(rho);
        c["pearson"] = optional_json(r);
        c["p_value"] = optional_json(p);
        c["mae"] = judge.empty() ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(mae(judge, people));
        if (!note.empty())
            c["note"] = note;
        report[std::string(to_token(criterion))] = std::move(c);
    }
    write_output(o.out, report.dump(2) + "\n", out);
    return 0;
}

int cmd_agree(const Options& o, std::ostream& out)
{
    auto const level = parse_measurement_level(o.level);
    if (!level)
        throw UsageError(fmt::format("unknown level '{}'", o.level));
    auto const labels = load_human_labels(o.labels);
    std::map<std::string, EditType> types;
    for (const auto& s: load_dataset(o.dataset))
        types.emplace(s.id, s.edit_type);

    std::vector<std::string> annotators;
    for (const auto& l: labels)
        if (std::ranges::find(annotators, l.annotator_id) == annotators.end())
            annotators.push_back(l.annotator_id);
    std::ranges::sort(annotators);
    auto column = [&](const std::string& a) {
        return static_cast<std::size_t>(std::ranges::find(annotators, a) - annotators.begin());
    };

    using Item = std::tuple<std::string, std::string, int>;
    std::map<std::pair<Criterion, std::optional<EditType>>, std::map<Item, std::vector<std::optional<int>>>> groups;
    for (const auto& l: labels)
    {
        auto it = types.find(l.sample_id);
        if (it == types.end())
            throw DatasetError(fmt::format("label for unknown sample {}", l.sample_id));
        for (std::optional<EditType> type: { std::optional<EditType>(it->second), std::optional<EditType>() })
        {
            auto& row = groups[{ l.criterion, type }][{ l.sample_id, l.model_id, l.target_index }];
            row.resize(annotators.size());
            row[column(l.annotator_id)] = l.label.points();
        }
    }

    nlohmann::ordered_json report;
    report["level"] = std::string(to_token(*level));
    report["annotators"] = annotators.size();
    auto rows = nlohmann::ordered_json::array();
    for (const auto& [key, items]: groups)
    {
        ReliabilityInput input;
        input.level = *level;
        for (const auto& [_, row]: items)
            input.ratings.push_back(row);
        nlohmann::ordered_json r;
        r["criterion"] = std::string(to_token(key.first));
        r["edit_type"] = key.second ? std::string(to_token(*key.second)) : std::string("all");
        r["items"] = items.size();
        try
        {
            auto const alpha = krippendorff_alpha(input);
            r["alpha"] = alpha;
            r["alpha_x100"] = alpha * 100.0;
        }
        catch (const std::exception& e)
        {
            r["alpha"] = nullptr;
            r["alpha_x100"] = nullptr;
            r["note"] = e.what();
        }
        rows.push_back(std::move(r));
    }
    report["groups"] = std::move(rows);
    write_output(o.out, report.dump(2) + "\n", out);
    return 0;
}

int cmd_stats(const Options& o, std::ostream& out)
{
    auto const samples = load_dataset(o.dataset);
    auto const root = o.images.empty() ? fs::path(o.dataset).parent_path() : fs::path(o.images);
    std::vector<double> ratios;
    std::map<std::string, double> areas;
    for (const auto& s: samples)
    {
        if (s.target_bboxes.empty() || s.status == SampleStatus::Discarded)
            continue;
        auto const dims = read_image_dims(root / s.source_image);
        ratios.push_back(union_area_ratio(s.target_bboxes, dims));
        areas[s.id] = static_cast<double>(union_area(s.target_bboxes));
    }
    auto const stats = area_statistics(ratios, o.bins);
    fs::create_directories(o.out_dir);

    std::string cdf = "ratio,cdf\n";
    for (std::size_t i = 0; i < stats.sorted_ratios.size(); ++i)
        cdf += fmt::format("{:.8g},{:.6f}\n", stats.sorted_ratios[i],
                           static_cast<double>(i + 1) / static_cast<double>(stats.sorted_ratios.size()));
    write_file_atomic(fs::path(o.out_dir) / "area_cdf.csv", cdf);
    std::string hist = "bin_low,bin_high,count\n";
    for (std::size_t i = 0; i < stats.bin_counts.size(); ++i)
        hist += fmt::format("{:.8g},{:.8g},{}\n", stats.bin_edges[i], stats.bin_edges[i + 1], stats.bin_counts[i]);
    write_file_atomic(fs::path(o.out_dir) / "area_histogram.csv", hist);

    nlohmann::ordered_json summary;
    summary["samples"] = ratios.size();
    if (!stats.sorted_ratios.empty())
        summary["median_ratio"] = stats.sorted_ratios[stats.sorted_ratios.size() / 2];

    if (!o.verdicts.empty())
    {
        auto const criterion = parse_criterion(o.criterion);
        if (!criterion)
            throw UsageError(fmt::format("stats needs --criterion if or vc, got '{}'", o.criterion));
        std::vector<TrendPoint> points;
        for (const auto& v: load_verdicts(o.verdicts))
        {
            if (v.criterion != *criterion || !v.label || (!o.model.empty() && v.model_id != o.model))
                continue;
            auto it = areas.find(v.sample_id);
            if (it == areas.end())
                continue;
            points.push_back({ v.sample_id + "/" + v.model_id, it->second, normalize_label(*v.label) });
        }
        auto const trend = sliding_trend(points, o.window);
        std::string series = "window,mean_area,mean_score\n";
        for (std::size_t i = 0; i < trend.window_area.size(); ++i)
            series += fmt::format("{},{:.4f},{:.4f}\n", i, trend.window_area[i], trend.window_score[i]);
        write_file_atomic(fs::path(o.out_dir) / "trend.csv", series);
        summary["trend"] = { { "windows", trend.window_area.size() },
                             { "r", optional_json(trend.r) },
                             { "p", optional_json(trend.p) } };
        if (!trend.note.empty())
            summary["trend"]["note"] = trend.note;
    }
    out << summary.dump(2) << "\n";
    return 0;
}

int cmd_serve(const Options& o)
{
    AnnotationOptions options;
    options.dataset = o.dataset;
    options.image_root = o.images;
    options.state_dir = o.state_dir;
    if (!o.store.empty())
        options.store = o.store;
    if (!o.runs.empty())
        options.runs = o.runs;
    if (const char* token = std::getenv(kServiceTokenEnv))
        options.bearer_token = token;
    AnnotationService service(options);
    service.serve(o.host, o.port);
    return 0;
}

} // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app { "Image-editing evaluation harness", "tinyedit" };
    app.require_subcommand(1);
    Options o;
    app.add_flag("-v,--verbose", o.verbose, "Log progress to stderr");

    auto* synth = app.add_subcommand("synth", "Counterfactual synthesis: raw VQA samples to draft edit samples");
    synth->add_option("--raw", o.raw, "Raw VQA JSONL")->required()->check(CLI::ExistingFile);
    synth->add_option("--out", o.out, "Draft dataset JSONL to write")->required();
    synth->add_option("--store", o.store, "Pipeline store directory")->required();
    synth->add_option("--config", o.config, "Config file")->check(CLI::ExistingFile);
    synth->add_option("--llm-script", o.llm_script, "Scripted LLM replies (offline)")->check(CLI::ExistingFile);
    synth->add_option("--seed", o.seed, "Run seed for the incorrect-option draw");

    auto* genref = app.add_subcommand("genref", "Reference generation: crop, edit, paste back");
    genref->add_option("--dataset", o.dataset, "Dataset JSONL")->required()->check(CLI::ExistingFile);
    genref->add_option("--images", o.images, "Image root (default: dataset directory)");
    genref->add_option("--store", o.store, "Pipeline store directory")->required();
    genref->add_option("--config", o.config, "Config file with an [editor] section")->required()->check(CLI::ExistingFile);

    auto* verify = app.add_subcommand("verify", "Human review of reference candidates");
    verify->require_subcommand(1);
    auto* vexport = verify->add_subcommand("export", "List candidates awaiting a verdict");
    vexport->add_option("--dataset", o.dataset, "Dataset JSONL")->required()->check(CLI::ExistingFile);
    vexport->add_option("--store", o.store, "Pipeline store directory")->required();
    vexport->add_option("--out", o.out, "Output JSONL (default stdout)");
    auto* vimport = verify->add_subcommand("import", "Apply verdicts, JSONL of {sample_id, attempt, verdict}");
    vimport->add_option("--dataset", o.dataset, "Dataset JSONL")->required()->check(CLI::ExistingFile);
    vimport->add_option("--store", o.store, "Pipeline store directory")->required();
    vimport->add_option("--verdicts", o.verdict_file, "Verdict JSONL")->required()->check(CLI::ExistingFile);
    vimport->add_option("--out", o.out, "Updated dataset (default: overwrite --dataset)");

    auto* eval = app.add_subcommand("eval", "Run judge episodes over edited images");
    eval->add_option("--dataset", o.dataset, "Dataset JSONL")->required()->check(CLI::ExistingFile);
    eval->add_option("--images", o.images, "Image root (default: dataset directory)");
    eval->add_option("--model", o.models, "NAME=DIR with DIR/<sample_id>.png (repeatable)")->required();
    eval->add_option("--mapping", o.mappings, "NAME=FILE JSON {sample_id: path} overriding discovery");
    eval->add_option("--mode", o.mode, "tool, oracle or baseline")
        ->check(CLI::IsMember({ "tool", "oracle", "baseline" }));
    eval->add_option("--criterion", o.criterion, "if, vc or both")->check(CLI::IsMember({ "if", "vc", "both" }));
    eval->add_option("--run-dir", o.run_dir, "Run directory (resumes when it exists)")->required();
    eval->add_option("--config", o.config, "Config file")->check(CLI::ExistingFile);
    eval->add_option("--judge-script", o.judge_script, "Scripted judge replies (offline)")->check(CLI::ExistingFile);
    eval->add_option("--workers", o.workers, "Concurrent episodes")->check(CLI::Range(1, 256));
    eval->add_option("--turn-limit", o.turn_limit, "Judge turns per episode")->check(CLI::PositiveNumber);

    auto* score = app.add_subcommand("score", "Aggregate verdicts or per-type cells into a score table");
    score->add_option("--verdicts", o.verdicts, "verdicts.jsonl")->check(CLI::ExistingFile);
    score->add_option("--cells", o.cells, "CSV model,criterion,edit_type,score")->check(CLI::ExistingFile);
    score->add_option("--format", o.format, "csv or json")->check(CLI::IsMember({ "csv", "json" }));
    score->add_option("--out", o.out, "Output file (default stdout)");

    auto* align = app.add_subcommand("align", "Judge vs human correlation and MAE");
    align->add_option("--verdicts", o.verdicts, "verdicts.jsonl")->required()->check(CLI::ExistingFile);
    align->add_option("--human", o.human, "Human labels JSONL")->required()->check(CLI::ExistingFile);
    align->add_option("--scale", o.scale, "points (1-4) or percent (0-100)")
        ->check(CLI::IsMember({ "points", "percent" }));
    align->add_option("--out", o.out, "Output file (default stdout)");

    auto* agree = app.add_subcommand("agree", "Krippendorff's alpha per edit type");
    agree->add_option("--labels", o.labels, "Human labels JSONL")->required()->check(CLI::ExistingFile);
    agree->add_option("--dataset", o.dataset, "Dataset JSONL for edit types")->required()->check(CLI::ExistingFile);
    agree->add_option("--level", o.level, "nominal, ordinal or interval")
        ->check(CLI::IsMember({ "nominal", "ordinal", "interval" }));
    agree->add_option("--out", o.out, "Output file (default stdout)");

    auto* stats = app.add_subcommand("stats", "Area-ratio CDF, histogram and score-vs-area trend");
    stats->add_option("--dataset", o.dataset, "Dataset JSONL")->required()->check(CLI::ExistingFile);
    stats->add_option("--images", o.images, "Image root (default: dataset directory)");
    stats->add_option("--verdicts", o.verdicts, "verdicts.jsonl for the trend")->check(CLI::ExistingFile);
    stats->add_option("--criterion", o.criterion, "Criterion for the trend (if or vc)");
    stats->add_option("--model", o.model, "Restrict the trend to one model");
    stats->add_option("--window", o.window, "Sliding window size")->check(CLI::PositiveNumber);
    stats->add_option("--bins", o.bins, "Histogram bins")->check(CLI::PositiveNumber);
    stats->add_option("--out-dir", o.out_dir, "Directory for the CSV series")->required();

    auto* serve = app.add_subcommand("serve", "Annotation HTTP API");
    serve->add_option("--dataset", o.dataset, "Dataset JSONL")->required()->check(CLI::ExistingFile);
    serve->add_option("--images", o.images, "Image root (default: dataset directory)");
    serve->add_option("--state-dir", o.state_dir, "Annotation log and derived dataset directory")->required();
    serve->add_option("--store", o.store, "Pipeline store directory (reference review)");
    serve->add_option("--runs", o.runs, "Directory of evaluation runs");
    serve->add_option("--host", o.host, "Bind address");
    serve->add_option("--port", o.port, "Port")->check(CLI::Range(1, 65535));

    std::vector<const char*> argv { "tinyedit" };
    for (const auto& a: args)
        argv.push_back(a.c_str());
    try
    {
        app.parse(static_cast<int>(argv.size()), argv.data());
    }
    catch (const CLI::CallForHelp&)
    {
        const CLI::App* target = &app;
        for (auto* sub = app.get_subcommands().empty() ? nullptr : app.get_subcommands().front(); sub;
             sub = sub->get_subcommands().empty() ? nullptr : sub->get_subcommands().front())
            target = sub;
        out << target->help();
        return 0;
    }
    catch (const CLI::ParseError& e)
    {
        err << "error: " << e.what() << "\n\n";
        const CLI::App* target = &app;
        for (auto* sub = app.get_subcommands().empty() ? nullptr : app.get_subcommands().front(); sub;
             sub = sub->get_subcommands().empty() ? nullptr : sub->get_subcommands().front())
            target = sub;
        err << target->help();
        return 2;
    }

    static auto const logger = [] {
        auto l = spdlog::stderr_color_mt("tinyedit");
        spdlog::set_default_logger(l);
        return l;
    }();
    spdlog::set_level(o.verbose ? spdlog::level::info : spdlog::level::warn);
    o.seed_given = synth->count("--seed") > 0;
    try
    {
        if (synth->parsed())
            return cmd_synth(o, out);
        if (genref->parsed())
            return cmd_genref(o, out);
        if (vexport->parsed())
            return cmd_verify_export(o, out);
        if (vimport->parsed())
            return cmd_verify_import(o, out, err);
        if (eval->parsed())
            return cmd_eval(o, out);
        if (score->parsed())
            return cmd_score(o, out);
        if (align->parsed())
            return cmd_align(o, out);
        if (agree->parsed())
            return cmd_agree(o, out);
        if (stats->parsed())
            return cmd_stats(o, out);
        if (serve->parsed())
            return cmd_serve(o);
    }
    catch (const UsageError& e)
    {
        err << "error: " << e.what() << "\n";
        return 2;
    }
    catch (const std::exception& e)
    {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    err << app.help();
    return 2;
}

int run_cli(int argc, const char* const* argv)
{
    std::vector<std::string> args(argv + 1, argv + argc);
    return run_cli(args, std::cout, std::cerr);
}

} // namespace tinyedit
