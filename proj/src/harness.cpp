// SPDX-License-Identifier: Apache-2.0
#include "tinyedit/harness.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <ctime>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>

namespace tinyedit
{

namespace fs = std::filesystem;

std::string utc_timestamp()
{
    auto const now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm {};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::map<std::string, fs::path> load_edit_mapping(const fs::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError(fmt::format("cannot open edit mapping {}", path.string()));
    nlohmann::json j;
    try
    {
        in >> j;
    }
    catch (const nlohmann::json::exception& e)
    {
        throw ConfigError(fmt::format("edit mapping {}: {}", path.string(), e.what()));
    }
    if (!j.is_object())
        throw ConfigError(fmt::format("edit mapping {} must be a JSON object", path.string()));
    std::map<std::string, fs::path> out;
    for (const auto& [id, value]: j.items())
    {
        if (!value.is_string())
            throw ConfigError(fmt::format("edit mapping {}: value for {} is not a path", path.string(), id));
        fs::path p = value.get<std::string>();
        out[id] = p.is_relative() ? path.parent_path() / p : p;
    }
    return out;
}

fs::path edited_image_path(const ModelOutputs& outputs, std::string_view sample_id)
{
    if (auto it = outputs.overrides.find(std::string(sample_id)); it != outputs.overrides.end())
        return it->second;
    return outputs.dir / (std::string(sample_id) + ".png");
}

nlohmann::ordered_json to_json(const RunManifest& m)
{
    nlohmann::ordered_json j;
    j["run_id"] = m.run_id;
    j["dataset"] = { { "path", m.dataset_path }, { "sha256", m.dataset_sha256 } };
    j["mode"] = std::string(to_token(m.mode));
    auto criteria = nlohmann::ordered_json::array();
    for (auto c: m.criteria)
        criteria.push_back(std::string(to_token(c)));
    j["criteria"] = std::move(criteria);
    j["models"] = m.models;
    j["backends"] = m.backends;
    j["turn_limit"] = m.turn_limit;
    j["seed"] = m.seed;
    j["started_at"] = m.started_at;
    j["finished_at"] = m.finished_at.empty() ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(m.finished_at);
    j["total_episodes"] = m.total_episodes;
    j["counts"] = { { "completed", m.counts.completed }, { "failed", m.counts.failed } };
    return j;
}

RunManifest manifest_from_json(const nlohmann::json& j)
{
    try
    {
        RunManifest m;
        m.run_id = j.at("run_id").get<std::string>();
        m.dataset_path = j.at("dataset").at("path").get<std::string>();
        m.dataset_sha256 = j.at("dataset").at("sha256").get<std::string>();
        auto const mode = parse_eval_mode(j.at("mode").get<std::string>());
        if (!mode)
            throw DatasetError("manifest has an unknown mode");
        m.mode = *mode;
        for (const auto& c: j.at("criteria"))
        {
            auto const criterion = parse_criterion(c.get<std::string>());
            if (!criterion)
                throw DatasetError("manifest has an unknown criterion");
            m.criteria.push_back(*criterion);
        }
        m.models = j.at("models").get<std::vector<std::string>>();
        m.backends = j.value("backends", nlohmann::ordered_json::object());
        m.turn_limit = j.value("turn_limit", 6);
        m.seed = j.value("seed", std::uint64_t { 0 });
        m.started_at = j.value("started_at", std::string {});
        if (j.contains("finished_at") && j["finished_at"].is_string())
            m.finished_at = j["finished_at"].get<std::string>();
        m.total_episodes = j.value("total_episodes", 0);
        m.counts.completed = j.at("counts").at("completed").get<int>();
        m.counts.failed = j.at("counts").at("failed").get<int>();
        return m;
    }
    catch (const nlohmann::json::exception& e)
    {
        throw DatasetError(fmt::format("malformed run manifest: {}", e.what()));
    }
}

EpisodeKey episode_key(const VerdictRecord& v)
{
    return { v.sample_id, v.model_id, v.criterion, v.mode };
}

std::vector<VerdictRecord> load_verdicts(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw DatasetError(fmt::format("cannot open verdicts {}", path.string()));
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::vector<VerdictRecord> out;
    std::size_t pos = 0;
    int line_no = 0;
    while (pos < content.size())
    {
        auto const end = content.find('\n', pos);
        if (end == std::string::npos)
            break; // torn write
        auto const line = std::string_view(content).substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string_view::npos)
            continue;
        try
        {
            out.push_back(verdict_from_json(nlohmann::json::parse(line)));
        }
        catch (const std::exception& e)
        {
            throw DatasetError(fmt::format("{}:{}: {}", path.string(), line_no, e.what()));
        }
    }
    return out;
}

namespace
{

/// Drops a trailing partial line so appends start on a fresh line.
void repair_tail(const fs::path& path)
{
    if (!fs::exists(path))
        return;
    std::ifstream in(path, std::ios::binary);
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (content.empty() || content.back() == '\n')
        return;
    auto const last = content.rfind('\n');
    auto const keep = last == std::string::npos ? 0 : last + 1;
    spdlog::warn("{}: dropping {} bytes of an incomplete record", path.string(), content.size() - keep);
    in.close();
    fs::resize_file(path, keep);
}

struct Job
{
    std::size_t sample_index;
    std::size_t model_index;
    Criterion criterion;
};

VerdictRecord failed_verdict(const EditSample& sample, const std::string& model, Criterion criterion, EvalMode mode,
                             FailureReason reason, std::string detail)
{
    VerdictRecord v;
    v.sample_id = sample.id;
    v.model_id = model;
    v.criterion = criterion;
    v.mode = mode;
    v.edit_type = sample.edit_type;
    v.failure = reason;
    v.detail = std::move(detail);
    return v;
}

std::vector<std::string> read_lines(const fs::path& path)
{
    std::vector<std::string> lines;
    std::ifstream in(path);
    std::string line;
    while (std::getline(in, line))
        if (!line.empty())
            lines.push_back(line);
    return lines;
}

} // namespace

RunManifest run_evaluation(const EvalRequest& request, const HarnessConfig& config, ChatBackend& judge,
                           const ToolSuite& tools, const EvalHooks& hooks)
{
    config.validate();
    if (request.models.empty())
        throw ConfigError("no model outputs given");
    if (request.criteria.empty())
        throw ConfigError("no criteria given");
    if (request.run_dir.empty())
        throw ConfigError("no run directory given");
    for (std::size_t i = 0; i < request.models.size(); ++i)
        for (std::size_t k = i + 1; k < request.models.size(); ++k)
            if (request.models[i].model_id == request.models[k].model_id)
                throw ConfigError(fmt::format("model id {} given twice", request.models[i].model_id));

    auto const now = hooks.now ? hooks.now : utc_timestamp;
    auto const image_root = request.image_root.empty() ? request.dataset.parent_path() : request.image_root;

    RunManifest manifest;
    manifest.dataset_sha256 = sha256_file(request.dataset);
    manifest.dataset_path = request.dataset.string();
    manifest.run_id = request.run_id.empty() ? request.run_dir.filename().string() : request.run_id;
    manifest.mode = request.mode;
    manifest.criteria = request.criteria;
    for (const auto& m: request.models)
        manifest.models.push_back(m.model_id);
    manifest.backends = config.describe();
    manifest.turn_limit = config.turn_limit;
    manifest.seed = config.seed;
    manifest.started_at = now();

    auto const samples = load_dataset(request.dataset);
    std::vector<std::size_t> active;
    for (std::size_t i = 0; i < samples.size(); ++i)
    {
        if (samples[i].status == SampleStatus::Discarded)
            continue;
        auto const report = validate_sample(samples[i], image_root);
        if (!report.ok())
            throw DatasetError(fmt::format("sample {} does not validate: {}", samples[i].id, report.summary()));
        active.push_back(i);
    }
    manifest.total_episodes =
        static_cast<int>(active.size() * request.models.size() * request.criteria.size());

    fs::create_directories(request.run_dir / "observations");
    auto const manifest_path = request.run_dir / "manifest.json";
    auto const verdict_path = request.run_dir / "verdicts.jsonl";
    auto const transcript_path = request.run_dir / "transcripts.jsonl";

    if (fs::exists(manifest_path))
    {
        std::ifstream in(manifest_path);
        auto const previous = manifest_from_json(nlohmann::json::parse(in));
        if (previous.dataset_sha256 != manifest.dataset_sha256)
            throw ConfigError("run directory was started on a different dataset");
        if (previous.mode != manifest.mode)
            throw ConfigError("run directory was started in a different mode");
        manifest.started_at = previous.started_at;
    }

    repair_tail(verdict_path);
    repair_tail(transcript_path);
    std::set<EpisodeKey> done;
    if (fs::exists(verdict_path))
        for (const auto& v: load_verdicts(verdict_path))
            done.insert(episode_key(v));

    std::vector<Job> jobs;
    for (auto si: active)
        for (std::size_t mi = 0; mi < request.models.size(); ++mi)
            for (auto criterion: request.criteria)
                if (!done.contains({ samples[si].id, request.models[mi].model_id, criterion, request.mode }))
                    jobs.push_back({ si, mi, criterion });

    write_file_atomic(manifest_path, to_json(manifest).dump(2) + "\n");
    spdlog::info("run {}: {} episodes, {} already recorded", manifest.run_id, manifest.total_episodes,
                 manifest.total_episodes - static_cast<int>(jobs.size()));

    std::ofstream verdict_out(verdict_path, std::ios::app | std::ios::binary);
    std::ofstream transcript_out(transcript_path, std::ios::app | std::ios::binary);
    if (!verdict_out || !transcript_out)
        throw ConfigError(fmt::format("cannot write to run directory {}", request.run_dir.string()));

    JudgeSettings settings;
    settings.turn_limit = config.turn_limit;
    settings.expansion = config.expansion;

    ImageSink const sink = [&](const Image& image) {
        auto ref = content_image_ref(image);
        auto const path = request.run_dir / ref;
        if (!fs::exists(path))
            write_png(image, path);
        return ref;
    };

    std::mutex writer;
    std::atomic<std::size_t> next { 0 };
    auto worker = [&] {
        for (;;)
        {
            if (hooks.stop && hooks.stop->load())
                return;
            auto const index = next.fetch_add(1);
            if (index >= jobs.size())
                return;
            auto const& job = jobs[index];
            auto const& sample = samples[job.sample_index];
            auto const& model = request.models[job.model_index];

            SampleEvaluation evaluation;
            auto const edited_path = edited_image_path(model, sample.id);
            try
            {
                if (!fs::exists(edited_path))
                    evaluation.verdict = failed_verdict(sample, model.model_id, job.criterion, request.mode,
                                                        FailureReason::MissingInput,
                                                        fmt::format("edited image not found: {}", edited_path.string()));
                else
                {
                    SampleImages images { read_image(image_root / sample.source_image), read_image(edited_path),
                                          std::nullopt };
                    if (sample.reference_image)
                        images.reference = read_image(image_root / *sample.reference_image);
                    evaluation = evaluate_sample(sample, model.model_id, images, request.mode, job.criterion, judge,
                                                 tools, settings);
                }
            }
            catch (const std::exception& e)
            {
                evaluation.episodes.clear();
                evaluation.verdict = failed_verdict(sample, model.model_id, job.criterion, request.mode,
                                                    FailureReason::MissingInput, e.what());
            }

            std::vector<std::string> transcript_lines;
            for (const auto& episode: evaluation.episodes)
                transcript_lines.push_back(to_json(episode, sink).dump());

            std::lock_guard lock(writer);
            for (const auto& line: transcript_lines)
                transcript_out << line << '\n';
            transcript_out.flush();
            verdict_out << to_json(evaluation.verdict).dump() << '\n';
            verdict_out.flush();
            if (hooks.on_verdict)
                hooks.on_verdict(evaluation.verdict);
        }
    };

    auto const n_workers = std::min<std::size_t>(static_cast<std::size_t>(config.workers), jobs.size());
    {
        std::vector<std::jthread> pool;
        for (std::size_t i = 0; i < n_workers; ++i)
            pool.emplace_back(worker);
    }
    verdict_out.close();
    transcript_out.close();

    // Recount from disk so resumed runs report the whole run.
    auto verdicts = fs::exists(verdict_path) ? load_verdicts(verdict_path) : std::vector<VerdictRecord> {};
    std::map<std::string, std::size_t> sample_order;
    for (std::size_t i = 0; i < samples.size(); ++i)
        sample_order.emplace(samples[i].id, i);
    std::map<std::string, std::size_t> model_order;
    for (std::size_t i = 0; i < request.models.size(); ++i)
        model_order.emplace(request.models[i].model_id, i);
    auto rank = [&](const std::string& sample, const std::string& model, Criterion criterion) {
        auto const s = sample_order.contains(sample) ? sample_order[sample] : samples.size();
        auto const m = model_order.contains(model) ? model_order[model] : request.models.size();
        return std::tuple { s, m, static_cast<int>(criterion), sample, model };
    };

    manifest.counts = {};
    for (const auto& v: verdicts)
        (v.failed() ? manifest.counts.failed : manifest.counts.completed) += 1;

    if (static_cast<int>(verdicts.size()) >= manifest.total_episodes)
    {
        // Complete: rewrite both logs in dataset order so reruns are byte-identical.
        std::ranges::stable_sort(verdicts, [&](const VerdictRecord& a, const VerdictRecord& b) {
            return rank(a.sample_id, a.model_id, a.criterion) < rank(b.sample_id, b.model_id, b.criterion);
        });
        std::string out;
        for (const auto& v: verdicts)
            out += to_json(v).dump() + "\n";
        write_file_atomic(verdict_path, out);

        auto lines = read_lines(transcript_path);
        std::vector<std::pair<nlohmann::json, std::string>> parsed;
        for (auto& line: lines)
            parsed.emplace_back(nlohmann::json::parse(line), std::move(line));
        std::ranges::stable_sort(parsed, [&](const auto& a, const auto& b) {
            auto key = [&](const nlohmann::json& j) {
                auto const criterion = parse_criterion(j.value("criterion", std::string { "if" }));
                return std::pair { rank(j.value("sample_id", std::string {}), j.value("model_id", std::string {}),
                                        criterion.value_or(Criterion::InstructionFollowing)),
                                   j.value("target_index", 0) };
            };
            return key(a.first) < key(b.first);
        });
        // A crash between the two appends can leave a transcript whose verdict
        // was redone on resume; keep the last copy.
        std::map<std::tuple<std::string, std::string, std::string, int>, std::size_t> last;
        for (std::size_t i = 0; i < parsed.size(); ++i)
        {
            const auto& j = parsed[i].first;
            last[{ j.value("sample_id", std::string {}), j.value("model_id", std::string {}),
                   j.value("criterion", std::string {}), j.value("target_index", 0) }] = i;
        }
        std::set<std::size_t> keep;
        for (const auto& [_, i]: last)
            keep.insert(i);
        out.clear();
        for (std::size_t i = 0; i < parsed.size(); ++i)
            if (keep.contains(i))
                out += parsed[i].second + "\n";
        write_file_atomic(transcript_path, out);
        manifest.finished_at = now();
    }
    write_file_atomic(manifest_path, to_json(manifest).dump(2) + "\n");
    spdlog::info("run {}: {} completed, {} failed of {}", manifest.run_id, manifest.counts.completed,
                 manifest.counts.failed, manifest.total_episodes);
    return manifest;
}

} // namespace tinyedit
