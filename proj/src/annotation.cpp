// SPDX-License-Identifier: Apache-2.0
#include "tinyedit/annotation.hpp"

#include "tinyedit/harness.hpp"
#include "tinyedit/image.hpp"
#include "tinyedit/metrics.hpp"

#include <fmt/format.h>
#include <httplib.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <fstream>
#include <random>
#include <regex>
#include <thread>

namespace tinyedit
{

namespace fs = std::filesystem;

nlohmann::ordered_json to_json(const AnnotationRecord& r)
{
    nlohmann::ordered_json j;
    j["sample_id"] = r.sample_id;
    j["annotator_id"] = r.annotator_id;
    j["kind"] = r.kind;
    j["payload"] = r.payload;
    j["timestamp"] = r.timestamp;
    return j;
}

AnnotationRecord annotation_from_json(const nlohmann::json& j)
{
    try
    {
        AnnotationRecord r;
        r.sample_id = j.at("sample_id").get<std::string>();
        r.annotator_id = j.value("annotator_id", std::string {});
        r.kind = j.at("kind").get<std::string>();
        r.payload = j.at("payload");
        r.timestamp = j.value("timestamp", std::string {});
        return r;
    }
    catch (const nlohmann::json::exception& e)
    {
        throw DatasetError(fmt::format("malformed annotation record: {}", e.what()));
    }
}

nlohmann::ordered_json to_json(const HumanLabel& l)
{
    nlohmann::ordered_json j;
    j["sample_id"] = l.sample_id;
    j["model_id"] = l.model_id;
    j["annotator_id"] = l.annotator_id;
    j["criterion"] = std::string(to_token(l.criterion));
    j["label"] = std::string(l.label.name());
    j["points"] = l.label.points();
    j["target_index"] = l.target_index;
    return j;
}

HumanLabel human_label_from_json(const nlohmann::json& json)
{
    try
    {
        auto const record = json.contains("kind") && json.contains("payload");
        if (record && json["kind"] != "rubric_label")
            throw DatasetError(fmt::format("annotation record of kind {} is not a label", json["kind"].dump()));
        const auto& p = record ? json["payload"] : json;
        HumanLabel l;
        l.sample_id = json.at("sample_id").get<std::string>();
        l.annotator_id = json.value("annotator_id", std::string {});
        l.model_id = p.value("model_id", std::string {});
        auto const criterion = parse_criterion(p.at("criterion").get<std::string>());
        if (!criterion)
            throw DatasetError("unknown criterion");
        l.criterion = *criterion;
        std::optional<RubricLabel> label;
        if (p.at("label").is_number_integer())
            label = RubricLabel::from_points(l.criterion, p["label"].get<int>());
        else
            label = RubricLabel::parse(l.criterion, p.at("label").get<std::string>());
        if (!label)
            throw DatasetError(fmt::format("label {} is not in the {} rubric", p["label"].dump(), to_token(l.criterion)));
        l.label = *label;
        l.target_index = p.value("target_index", 0);
        return l;
    }
    catch (const nlohmann::json::exception& e)
    {
        throw DatasetError(fmt::format("malformed label: {}", e.what()));
    }
}

std::vector<HumanLabel> load_human_labels(const fs::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw DatasetError(fmt::format("cannot open labels {}", path.string()));
    std::vector<HumanLabel> out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line))
    {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        try
        {
            auto const j = nlohmann::json::parse(line);
            if (j.contains("kind") && j["kind"] != "rubric_label")
                continue; // other annotation kinds in a full log
            out.push_back(human_label_from_json(j));
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

EditSample& find_sample(AnnotationState& state, const std::string& id)
{
    auto it = std::ranges::find(state.samples, id, &EditSample::id);
    if (it == state.samples.end())
        throw DatasetError(fmt::format("unknown sample {}", id));
    return *it;
}

const std::array<const char*, 5> kMetadataFields { "instruction", "target_object", "edit_type", "source_caption",
                                                   "reference_caption" };

} // namespace

void apply_record(AnnotationState& state, const AnnotationRecord& r)
{
    auto& sample = find_sample(state, r.sample_id);
    const auto& p = r.payload;
    if (r.kind == "bbox")
    {
        sample.target_bboxes.clear();
        for (const auto& b: p.at("bboxes"))
            sample.target_bboxes.push_back(bbox_from_json(b));
    }
    else if (r.kind == "metadata_fix")
    {
        for (const auto* field: kMetadataFields)
        {
            if (!p.contains(field))
                continue;
            auto const value = p[field].get<std::string>();
            std::string_view const f = field;
            if (f == "instruction")
                sample.instruction = value;
            else if (f == "target_object")
                sample.target_object = value;
            else if (f == "source_caption")
                sample.source_caption = value;
            else if (f == "reference_caption")
                sample.reference_caption = value;
            else if (auto const type = parse_edit_type(value))
                sample.edit_type = *type;
            else
                throw DatasetError(fmt::format("unknown edit type {}", value));
        }
    }
    else if (r.kind == "reference_verdict")
    {
        auto const decision = parse_reference_decision(p.at("decision").get<std::string>());
        if (!decision)
            throw DatasetError("unknown reference decision");
        auto const attempt = p.at("attempt").get<int>();
        if (*decision == ReferenceDecision::Accept)
        {
            sample.reference_image = p.at("candidate").get<std::string>();
            sample.status = SampleStatus::Verified;
        }
        else if (*decision == ReferenceDecision::Discard || attempt >= kMaxReferenceAttempts)
            sample.status = SampleStatus::Discarded;
    }
    else if (r.kind == "rubric_label")
    {
        auto json = to_json(r);
        auto label = human_label_from_json(nlohmann::json::parse(json.dump()));
        auto it = std::ranges::find_if(state.labels, [&](const HumanLabel& l) {
            return l.sample_id == label.sample_id && l.model_id == label.model_id
                   && l.annotator_id == label.annotator_id && l.criterion == label.criterion
                   && l.target_index == label.target_index;
        });
        if (it != state.labels.end())
            *it = std::move(label);
        else
            state.labels.push_back(std::move(label));
    }
    else
        throw DatasetError(fmt::format("unknown annotation kind {}", r.kind));
}

AnnotationState replay(std::vector<EditSample> base, std::span<const AnnotationRecord> log)
{
    AnnotationState state;
    state.samples = std::move(base);
    for (const auto& r: log)
        apply_record(state, r);
    return state;
}

struct AnnotationService::Impl
{
    AnnotationOptions options;
    fs::path image_root;
    fs::path log_path;
    fs::path derived_path;
    std::optional<PipelineStore> store;

    mutable std::mutex mutex;
    AnnotationState state;
    std::vector<AnnotationRecord> records;
    std::map<std::string, ImageDims> dims_cache;

    httplib::Server server;
    std::thread thread;

    explicit Impl(AnnotationOptions o): options(std::move(o))
    {
        image_root = options.image_root.empty() ? options.dataset.parent_path() : options.image_root;
        if (options.state_dir.empty())
            throw DatasetError("annotation service needs a state directory");
        fs::create_directories(options.state_dir);
        log_path = options.state_dir / "annotations.jsonl";
        derived_path = options.state_dir / "dataset.jsonl";
        if (options.store)
            store.emplace(*options.store);
        if (!options.clock)
            options.clock = utc_timestamp;

        auto base = load_dataset(options.dataset);
        if (fs::exists(log_path))
        {
            std::ifstream in(log_path);
            std::string line;
            int line_no = 0;
            while (std::getline(in, line))
            {
                ++line_no;
                if (line.find_first_not_of(" \t\r") == std::string::npos)
                    continue;
                try
                {
                    records.push_back(annotation_from_json(nlohmann::json::parse(line)));
                }
                catch (const std::exception& e)
                {
                    throw DatasetError(fmt::format("{}:{}: {}", log_path.string(), line_no, e.what()));
                }
            }
        }
        state = replay(std::move(base), records);
        spdlog::info("annotation service: {} samples, {} log records replayed", state.samples.size(), records.size());
    }

    ImageDims source_dims(const EditSample& sample)
    {
        auto it = dims_cache.find(sample.id);
        if (it != dims_cache.end())
            return it->second;
        auto const dims = read_image_dims(image_root / sample.source_image);
        dims_cache.emplace(sample.id, dims);
        return dims;
    }

    ReferenceGenStatus reference_status(const std::string& id) const
    {
        if (!store)
            return {};
        if (auto const j = store->load("genref", id))
            return reference_status_from_json(*j);
        return {};
    }

    /// Appends to the log, applies to the state, persists the derived dataset. Caller holds the mutex.
    void commit(AnnotationRecord record)
    {
        apply_record(state, record);
        std::ofstream out(log_path, std::ios::app | std::ios::binary);
        out << to_json(record).dump() << '\n';
        out.flush();
        if (!out)
            throw std::runtime_error(fmt::format("cannot append to {}", log_path.string()));
        records.push_back(std::move(record));
        save_dataset(derived_path, state.samples);
    }
};

namespace
{

ApiResponse error(int status, std::string code, std::string message)
{
    return { status, { { "error", std::move(code) }, { "message", std::move(message) } }, {}, "application/json" };
}

ApiResponse unprocessable(std::string code, std::string message)
{
    return error(422, std::move(code), std::move(message));
}

std::string image_url(const std::string& id, std::string_view role)
{
    return fmt::format("/images/{}/{}", id, role);
}

ApiResponse png_response(const fs::path& path)
{
    try
    {
        std::ifstream in(path, std::ios::binary);
        if (!in)
            return error(404, "image-not-found", fmt::format("no image at {}", path.filename().string()));
        std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        static constexpr std::string_view kPngMagic = "\x89PNG";
        if (!bytes.starts_with(kPngMagic))
        {
            auto const image = decode_image(
                std::span(reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()));
            auto const png = encode_png(image);
            bytes.assign(png.begin(), png.end());
        }
        ApiResponse r;
        r.bytes = std::move(bytes);
        r.content_type = "image/png";
        return r;
    }
    catch (const ImageIOError& e)
    {
        return error(500, "image-unreadable", e.what());
    }
}

} // namespace

AnnotationService::AnnotationService(AnnotationOptions options): _impl(std::make_unique<Impl>(std::move(options)))
{
}

AnnotationService::~AnnotationService()
{
    stop();
}

ApiResponse AnnotationService::list_samples(const std::optional<std::string>& status,
                                            const std::optional<std::uint64_t>& shuffle_seed)
{
    std::optional<SampleStatus> filter;
    if (status)
    {
        filter = parse_sample_status(*status);
        if (!filter)
            return unprocessable("unknown-status", fmt::format("unknown sample status '{}'", *status));
    }
    std::lock_guard lock(_impl->mutex);
    std::vector<const EditSample*> picked;
    for (const auto& s: _impl->state.samples)
        if (!filter || s.status == *filter)
            picked.push_back(&s);
    if (shuffle_seed)
    {
        std::mt19937_64 rng(*shuffle_seed);
        std::shuffle(picked.begin(), picked.end(), rng);
    }
    auto items = nlohmann::ordered_json::array();
    for (const auto* s: picked)
        items.push_back({ { "id", s->id },
                          { "status", std::string(to_token(s->status)) },
                          { "edit_type", std::string(to_token(s->edit_type)) },
                          { "instruction", s->instruction },
                          { "target_object", s->target_object },
                          { "bbox_count", s->target_bboxes.size() } });
    return { 200, { { "samples", std::move(items) } }, {}, "application/json" };
}

ApiResponse AnnotationService::get_sample(const std::string& id)
{
    std::lock_guard lock(_impl->mutex);
    auto it = std::ranges::find(_impl->state.samples, id, &EditSample::id);
    if (it == _impl->state.samples.end())
        return error(404, "unknown-sample", fmt::format("no sample {}", id));
    const auto& sample = *it;
    nlohmann::ordered_json body;
    body["sample"] = to_json(sample);
    nlohmann::ordered_json images;
    images["source"] = image_url(id, "source");
    if (sample.reference_image)
        images["reference"] = image_url(id, "reference");
    auto const status = _impl->reference_status(id);
    auto candidates = nlohmann::ordered_json::array();
    for (const auto& a: status.attempts)
        if (!a.candidate.empty())
            candidates.push_back({ { "attempt", a.attempt },
                                   { "url", fmt::format("/images/{}/candidate/{}", id, a.attempt) },
                                   { "verdict", std::string(to_token(a.verdict)) } });
    images["candidates"] = std::move(candidates);
    body["images"] = std::move(images);
    auto ref = to_json(status);
    ref["awaiting_verdict"] = status.awaiting_verdict();
    ref["can_regenerate"] = !status.terminal() && status.attempt_count() < kMaxReferenceAttempts;
    body["reference_generation"] = std::move(ref);
    auto labels = nlohmann::ordered_json::array();
    for (const auto& l: _impl->state.labels)
        if (l.sample_id == id)
            labels.push_back(to_json(l));
    body["labels"] = std::move(labels);
    return { 200, std::move(body), {}, "application/json" };
}

ApiResponse AnnotationService::get_image(const std::string& id, const std::string& role, int attempt)
{
    fs::path path;
    {
        std::lock_guard lock(_impl->mutex);
        auto it = std::ranges::find(_impl->state.samples, id, &EditSample::id);
        if (it == _impl->state.samples.end())
            return error(404, "unknown-sample", fmt::format("no sample {}", id));
        if (role == "source")
            path = _impl->image_root / it->source_image;
        else if (role == "reference")
        {
            if (!it->reference_image)
                return error(404, "image-not-found", "sample has no reference image");
            path = _impl->image_root / *it->reference_image;
        }
        else if (role == "candidate")
        {
            auto const status = _impl->reference_status(id);
            if (attempt < 1 || attempt > status.attempt_count()
                || status.attempts[static_cast<std::size_t>(attempt - 1)].candidate.empty())
                return error(404, "image-not-found", fmt::format("no candidate for attempt {}", attempt));
            path = status.attempts[static_cast<std::size_t>(attempt - 1)].candidate;
        }
        else
            return error(404, "unknown-role", fmt::format("unknown image role {}", role));
    }
    return png_response(path);
}

ApiResponse AnnotationService::post(const std::string& id, const std::string& kind, const std::string& body_text,
                                    const std::string& annotator)
{
    nlohmann::json body;
    try
    {
        body = nlohmann::json::parse(body_text);
    }
    catch (const nlohmann::json::exception& e)
    {
        return error(400, "malformed-json", e.what());
    }
    if (!body.is_object())
        return error(400, "malformed-json", "request body must be a JSON object");

    AnnotationRecord record;
    record.sample_id = id;
    record.annotator_id = body.value("annotator_id", annotator.empty() ? std::string("anonymous") : annotator);

    std::lock_guard lock(_impl->mutex);
    auto it = std::ranges::find(_impl->state.samples, id, &EditSample::id);
    if (it == _impl->state.samples.end())
        return error(404, "unknown-sample", fmt::format("no sample {}", id));
    const auto& sample = *it;

    if (kind == "bbox")
    {
        nlohmann::json raw;
        if (body.contains("bbox"))
            raw = nlohmann::json::array({ body["bbox"] });
        else if (body.contains("bboxes"))
            raw = body["bboxes"];
        else
            return unprocessable("bbox-missing", "expected \"bbox\" or \"bboxes\"");
        if (!raw.is_array() || raw.empty())
            return unprocessable("bbox-missing", "no boxes given");
        std::vector<BBox> boxes;
        for (const auto& b: raw)
        {
            if (!b.is_array() || b.size() != 4)
                return unprocessable("bbox-malformed", "a box is [x1, y1, x2, y2]");
            for (const auto& v: b)
                if (!v.is_number_integer())
                    return unprocessable("bbox-not-integer", "box coordinates must be integer pixels");
            boxes.push_back({ b[0].get<int>(), b[1].get<int>(), b[2].get<int>(), b[3].get<int>() });
        }
        ImageDims dims;
        try
        {
            dims = _impl->source_dims(sample);
        }
        catch (const std::exception& e)
        {
            return error(500, "image-unreadable", e.what());
        }
        auto candidate = sample;
        candidate.target_bboxes = boxes;
        auto const report = validate_sample(candidate, dims);
        for (const auto& v: report.violations)
            if (!v.warning && v.code.starts_with("bbox-"))
                return unprocessable(v.code, v.message);
        auto list = nlohmann::json::array();
        for (const auto& b: boxes)
            list.push_back({ b.x1, b.y1, b.x2, b.y2 });
        record.kind = "bbox";
        record.payload = { { "bboxes", std::move(list) } };
    }
    else if (kind == "metadata")
    {
        nlohmann::json payload = nlohmann::json::object();
        for (const auto& [key, value]: body.items())
        {
            if (key == "annotator_id")
                continue;
            if (std::ranges::find(kMetadataFields, key) == kMetadataFields.end())
                return unprocessable("unknown-field", fmt::format("field '{}' cannot be edited", key));
            if (!value.is_string())
                return unprocessable("field-type", fmt::format("field '{}' must be a string", key));
            if (key == "edit_type" && !parse_edit_type(value.get<std::string>()))
                return unprocessable("unknown-edit-type", fmt::format("unknown edit type '{}'", value.get<std::string>()));
            if ((key == "instruction" || key == "target_object") && value.get<std::string>().empty())
                return unprocessable(key == "instruction" ? "missing-instruction" : "empty-field",
                                     fmt::format("field '{}' cannot be empty", key));
            payload[key] = value;
        }
        if (payload.empty())
            return unprocessable("empty-update", "no editable field given");
        record.kind = "metadata_fix";
        record.payload = std::move(payload);
    }
    else if (kind == "reference_verdict")
    {
        if (!_impl->store)
            return error(409, "no-reference-store", "the service runs without a reference-generation store");
        if (!body.contains("attempt") || !body["attempt"].is_number_integer())
            return unprocessable("attempt-missing", "expected an integer \"attempt\"");
        if (!body.contains("verdict") || !body["verdict"].is_string())
            return unprocessable("unknown-verdict", "expected \"verdict\": accept, regenerate or discard");
        auto const decision = parse_reference_decision(body["verdict"].get<std::string>());
        if (!decision)
            return unprocessable("unknown-verdict", "expected \"verdict\": accept, regenerate or discard");
        auto const attempt = body["attempt"].get<int>();
        auto status = _impl->reference_status(id);
        auto copy = sample;
        try
        {
            apply_reference_decision(copy, status, attempt, *decision);
        }
        catch (const StaleAttemptError& e)
        {
            nlohmann::ordered_json current = to_json(status);
            return { 409,
                     { { "error", "stale-attempt" }, { "message", e.what() }, { "reference_generation", current } },
                     {},
                     "application/json" };
        }
        _impl->store->save("genref", id, to_json(status));
        record.kind = "reference_verdict";
        record.payload = { { "attempt", attempt },
                           { "decision", std::string(to_token(*decision)) },
                           { "candidate", status.attempts.back().candidate } };
    }
    else if (kind == "labels")
    {
        if (!body.contains("criterion") || !body["criterion"].is_string() || !parse_criterion(body["criterion"].get<std::string>()))
            return unprocessable("unknown-criterion", "criterion must be \"if\" or \"vc\"");
        auto const criterion = *parse_criterion(body["criterion"].get<std::string>());
        if (!body.contains("label") || !body["label"].is_string())
            return unprocessable("label-not-in-criterion", "label must be one of the criterion's rubric names");
        auto const label = RubricLabel::parse(criterion, body["label"].get<std::string>());
        if (!label)
            return unprocessable("label-not-in-criterion",
                                 fmt::format("'{}' is not a {} rubric label", body["label"].get<std::string>(),
                                             to_token(criterion)));
        auto const target_index = body.value("target_index", 0);
        if (target_index < 0
            || (!sample.target_bboxes.empty() && target_index >= static_cast<int>(sample.target_bboxes.size())))
            return unprocessable("target-index-out-of-range", fmt::format("no target {}", target_index));
        record.kind = "rubric_label";
        record.payload = { { "model_id", body.value("model_id", std::string {}) },
                           { "criterion", std::string(to_token(criterion)) },
                           { "label", std::string(label->name()) },
                           { "target_index", target_index } };
    }
    else
        return error(404, "unknown-endpoint", fmt::format("no endpoint {}", kind));

    record.timestamp = _impl->options.clock();
    auto const recorded = to_json(record);
    _impl->commit(std::move(record));
    auto updated = std::ranges::find(_impl->state.samples, id, &EditSample::id);
    return { 200, { { "sample", to_json(*updated) }, { "record", recorded } }, {}, "application/json" };
}

ApiResponse AnnotationService::list_runs()
{
    auto runs = nlohmann::ordered_json::array();
    if (_impl->options.runs && fs::is_directory(*_impl->options.runs))
    {
        std::vector<fs::path> dirs;
        for (const auto& entry: fs::directory_iterator(*_impl->options.runs))
            if (entry.is_directory() && fs::exists(entry.path() / "manifest.json"))
                dirs.push_back(entry.path());
        std::ranges::sort(dirs);
        for (const auto& dir: dirs)
        {
            try
            {
                std::ifstream in(dir / "manifest.json");
                auto const m = manifest_from_json(nlohmann::json::parse(in));
                runs.push_back({ { "run_id", dir.filename().string() },
                                 { "mode", std::string(to_token(m.mode)) },
                                 { "models", m.models },
                                 { "finished", !m.finished_at.empty() },
                                 { "counts", { { "completed", m.counts.completed }, { "failed", m.counts.failed } } },
                                 { "total_episodes", m.total_episodes } });
            }
            catch (const std::exception& e)
            {
                spdlog::warn("skipping run {}: {}", dir.string(), e.what());
            }
        }
    }
    return { 200, { { "runs", std::move(runs) } }, {}, "application/json" };
}

ApiResponse AnnotationService::run_results(const std::string& run_id)
{
    static const std::regex kRunId(R"([A-Za-z0-9_.\-]+)");
    if (!_impl->options.runs || !std::regex_match(run_id, kRunId) || run_id == "." || run_id == "..")
        return error(404, "unknown-run", fmt::format("no run {}", run_id));
    auto const dir = *_impl->options.runs / run_id;
    if (!fs::exists(dir / "manifest.json"))
        return error(404, "unknown-run", fmt::format("no run {}", run_id));
    try
    {
        std::ifstream in(dir / "manifest.json");
        auto const manifest = manifest_from_json(nlohmann::json::parse(in));
        auto const verdicts =
            fs::exists(dir / "verdicts.jsonl") ? load_verdicts(dir / "verdicts.jsonl") : std::vector<VerdictRecord> {};
        auto list = nlohmann::ordered_json::array();
        for (const auto& v: verdicts)
            list.push_back(to_json(v));
        nlohmann::ordered_json body;
        body["manifest"] = to_json(manifest);
        body["scores"] = to_json(aggregate(verdicts));
        body["verdicts"] = std::move(list);
        return { 200, std::move(body), {}, "application/json" };
    }
    catch (const std::exception& e)
    {
        return error(500, "run-unreadable", e.what());
    }
}

AnnotationState AnnotationService::state() const
{
    std::lock_guard lock(_impl->mutex);
    return _impl->state;
}

std::vector<AnnotationRecord> AnnotationService::log() const
{
    std::lock_guard lock(_impl->mutex);
    return _impl->records;
}

namespace
{

void send(httplib::Response& res, const ApiResponse& r)
{
    res.status = r.status;
    if (!r.bytes.empty())
        res.set_content(r.bytes, r.content_type);
    else
        res.set_content(r.body.dump(), r.content_type);
}

bool token_matches(std::string_view given, std::string_view expected)
{
    if (given.size() != expected.size())
        return false;
    unsigned diff = 0;
    for (std::size_t i = 0; i < given.size(); ++i)
        diff |= static_cast<unsigned>(given[i] ^ expected[i]);
    return diff == 0;
}

} // namespace

namespace
{

void install_routes(httplib::Server& server, AnnotationService& service, const std::string& token)
{
    if (!token.empty())
        server.set_pre_routing_handler([token](const httplib::Request& req, httplib::Response& res) {
            auto const header = req.get_header_value("Authorization");
            constexpr std::string_view kPrefix = "Bearer ";
            if (header.starts_with(kPrefix) && token_matches(std::string_view(header).substr(kPrefix.size()), token))
                return httplib::Server::HandlerResponse::Unhandled;
            send(res, error(401, "unauthorized", "missing or wrong bearer token"));
            return httplib::Server::HandlerResponse::Handled;
        });

    server.Get("/samples", [&service](const httplib::Request& req, httplib::Response& res) {
        std::optional<std::string> status;
        std::optional<std::uint64_t> seed;
        if (req.has_param("status"))
            status = req.get_param_value("status");
        if (req.has_param("shuffle_seed"))
        {
            try
            {
                seed = std::stoull(req.get_param_value("shuffle_seed"));
            }
            catch (const std::exception&)
            {
                send(res, unprocessable("bad-seed", "shuffle_seed must be an unsigned integer"));
                return;
            }
        }
        send(res, service.list_samples(status, seed));
    });
    server.Get(R"(/samples/([^/]+))", [&service](const httplib::Request& req, httplib::Response& res) {
        send(res, service.get_sample(req.matches[1]));
    });
    server.Get(R"(/images/([^/]+)/(source|reference))", [&service](const httplib::Request& req, httplib::Response& res) {
        send(res, service.get_image(req.matches[1], req.matches[2], 0));
    });
    server.Get(R"(/images/([^/]+)/candidate/(\d{1,3}))", [&service](const httplib::Request& req, httplib::Response& res) {
        send(res, service.get_image(req.matches[1], "candidate", std::stoi(req.matches[2])));
    });
    server.Post(R"(/samples/([^/]+)/(bbox|metadata|reference_verdict|labels))",
                [&service](const httplib::Request& req, httplib::Response& res) {
                    send(res, service.post(req.matches[1], req.matches[2], req.body,
                                           req.get_header_value("X-Annotator-Id")));
                });
    server.Get("/runs", [&service](const httplib::Request&, httplib::Response& res) { send(res, service.list_runs()); });
    server.Get(R"(/runs/([^/]+)/results)", [&service](const httplib::Request& req, httplib::Response& res) {
        send(res, service.run_results(req.matches[1]));
    });
    server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        std::string what = "internal error";
        try
        {
            std::rethrow_exception(ep);
        }
        catch (const std::exception& e)
        {
            what = e.what();
        }
        catch (...)
        {
        }
        spdlog::error("request failed: {}", what);
        send(res, error(500, "internal", what));
    });
}

} // namespace

int AnnotationService::start(const std::string& host, int port)
{
    install_routes(_impl->server, *this, _impl->options.bearer_token);
    int bound = port;
    if (port == 0)
        bound = _impl->server.bind_to_any_port(host);
    else if (!_impl->server.bind_to_port(host, port))
        bound = -1;
    if (bound < 0)
        throw std::runtime_error(fmt::format("cannot bind {}:{}", host, port));
    _impl->thread = std::thread([this] { _impl->server.listen_after_bind(); });
    _impl->server.wait_until_ready();
    spdlog::info("annotation service listening on {}:{}", host, bound);
    return bound;
}

void AnnotationService::serve(const std::string& host, int port)
{
    install_routes(_impl->server, *this, _impl->options.bearer_token);
    spdlog::info("annotation service listening on {}:{}", host, port);
    if (!_impl->server.listen(host, port))
        throw std::runtime_error(fmt::format("cannot listen on {}:{}", host, port));
}

void AnnotationService::stop()
{
    if (_impl->server.is_running())
        _impl->server.stop();
    if (_impl->thread.joinable())
        _impl->thread.join();
}

} // namespace tinyedit
