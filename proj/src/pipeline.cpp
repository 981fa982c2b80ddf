// SPDX-License-Identifier: Apache-2.0
#include "tinyedit/pipeline.hpp"

#include "tinyedit/prompts.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <fstream>
#include <random>
#include <regex>

namespace tinyedit
{

namespace
{

constexpr std::array<std::pair<QuestionType, std::string_view>, 7> kQuestionTypes { {
    { QuestionType::Location, "location" },
    { QuestionType::Color, "color" },
    { QuestionType::Material, "material" },
    { QuestionType::Count, "count" },
    { QuestionType::Shape, "shape" },
    { QuestionType::Object, "object" },
    { QuestionType::OCR, "ocr" },
} };

std::string trim(std::string_view s)
{
    auto const b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos)
        return {};
    auto const e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> string_or_list(const nlohmann::json& j, const char* key)
{
    if (!j.contains(key) || j[key].is_null())
        return {};
    auto const& v = j[key];
    if (v.is_string())
        return v.get<std::string>().empty() ? std::vector<std::string> {} : std::vector<std::string> { v.get<std::string>() };
    if (v.is_array())
    {
        std::vector<std::string> out;
        for (const auto& item: v)
        {
            if (!item.is_string())
                throw DatasetError(fmt::format("'{}' entries must be strings", key));
            out.push_back(item.get<std::string>());
        }
        return out;
    }
    throw DatasetError(fmt::format("'{}' must be a string or a list of strings", key));
}

char option_letter(std::size_t i)
{
    return static_cast<char>('A' + i);
}

/// First balanced JSON object in a free-text reply.
std::optional<nlohmann::json> first_json_object(std::string_view reply)
{
    for (auto start = reply.find('{'); start != std::string_view::npos; start = reply.find('{', start + 1))
    {
        int depth = 0;
        bool in_string = false;
        bool escaped = false;
        for (auto i = start; i < reply.size(); ++i)
        {
            auto const c = reply[i];
            if (in_string)
            {
                if (escaped)
                    escaped = false;
                else if (c == '\\')
                    escaped = true;
                else if (c == '"')
                    in_string = false;
                continue;
            }
            if (c == '"')
                in_string = true;
            else if (c == '{')
                ++depth;
            else if (c == '}' && --depth == 0)
            {
                auto parsed = nlohmann::json::parse(reply.substr(start, i - start + 1), nullptr, false);
                if (!parsed.is_discarded() && parsed.is_object())
                    return parsed;
                break;
            }
        }
    }
    return std::nullopt;
}

} // namespace

std::string_view to_token(QuestionType type)
{
    for (auto [t, name]: kQuestionTypes)
        if (t == type)
            return name;
    return "object";
}

std::optional<QuestionType> parse_question_type(std::string_view token)
{
    for (auto [t, name]: kQuestionTypes)
        if (name == token)
            return t;
    return std::nullopt;
}

EditType edit_type_for(QuestionType type)
{
    switch (type)
    {
        case QuestionType::Location: return EditType::Removal;
        case QuestionType::Color: return EditType::Color;
        case QuestionType::Material: return EditType::Material;
        case QuestionType::Count: return EditType::Count;
        case QuestionType::Shape: return EditType::Shape;
        case QuestionType::Object: return EditType::Replacement;
        case QuestionType::OCR: return EditType::OCR;
    }
    return EditType::Replacement;
}

CounterfactualMetadata metadata_from_json(const nlohmann::json& j)
{
    if (!j.is_object())
        throw DatasetError("metadata must be a JSON object");
    auto text = [&](const char* key) {
        if (!j.contains(key) || j[key].is_null())
            return std::string {};
        if (!j[key].is_string())
            throw DatasetError(fmt::format("'{}' must be a string", key));
        return trim(j[key].get<std::string>());
    };
    CounterfactualMetadata m;
    m.q_type = text("q_type");
    std::ranges::transform(m.q_type, m.q_type.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    m.prompt_clean = text("prompt_clean");
    m.prompt_adv = text("prompt_adv");
    m.edit_ops = string_or_list(j, "edit_ops");
    for (auto& op: m.edit_ops)
        op = trim(op);
    auto const instructions = string_or_list(j, "edit_instruction");
    for (const auto& s: instructions)
        m.edit_instruction += (m.edit_instruction.empty() ? "" : " ") + trim(s);
    m.modified_object = text("modified_object");
    return m;
}

nlohmann::ordered_json to_json(const CounterfactualMetadata& m)
{
    nlohmann::ordered_json j;
    j["q_type"] = m.q_type;
    j["prompt_clean"] = m.prompt_clean;
    j["prompt_adv"] = m.prompt_adv;
    j["edit_ops"] = m.edit_ops;
    j["edit_instruction"] = m.edit_instruction;
    j["modified_object"] = m.modified_object;
    return j;
}

ValidationReport validate_metadata(const CounterfactualMetadata& m)
{
    ValidationReport report;
    auto const type = parse_question_type(m.q_type);
    if (!type)
        report.add("unknown-q-type", fmt::format("q_type '{}' is not one of location, color, material, count, shape, "
                                                 "object, ocr",
                                                 m.q_type));
    for (auto [field, value]: { std::pair<const char*, const std::string*> { "prompt_clean", &m.prompt_clean },
                                { "prompt_adv", &m.prompt_adv },
                                { "edit_instruction", &m.edit_instruction },
                                { "modified_object", &m.modified_object } })
        if (value->empty())
            report.add("empty-field", fmt::format("{} is empty", field));

    if (m.edit_ops.size() != 1)
        report.add("edit-ops-count", fmt::format("exactly one edit op is required, got {}", m.edit_ops.size()));

    auto const has_remove = std::ranges::find(m.edit_ops, "remove_object") != m.edit_ops.end();
    if (type == QuestionType::Location)
    {
        if (m.edit_ops.size() != 1 || m.edit_ops.front() != "remove_object")
            report.add("location-requires-remove", "location questions must use edit_ops [\"remove_object\"]");
    }
    else if (type)
    {
        if (has_remove)
            report.add("remove-only-for-location", "remove_object is only allowed for location questions");
        else if (m.edit_ops.size() == 1)
        {
            auto const& op = m.edit_ops.front();
            auto const ok = (type == QuestionType::Color && op == "alter_color")
                            || (type == QuestionType::Material && op == "alter_material")
                            || (type == QuestionType::Shape && op == "alter_shape")
                            || (type == QuestionType::Object && op == "replace_object")
                            || (type == QuestionType::Count && op == "add_object")
                            || (type == QuestionType::OCR && (op == "alter_text" || op == "text_flip"));
            if (!ok)
                report.add("op-type-mismatch", fmt::format("edit op '{}' does not fit q_type '{}'", op, m.q_type));
        }
    }

    if (!m.prompt_clean.empty() && m.prompt_clean == m.prompt_adv)
        report.add("captions-identical", "prompt_clean and prompt_adv must differ");

    if (type == QuestionType::Count)
    {
        static const std::regex from_to(R"(from\s+(\d+)\s+to\s+(\d+))", std::regex::icase);
        std::smatch match;
        if (std::regex_search(m.edit_instruction, match, from_to) && std::stol(match[2]) < std::stol(match[1]))
            report.add("count-reduction", "count edit reduces the number of objects while the op is add_object", true);
    }
    return report;
}

CounterfactualMetadata canonicalize(CounterfactualMetadata m)
{
    for (auto& op: m.edit_ops)
        if (op == "alter_text")
            op = "text_flip";
    return m;
}

std::uint64_t sample_seed(std::uint64_t run_seed, std::string_view sample_id)
{
    // FNV-1a over the id, mixed with the run seed.
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c: sample_id)
    {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h ^ (run_seed + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2));
}

int choose_negative_option(const RawVQASample& raw, std::uint64_t seed)
{
    std::vector<int> wrong;
    for (int i = 0; i < static_cast<int>(raw.options.size()); ++i)
        if (i != raw.answer_key)
            wrong.push_back(i);
    if (wrong.empty())
        throw std::invalid_argument(fmt::format("sample {}: no incorrect option to use", raw.id));
    std::mt19937_64 rng(seed);
    return wrong[static_cast<std::size_t>(rng() % wrong.size())];
}

std::string render_synthesis_prompt(const RawVQASample& raw, int negative_option)
{
    std::string options;
    for (std::size_t i = 0; i < raw.options.size(); ++i)
        options += fmt::format("{}({}) {}", i ? ", " : "", option_letter(i), raw.options[i]);
    auto text = prompts::render(prompts::get(prompts::kCounterfactualSynthesis),
                                { { prompts::kQuestionSlot, raw.question },
                                  { prompts::kOptionsSlot, options },
                                  { prompts::kAnswerKeySlot,
                                    std::string(1, option_letter(static_cast<std::size_t>(raw.answer_key))) } });
    text += fmt::format("\nIncorrect Answer Key To Use: [{}]", option_letter(static_cast<std::size_t>(negative_option)));
    return text;
}

SynthesisResult synthesize_metadata(const RawVQASample& raw, ChatBackend& llm, std::uint64_t seed)
{
    auto const raw_report = validate_raw_sample(raw, true);
    if (!raw_report.ok())
        throw SynthesisError("invalid-raw-sample", raw_report.summary(), raw_report);

    SynthesisResult result;
    result.seed = seed;
    result.negative_option = choose_negative_option(raw, seed);
    std::vector<ChatMessage> history { ChatMessage::text("user", render_synthesis_prompt(raw, result.negative_option)) };

    std::string last_problem;
    ValidationReport last_report;
    std::string last_code;
    for (int attempt = 1; attempt <= 2; ++attempt)
    {
        result.attempts = attempt;
        auto const reply = llm.complete(history);
        auto const parsed = first_json_object(reply);
        if (!parsed)
        {
            last_code = "unparseable";
            last_problem = "the reply did not contain a JSON object";
            last_report = {};
        }
        else
        {
            try
            {
                auto metadata = metadata_from_json(*parsed);
                last_report = validate_metadata(metadata);
                if (last_report.ok())
                {
                    result.metadata = canonicalize(std::move(metadata));
                    return result;
                }
                last_code = last_report.violations.front().code;
                for (const auto& v: last_report.violations)
                    if (!v.warning)
                    {
                        last_code = v.code;
                        break;
                    }
                last_problem = last_report.summary();
            }
            catch (const DatasetError& e)
            {
                last_code = "unparseable";
                last_problem = e.what();
                last_report = {};
            }
        }
        history.push_back(ChatMessage::text("assistant", reply));
        history.push_back(ChatMessage::text(
            "user", fmt::format("The previous output was rejected: {}. Output only the corrected strict JSON.", last_problem)));
    }
    throw SynthesisError(last_code, fmt::format("sample {}: {}", raw.id, last_problem), last_report);
}

EditSample draft_sample(const RawVQASample& raw, const SynthesisResult& result)
{
    EditSample s;
    s.id = raw.id;
    s.source_image = raw.image;
    s.source_caption = result.metadata.prompt_clean;
    s.reference_caption = result.metadata.prompt_adv;
    s.target_object = result.metadata.modified_object;
    s.edit_type = edit_type_for(*parse_question_type(result.metadata.q_type));
    s.instruction = result.metadata.edit_instruction;
    s.provenance = { raw.question, raw.options, raw.answer_key, result.negative_option, result.seed };
    s.status = SampleStatus::Draft;
    return s;
}

std::string parse_extraction_reply(std::string_view reply)
{
    static const std::regex marker(R"(\[Result\]\s*:\s*([^\n]*))", std::regex::icase);
    std::match_results<std::string_view::const_iterator> m;
    if (!std::regex_search(reply.begin(), reply.end(), m, marker))
        throw ExtractionError("reply has no [Result]: line");
    auto name = trim(m[1].str());
    while (!name.empty() && (name.back() == '.' || name.back() == '\'' || name.back() == '`' || name.back() == '"'))
        name.pop_back();
    while (!name.empty() && (name.front() == '\'' || name.front() == '`' || name.front() == '"' || name.front() == '<'))
        name.erase(name.begin());
    if (!name.empty() && name.back() == '>')
        name.pop_back();
    name = trim(name);
    if (name.empty())
        throw ExtractionError("[Result]: line is empty");
    return name;
}

std::string extract_target_name(std::string_view instruction, ChatBackend& llm)
{
    if (trim(instruction).empty())
        throw std::invalid_argument("extract_target_name: empty instruction");
    auto const prompt = prompts::render(prompts::get(prompts::kTargetExtraction),
                                        { { prompts::kExtractionSlot, std::string(instruction) } });
    std::vector<ChatMessage> history { ChatMessage::text("user", prompt) };
    return parse_extraction_reply(llm.complete(history));
}

std::string_view to_token(AttemptVerdict verdict)
{
    switch (verdict)
    {
        case AttemptVerdict::Pending: return "pending";
        case AttemptVerdict::Accept: return "accept";
        case AttemptVerdict::Reject: return "reject";
    }
    return "pending";
}

std::optional<AttemptVerdict> parse_attempt_verdict(std::string_view token)
{
    for (auto v: { AttemptVerdict::Pending, AttemptVerdict::Accept, AttemptVerdict::Reject })
        if (to_token(v) == token)
            return v;
    return std::nullopt;
}

std::string_view to_token(ReferenceGenStatus::Final final)
{
    switch (final)
    {
        case ReferenceGenStatus::Final::Pending: return "pending";
        case ReferenceGenStatus::Final::Accepted: return "accepted";
        case ReferenceGenStatus::Final::Discarded: return "discarded";
    }
    return "pending";
}

bool ReferenceGenStatus::awaiting_verdict() const
{
    return !attempts.empty() && attempts.back().verdict == AttemptVerdict::Pending;
}

bool ReferenceGenStatus::needs_candidate() const
{
    return !terminal() && !awaiting_verdict() && attempt_count() < kMaxReferenceAttempts;
}

void ReferenceGenStatus::add_attempt(std::string candidate, std::string error)
{
    if (!needs_candidate())
        throw StaleAttemptError("no further reference attempt is allowed in this state");
    ReferenceAttemptRecord record;
    record.attempt = attempt_count() + 1;
    record.candidate = std::move(candidate);
    record.error = std::move(error);
    auto const failed = !record.error.empty();
    attempts.push_back(std::move(record));
    if (failed)
        apply_verdict(attempts.back().attempt, false);
}

void ReferenceGenStatus::apply_verdict(int attempt, bool accept)
{
    if (!awaiting_verdict() || attempts.back().attempt != attempt)
        throw StaleAttemptError(fmt::format("attempt {} is not awaiting a verdict", attempt));
    attempts.back().verdict = accept ? AttemptVerdict::Accept : AttemptVerdict::Reject;
    if (accept)
        final = Final::Accepted;
    else if (attempt_count() >= kMaxReferenceAttempts)
        final = Final::Discarded;
}

void ReferenceGenStatus::discard(int attempt)
{
    apply_verdict(attempt, false);
    final = Final::Discarded;
}

nlohmann::ordered_json to_json(const ReferenceGenStatus& status)
{
    nlohmann::ordered_json j;
    auto attempts = nlohmann::ordered_json::array();
    for (const auto& a: status.attempts)
    {
        nlohmann::ordered_json aj;
        aj["attempt"] = a.attempt;
        aj["candidate"] = a.candidate;
        aj["verdict"] = std::string(to_token(a.verdict));
        if (!a.error.empty())
            aj["error"] = a.error;
        attempts.push_back(std::move(aj));
    }
    j["attempts"] = std::move(attempts);
    j["final"] = std::string(to_token(status.final));
    return j;
}

ReferenceGenStatus reference_status_from_json(const nlohmann::json& j)
{
    ReferenceGenStatus status;
    for (const auto& aj: j.at("attempts"))
    {
        ReferenceAttemptRecord a;
        a.attempt = aj.at("attempt").get<int>();
        a.candidate = aj.value("candidate", std::string {});
        auto const verdict = parse_attempt_verdict(aj.value("verdict", std::string { "pending" }));
        if (!verdict)
            throw DatasetError("unknown attempt verdict");
        a.verdict = *verdict;
        a.error = aj.value("error", std::string {});
        status.attempts.push_back(std::move(a));
    }
    auto const final = j.value("final", std::string { "pending" });
    status.final = final == "accepted"    ? ReferenceGenStatus::Final::Accepted
                   : final == "discarded" ? ReferenceGenStatus::Final::Discarded
                                          : ReferenceGenStatus::Final::Pending;
    if (status.attempt_count() > kMaxReferenceAttempts)
        throw DatasetError("more than three reference attempts recorded");
    return status;
}

BBox reference_edit_region(const EditSample& sample, ImageDims dims, const ExpansionParams& params)
{
    if (sample.target_bboxes.empty())
        throw std::invalid_argument(fmt::format("sample {}: no target boxes", sample.id));
    return expand_bbox(enclosing_box(sample.target_bboxes), dims, params);
}

std::optional<Image> make_reference_candidate(const EditSample& sample, const Image& source, EditorBackend& editor,
                                              const ExpansionParams& params, std::string& error)
{
    auto const region = reference_edit_region(sample, source.dims(), params);
    try
    {
        auto const edited = editor.edit(crop(source, region), sample.instruction);
        if (edited.empty())
            throw BackendError(BackendError::Kind::BadResponse, "editor returned an empty image");
        return paste_back(edited, source, region);
    }
    catch (const std::exception& e)
    {
        error = e.what();
        return std::nullopt;
    }
}

ReferenceResult generate_reference(const EditSample& sample, const Image& source, EditorBackend& editor,
                                   Verifier& verifier, const ExpansionParams& params)
{
    ReferenceResult result;
    result.edit_region = reference_edit_region(sample, source.dims(), params);
    while (result.status.needs_candidate())
    {
        std::string error;
        auto candidate = make_reference_candidate(sample, source, editor, params, error);
        result.status.add_attempt(candidate ? fmt::format("attempt{}", result.status.attempt_count() + 1) : "", error);
        if (candidate)
        {
            auto const attempt = result.status.attempt_count();
            auto const accepted = verifier.accept(sample, *candidate, attempt);
            result.status.apply_verdict(attempt, accepted);
            if (accepted)
                result.reference = candidate;
        }
        result.candidates.push_back(std::move(candidate));
    }
    return result;
}

PipelineStore::PipelineStore(std::filesystem::path root): _root(std::move(root)) {}

std::filesystem::path PipelineStore::record_path(std::string_view stage, std::string_view sample_id) const
{
    return _root / std::string(stage) / (std::string(sample_id) + ".json");
}

std::filesystem::path PipelineStore::artifact_path(std::string_view stage, std::string_view sample_id,
                                                   std::string_view name) const
{
    return _root / std::string(stage) / std::string(sample_id) / std::string(name);
}

std::optional<nlohmann::json> PipelineStore::load(std::string_view stage, std::string_view sample_id) const
{
    auto const path = record_path(stage, sample_id);
    std::ifstream in(path);
    if (!in)
        return std::nullopt;
    auto parsed = nlohmann::json::parse(in, nullptr, false);
    if (parsed.is_discarded())
        throw DatasetError(fmt::format("corrupt pipeline record {}", path.string()));
    return parsed;
}

void PipelineStore::save(std::string_view stage, std::string_view sample_id, const nlohmann::ordered_json& record) const
{
    write_file_atomic(record_path(stage, sample_id), record.dump(2) + "\n");
}

StageStats run_synthesis(std::span<const RawVQASample> raw, ChatBackend& llm, const PipelineStore& store,
                         std::uint64_t run_seed, std::vector<EditSample>& drafts)
{
    StageStats stats;
    for (const auto& sample: raw)
    {
        if (auto const existing = store.load("synth", sample.id))
        {
            ++stats.skipped;
            if (existing->value("status", "") == "ok")
            {
                SynthesisResult result;
                result.metadata = metadata_from_json(existing->at("metadata"));
                result.negative_option = existing->at("negative_option").get<int>();
                result.seed = existing->at("seed").get<std::uint64_t>();
                drafts.push_back(draft_sample(sample, result));
            }
            continue;
        }
        nlohmann::ordered_json record;
        record["sample_id"] = sample.id;
        try
        {
            auto const result = synthesize_metadata(sample, llm, sample_seed(run_seed, sample.id));
            record["status"] = "ok";
            record["metadata"] = to_json(result.metadata);
            record["negative_option"] = result.negative_option;
            record["seed"] = result.seed;
            record["attempts"] = result.attempts;
            drafts.push_back(draft_sample(sample, result));
            ++stats.processed;
        }
        catch (const SynthesisError& e)
        {
            record["status"] = "failed";
            record["error"] = e.code();
            record["message"] = e.what();
            ++stats.failed;
        }
        catch (const BackendError& e)
        {
            // Not recorded: a transport failure should be retried on the next run.
            spdlog::warn("synthesis for {} failed: {}", sample.id, e.what());
            ++stats.failed;
            continue;
        }
        store.save("synth", sample.id, record);
    }
    return stats;
}

namespace
{

ReferenceGenStatus load_status(const PipelineStore& store, std::string_view sample_id)
{
    if (auto const j = store.load("genref", sample_id))
        return reference_status_from_json(*j);
    return {};
}

} // namespace

StageStats run_reference_generation(std::span<const EditSample> samples, const std::filesystem::path& image_root,
                                    EditorBackend& editor, const PipelineStore& store, const ExpansionParams& params)
{
    StageStats stats;
    for (const auto& sample: samples)
    {
        auto status = load_status(store, sample.id);
        if (sample.status != SampleStatus::Draft || sample.target_bboxes.empty() || !status.needs_candidate())
        {
            ++stats.skipped;
            continue;
        }
        Image source;
        try
        {
            source = read_image(image_root / sample.source_image);
        }
        catch (const std::exception& e)
        {
            spdlog::warn("genref {}: {}", sample.id, e.what());
            ++stats.failed;
            continue;
        }
        // Editor failures count as rejected attempts, so keep going until a
        // candidate awaits review or the attempts run out.
        while (status.needs_candidate())
        {
            std::string error;
            auto const candidate = make_reference_candidate(sample, source, editor, params, error);
            std::string path;
            if (candidate)
            {
                auto const file = store.artifact_path("genref", sample.id,
                                                      fmt::format("attempt{}.png", status.attempt_count() + 1));
                write_png(*candidate, file);
                path = std::filesystem::absolute(file).string();
            }
            status.add_attempt(path, error);
            store.save("genref", sample.id, to_json(status));
            if (!error.empty())
                ++stats.failed;
            else
                ++stats.processed;
        }
    }
    return stats;
}

std::vector<PendingCandidate> pending_candidates(std::span<const EditSample> samples, const PipelineStore& store)
{
    std::vector<PendingCandidate> out;
    for (const auto& sample: samples)
    {
        auto const status = load_status(store, sample.id);
        if (status.awaiting_verdict())
            out.push_back({ sample.id, status.attempts.back().attempt, status.attempts.back().candidate });
    }
    return out;
}

std::string_view to_token(ReferenceDecision decision)
{
    switch (decision)
    {
        case ReferenceDecision::Accept: return "accept";
        case ReferenceDecision::Regenerate: return "regenerate";
        case ReferenceDecision::Discard: return "discard";
    }
    return "regenerate";
}

std::optional<ReferenceDecision> parse_reference_decision(std::string_view token)
{
    if (token == "reject")
        return ReferenceDecision::Regenerate;
    for (auto d: { ReferenceDecision::Accept, ReferenceDecision::Regenerate, ReferenceDecision::Discard })
        if (to_token(d) == token)
            return d;
    return std::nullopt;
}

void apply_reference_decision(EditSample& sample, ReferenceGenStatus& status, int attempt, ReferenceDecision decision)
{
    if (decision == ReferenceDecision::Discard)
        status.discard(attempt);
    else
        status.apply_verdict(attempt, decision == ReferenceDecision::Accept);
    if (status.final == ReferenceGenStatus::Final::Accepted)
    {
        sample.reference_image = status.attempts.back().candidate;
        sample.status = SampleStatus::Verified;
    }
    else if (status.final == ReferenceGenStatus::Final::Discarded)
        sample.status = SampleStatus::Discarded;
}

void apply_reference_verdict(EditSample& sample, const PipelineStore& store, int attempt, ReferenceDecision decision)
{
    auto status = load_status(store, sample.id);
    apply_reference_decision(sample, status, attempt, decision);
    store.save("genref", sample.id, to_json(status));
}

} // namespace tinyedit
