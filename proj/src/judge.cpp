// SPDX-License-Identifier: Apache-2.0
#include "tinyedit/judge.hpp"

#include <fmt/format.h>

namespace tinyedit
{

std::string_view to_token(FailureReason reason)
{
    switch (reason)
    {
        case FailureReason::TurnLimit: return "turn_limit";
        case FailureReason::Protocol: return "protocol";
        case FailureReason::Backend: return "backend";
        case FailureReason::MissingInput: return "missing_input";
    }
    return "backend";
}

std::optional<FailureReason> parse_failure_reason(std::string_view token)
{
    for (auto r: { FailureReason::TurnLimit, FailureReason::Protocol, FailureReason::Backend, FailureReason::MissingInput })
        if (to_token(r) == token)
            return r;
    return std::nullopt;
}

nlohmann::ordered_json to_json(const VerdictRecord& v)
{
    nlohmann::ordered_json j;
    j["sample_id"] = v.sample_id;
    j["model_id"] = v.model_id;
    j["criterion"] = std::string(to_token(v.criterion));
    j["mode"] = std::string(to_token(v.mode));
    j["edit_type"] = std::string(to_token(v.edit_type));
    j["label"] = v.label ? nlohmann::ordered_json(std::string(v.label->name())) : nlohmann::ordered_json(nullptr);
    j["points"] = v.label ? nlohmann::ordered_json(v.label->points()) : nlohmann::ordered_json(nullptr);
    j["turns_used"] = v.turns_used;
    j["failed"] = v.failed();
    j["failure"] = v.failure ? nlohmann::ordered_json(std::string(to_token(*v.failure))) : nlohmann::ordered_json(nullptr);
    if (!v.detail.empty())
        j["detail"] = v.detail;
    return j;
}

VerdictRecord verdict_from_json(const nlohmann::json& j)
{
    try
    {
        VerdictRecord v;
        v.sample_id = j.at("sample_id").get<std::string>();
        v.model_id = j.value("model_id", std::string {});
        auto const criterion = parse_criterion(j.at("criterion").get<std::string>());
        auto const mode = parse_eval_mode(j.value("mode", std::string { "oracle" }));
        auto const type = parse_edit_type(j.at("edit_type").get<std::string>());
        if (!criterion || !mode || !type)
            throw DatasetError("verdict has an unknown criterion, mode or edit_type");
        v.criterion = *criterion;
        v.mode = *mode;
        v.edit_type = *type;
        if (j.contains("points") && j["points"].is_number_integer())
            v.label = RubricLabel::from_points(v.criterion, j["points"].get<int>());
        else if (j.contains("label") && j["label"].is_string())
        {
            v.label = RubricLabel::parse(v.criterion, j["label"].get<std::string>());
            if (!v.label)
                throw DatasetError(fmt::format("verdict label '{}' is not in the rubric", j["label"].get<std::string>()));
        }
        v.turns_used = j.value("turns_used", 0);
        if (j.contains("failure") && j["failure"].is_string())
        {
            v.failure = parse_failure_reason(j["failure"].get<std::string>());
            if (!v.failure)
                throw DatasetError("verdict has an unknown failure reason");
        }
        v.detail = j.value("detail", std::string {});
        if (v.failed() == v.label.has_value())
            throw DatasetError("verdict must carry a label exactly when it did not fail");
        return v;
    }
    catch (const nlohmann::json::exception& e)
    {
        throw DatasetError(fmt::format("malformed verdict: {}", e.what()));
    }
}

namespace
{

Image aligned_to(const Image& image, ImageDims dims)
{
    return resize_bicubic(image, dims.width, dims.height);
}

ChatMessage user_message(std::string text, const std::vector<Image>& images)
{
    ChatMessage m = ChatMessage::text("user", std::move(text));
    for (const auto& img: images)
        m.add_image(std::make_shared<const Image>(img));
    return m;
}

} // namespace

PreparedPrompt build_prompt(EvalMode mode, Criterion criterion, const EditSample& sample, const SampleImages& images,
                            std::size_t target_index, const ExpansionParams& expansion)
{
    if (images.source.empty() || images.edited.empty())
        throw ConfigurationError(fmt::format("sample {}: source and edited images are required", sample.id));

    auto const text = prompts::render(prompts::get(prompts::judge_template_name(mode, criterion)),
                                      { { prompts::kInstructionSlot, sample.instruction } });
    PreparedPrompt out;
    if (tool_capable(mode, criterion))
        out.messages.push_back(ChatMessage::text("system", std::string(prompts::get(prompts::kToolSystem))));

    if (mode != EvalMode::OracleGuided)
    {
        out.messages.push_back(user_message(text, { images.source, images.edited }));
        out.tool_images = EpisodeImageSet(images.source, images.edited);
        return out;
    }

    if (!images.reference || images.reference->empty())
        throw ConfigurationError(fmt::format("sample {}: oracle mode needs a reference image", sample.id));
    if (sample.target_bboxes.empty())
        throw ConfigurationError(fmt::format("sample {}: oracle mode needs target boxes", sample.id));
    auto const dims = images.source.dims();
    auto const edited = aligned_to(images.edited, dims);
    auto const reference = aligned_to(*images.reference, dims);
    for (const auto& box: sample.target_bboxes)
        if (!box.within(dims))
            throw ConfigurationError(fmt::format("sample {}: target {} outside the source image", sample.id, to_string(box)));

    if (criterion == Criterion::InstructionFollowing)
    {
        if (target_index >= sample.target_bboxes.size())
            throw ConfigurationError(fmt::format("sample {}: no target {}", sample.id, target_index));
        auto const region = expand_bbox(sample.target_bboxes[target_index], dims, expansion);
        std::vector<Image> crops { crop(images.source, region), crop(edited, region), crop(reference, region) };
        out.messages.push_back(user_message(text, crops));
        out.tool_images = EpisodeImageSet(crops[0], crops[1], crops[2]);
        return out;
    }

    std::vector<Image> masked { mask_white(images.source, sample.target_bboxes), mask_white(edited, sample.target_bboxes),
                                mask_white(reference, sample.target_bboxes) };
    out.messages.push_back(user_message(text, masked));
    out.tool_images = EpisodeImageSet(masked[0], masked[1], masked[2]);
    return out;
}

std::string content_image_ref(const Image& image)
{
    return fmt::format("observations/{}.png", sha256_hex(encode_png(image)));
}

nlohmann::ordered_json to_json(const EpisodeTranscript& t, const ImageSink& sink)
{
    nlohmann::ordered_json j;
    j["sample_id"] = t.sample_id;
    j["model_id"] = t.model_id;
    j["mode"] = std::string(to_token(t.mode));
    j["criterion"] = std::string(to_token(t.criterion));
    j["target_index"] = t.target_index;
    j["turn_limit"] = t.turn_limit;
    auto turns = nlohmann::ordered_json::array();
    for (const auto& turn: t.turns)
    {
        nlohmann::ordered_json tj;
        tj["raw"] = turn.raw;
        if (turn.parsed)
        {
            tj["thinking"] = turn.parsed->thinking;
            if (turn.parsed->final_label)
                tj["final_label"] = std::string(turn.parsed->final_label->name());
            else
            {
                auto calls = nlohmann::ordered_json::array();
                for (const auto& call: turn.parsed->tool_calls)
                    calls.push_back(to_json(call));
                tj["tool_calls"] = std::move(calls);
            }
        }
        if (!turn.protocol_error.empty())
            tj["protocol_error"] = turn.protocol_error;
        if (turn.observation)
        {
            static constexpr std::array<std::string_view, 3> kKinds { "ok", "protocol_error", "backend_failure" };
            nlohmann::ordered_json obs;
            obs["kind"] = std::string(kKinds.at(static_cast<std::size_t>(turn.observation->kind)));
            obs["text"] = turn.observation->text;
            auto refs = nlohmann::ordered_json::array();
            for (const auto& img: turn.observation->images)
                refs.push_back(sink(*img));
            obs["images"] = std::move(refs);
            tj["observation"] = std::move(obs);
        }
        turns.push_back(std::move(tj));
    }
    j["turns"] = std::move(turns);
    j["outcome"] = to_json(t.outcome);
    return j;
}

EpisodeTranscript run_episode(const EditSample& sample, const std::string& model_id, const SampleImages& images,
                              EvalMode mode, Criterion criterion, ChatBackend& judge, const ToolSuite& tools,
                              const JudgeSettings& settings, std::size_t target_index)
{
    EpisodeTranscript t;
    t.sample_id = sample.id;
    t.model_id = model_id;
    t.mode = mode;
    t.criterion = criterion;
    t.target_index = static_cast<int>(target_index);
    t.turn_limit = settings.turn_limit;
    t.outcome.sample_id = sample.id;
    t.outcome.model_id = model_id;
    t.outcome.criterion = criterion;
    t.outcome.mode = mode;
    t.outcome.edit_type = sample.edit_type;

    PreparedPrompt prompt;
    try
    {
        prompt = build_prompt(mode, criterion, sample, images, target_index, settings.expansion);
    }
    catch (const std::exception& e)
    {
        t.outcome.failure = FailureReason::MissingInput;
        t.outcome.detail = e.what();
        return t;
    }

    auto history = std::move(prompt.messages);
    auto const tools_allowed = tool_capable(mode, criterion);
    for (int turn_no = 1; turn_no <= settings.turn_limit; ++turn_no)
    {
        EpisodeTurn turn;
        try
        {
            turn.raw = judge.complete(history);
        }
        catch (const std::exception& e)
        {
            t.outcome.failure = FailureReason::Backend;
            t.outcome.detail = e.what();
            t.outcome.turns_used = static_cast<int>(t.turns.size());
            return t;
        }
        history.push_back(ChatMessage::text("assistant", turn.raw));

        JudgeTurn parsed;
        try
        {
            parsed = parse_turn(turn.raw, criterion);
            if (parsed.is_tool_turn() && !tools_allowed)
                throw ProtocolError("tools-unavailable", "tools are not available in this evaluation; give the final answer");
        }
        catch (const ProtocolError& e)
        {
            turn.protocol_error = e.code();
            auto const reminder = fmt::format("{}Your previous reply could not be processed: {}. {}",
                                              prompts::kObservationPrefix, e.what(), prompts::kContinuationFooter);
            turn.observation = Observation { Observation::Kind::ProtocolError, reminder, {} };
            history.push_back(ChatMessage::text("user", reminder));
            t.turns.push_back(std::move(turn));
            continue;
        }

        if (parsed.final_label)
        {
            turn.parsed = std::move(parsed);
            t.outcome.label = turn.parsed->final_label;
            t.turns.push_back(std::move(turn));
            t.outcome.turns_used = static_cast<int>(t.turns.size());
            return t;
        }

        Observation combined;
        std::string texts;
        for (const auto& call: parsed.tool_calls)
        {
            Observation obs;
            try
            {
                obs = tools.execute(call, prompt.tool_images);
            }
            catch (const std::exception& e)
            {
                obs = { Observation::Kind::BackendFailure,
                        fmt::format("The {} tool failed ({}). You may retry or answer from the images you have.",
                                    call.name, e.what()),
                        {} };
            }
            if (combined.kind == Observation::Kind::Ok)
                combined.kind = obs.kind;
            texts += (texts.empty() ? "" : " ") + obs.text;
            combined.images.insert(combined.images.end(), obs.images.begin(), obs.images.end());
        }
        combined.text = fmt::format("{}{} {}", prompts::kObservationPrefix, texts, prompts::kContinuationFooter);
        auto message = ChatMessage::text("user", combined.text);
        for (const auto& img: combined.images)
            message.add_image(img);
        history.push_back(std::move(message));
        turn.parsed = std::move(parsed);
        turn.observation = std::move(combined);
        t.turns.push_back(std::move(turn));
    }

    t.outcome.turns_used = static_cast<int>(t.turns.size());
    auto const last_protocol = !t.turns.empty() && !t.turns.back().protocol_error.empty();
    t.outcome.failure = last_protocol ? FailureReason::Protocol : FailureReason::TurnLimit;
    t.outcome.detail = last_protocol ? fmt::format("turn limit reached after protocol error '{}'", t.turns.back().protocol_error)
                                     : "turn limit reached without a final answer";
    return t;
}

SampleEvaluation evaluate_sample(const EditSample& sample, const std::string& model_id, const SampleImages& images,
                                 EvalMode mode, Criterion criterion, ChatBackend& judge, const ToolSuite& tools,
                                 const JudgeSettings& settings)
{
    SampleEvaluation out;
    auto const per_target = mode == EvalMode::OracleGuided && criterion == Criterion::InstructionFollowing
                            && sample.target_bboxes.size() > 1;
    auto const episodes = per_target ? sample.target_bboxes.size() : 1;
    for (std::size_t i = 0; i < episodes; ++i)
    {
        out.episodes.push_back(run_episode(sample, model_id, images, mode, criterion, judge, tools, settings, i));
        if (out.episodes.back().outcome.failed())
            break;
    }

    out.verdict = out.episodes.front().outcome;
    out.verdict.turns_used = 0;
    std::vector<RubricLabel> labels;
    for (const auto& e: out.episodes)
    {
        out.verdict.turns_used += e.outcome.turns_used;
        if (e.outcome.failed())
        {
            out.verdict.label.reset();
            out.verdict.failure = e.outcome.failure;
            out.verdict.detail = per_target ? fmt::format("target {}: {}", e.target_index, e.outcome.detail) : e.outcome.detail;
            return out;
        }
        labels.push_back(*e.outcome.label);
    }
    out.verdict.label = worst_of_targets(std::span<const RubricLabel>(labels));
    return out;
}

} // namespace tinyedit
