// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "tinyedit/backends.hpp"
#include "tinyedit/geometry.hpp"
#include "tinyedit/prompts.hpp"
#include "tinyedit/sample.hpp"
#include "tinyedit/tools.hpp"

#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace tinyedit
{

/// Malformed judge output. Recoverable inside an episode.
class ProtocolError: public std::runtime_error
{
  public:
    ProtocolError(std::string code, const std::string& message)
        : std::runtime_error(message), _code(std::move(code))
    {
    }
    [[nodiscard]] const std::string& code() const { return _code; }

  private:
    std::string _code;
};

/// Missing inputs for a mode (no reference image, no target boxes, ...).
class ConfigurationError: public std::runtime_error
{
  public:
    using std::runtime_error::runtime_error;
};

struct JudgeTurn
{
    std::string thinking;
    std::vector<ToolInvocation> tool_calls;
    std::optional<RubricLabel> final_label;
    std::string raw;

    [[nodiscard]] bool is_tool_turn() const { return !tool_calls.empty(); }
};

/// Throws ProtocolError with codes "both-blocks", "no-action", "unknown-label",
/// "malformed-tool-json", "empty-tool-call".
JudgeTurn parse_turn(std::string_view text, Criterion criterion);

/// Canonical text form; parse_turn(render_turn(t)) reproduces t's action.
std::string render_turn(const JudgeTurn& turn);

enum class FailureReason
{
    TurnLimit,
    Protocol,
    Backend,
    MissingInput,
};

std::string_view to_token(FailureReason reason);
std::optional<FailureReason> parse_failure_reason(std::string_view token);

struct VerdictRecord
{
    std::string sample_id;
    std::string model_id;
    Criterion criterion = Criterion::InstructionFollowing;
    EvalMode mode = EvalMode::OracleGuided;
    EditType edit_type = EditType::Color;
    std::optional<RubricLabel> label;
    int turns_used = 0;
    std::optional<FailureReason> failure;
    std::string detail;

    [[nodiscard]] bool failed() const { return failure.has_value(); }
};

nlohmann::ordered_json to_json(const VerdictRecord& verdict);
VerdictRecord verdict_from_json(const nlohmann::json& json);

/// Images an episode works from. Edited and reference are used as delivered.
struct SampleImages
{
    Image source;
    Image edited;
    std::optional<Image> reference;
};

struct PreparedPrompt
{
    std::vector<ChatMessage> messages;
    EpisodeImageSet tool_images; // what the tools operate on
};

/// Assembles the opening messages. target_index selects the target box for
/// the oracle instruction-following crop.
PreparedPrompt build_prompt(EvalMode mode, Criterion criterion, const EditSample& sample, const SampleImages& images,
                            std::size_t target_index = 0, const ExpansionParams& expansion = {});

struct EpisodeTurn
{
    std::string raw;
    std::optional<JudgeTurn> parsed;
    std::string protocol_error; // code, empty when the reply parsed
    std::optional<Observation> observation;
};

struct EpisodeTranscript
{
    std::string sample_id;
    std::string model_id;
    EvalMode mode = EvalMode::OracleGuided;
    Criterion criterion = Criterion::InstructionFollowing;
    int target_index = 0;
    int turn_limit = 6;
    std::vector<EpisodeTurn> turns;
    VerdictRecord outcome;
};

/// Stores an observation image and returns the reference written to the transcript.
using ImageSink = std::function<std::string(const Image&)>;

/// Content-addressed references ("observations/<sha256>.png") without writing anything.
std::string content_image_ref(const Image& image);

nlohmann::ordered_json to_json(const EpisodeTranscript& transcript, const ImageSink& sink = content_image_ref);

struct JudgeSettings
{
    int turn_limit = 6;
    ExpansionParams expansion;
};

/// One conversation with the judge. Never throws for judge or backend faults;
/// they end up in the transcript outcome.
EpisodeTranscript run_episode(const EditSample& sample, const std::string& model_id, const SampleImages& images,
                              EvalMode mode, Criterion criterion, ChatBackend& judge, const ToolSuite& tools,
                              const JudgeSettings& settings = {}, std::size_t target_index = 0);

struct SampleEvaluation
{
    VerdictRecord verdict;
    std::vector<EpisodeTranscript> episodes;
};

/// Runs one episode per target for oracle instruction following (combined with
/// worst_of_targets), one episode otherwise.
SampleEvaluation evaluate_sample(const EditSample& sample, const std::string& model_id, const SampleImages& images,
                                 EvalMode mode, Criterion criterion, ChatBackend& judge, const ToolSuite& tools,
                                 const JudgeSettings& settings = {});

} // namespace tinyedit
