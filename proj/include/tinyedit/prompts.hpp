// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "tinyedit/sample.hpp"

#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace tinyedit
{

enum class EvalMode
{
    ToolDriven,
    OracleGuided,
    Baseline,
};

std::string_view to_token(EvalMode mode); // "tool" / "oracle" / "baseline"
std::optional<EvalMode> parse_eval_mode(std::string_view token);

/// Whether the judge may call tools in this configuration.
bool tool_capable(EvalMode mode, Criterion criterion);

} // namespace tinyedit

namespace tinyedit::prompts
{

inline constexpr std::string_view kToolSystem = "tool_system";
inline constexpr std::string_view kCounterfactualSynthesis = "counterfactual_synthesis";
inline constexpr std::string_view kTargetExtraction = "target_extraction";

inline constexpr std::string_view kInstructionSlot = "{EDITING_INSTRUCTION}";
inline constexpr std::string_view kQuestionSlot = "{QUESTION}";
inline constexpr std::string_view kOptionsSlot = "{OPTIONS}";
inline constexpr std::string_view kAnswerKeySlot = "{ANSWER_KEY}";
inline constexpr std::string_view kExtractionSlot = "{{INPUT_INSTRUCTION}}";

inline constexpr std::string_view kObservationPrefix = "[Response]: ";
inline constexpr std::string_view kContinuationFooter =
    "Think first, if necessary, choose the appropriate tool to call, then answer. Format strictly as: "
    "<Start Thinking>...</Start Thinking> followed by <tool_call>...</tool_call> (if tools are needed), "
    "<Start Final Answer>...</Start Final Answer>(if the final evaluation step is reached, output final results).";

/// Template text by asset name; throws std::out_of_range for unknown names.
std::string_view get(std::string_view name);
std::vector<std::string> names();

/// "tool_driven_if", "oracle_vc", "baseline_if", ...
std::string judge_template_name(EvalMode mode, Criterion criterion);

/// Replaces every occurrence of each slot. Throws std::invalid_argument if a
/// slot does not occur in the template.
std::string render(std::string_view template_text, const std::vector<std::pair<std::string_view, std::string>>& slots);

namespace detail
{
const std::map<std::string, std::string_view, std::less<>>& embedded_templates();
}

} // namespace tinyedit::prompts
