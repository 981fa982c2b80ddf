// SPDX-License-Identifier: Apache-2.0
#include "tinyedit/prompts.hpp"

#include <fmt/format.h>

#include <stdexcept>

namespace tinyedit
{

std::string_view to_token(EvalMode mode)
{
    switch (mode)
    {
        case EvalMode::ToolDriven: return "tool";
        case EvalMode::OracleGuided: return "oracle";
        case EvalMode::Baseline: return "baseline";
    }
    return "tool";
}

std::optional<EvalMode> parse_eval_mode(std::string_view token)
{
    if (token == "tool" || token == "tool_driven")
        return EvalMode::ToolDriven;
    if (token == "oracle" || token == "oracle_guided")
        return EvalMode::OracleGuided;
    if (token == "baseline")
        return EvalMode::Baseline;
    return std::nullopt;
}

bool tool_capable(EvalMode mode, Criterion criterion)
{
    return mode == EvalMode::ToolDriven
           || (mode == EvalMode::OracleGuided && criterion == Criterion::VisualConsistency);
}

} // namespace tinyedit

namespace tinyedit::prompts
{

std::string_view get(std::string_view name)
{
    auto const& templates = detail::embedded_templates();
    auto it = templates.find(name);
    if (it == templates.end())
        throw std::out_of_range(fmt::format("no prompt template '{}'", name));
    return it->second;
}

std::vector<std::string> names()
{
    std::vector<std::string> out;
    for (const auto& [name, _]: detail::embedded_templates())
        out.push_back(name);
    return out;
}

std::string judge_template_name(EvalMode mode, Criterion criterion)
{
    auto const prefix = mode == EvalMode::ToolDriven ? "tool_driven" : mode == EvalMode::OracleGuided ? "oracle" : "baseline";
    return fmt::format("{}_{}", prefix, to_token(criterion));
}

std::string render(std::string_view template_text, const std::vector<std::pair<std::string_view, std::string>>& slots)
{
    std::string out(template_text);
    for (const auto& [slot, value]: slots)
    {
        auto pos = out.find(slot);
        if (pos == std::string::npos)
            throw std::invalid_argument(fmt::format("template has no slot {}", slot));
        while (pos != std::string::npos)
        {
            out.replace(pos, slot.size(), value);
            pos = out.find(slot, pos + value.size());
        }
    }
    return out;
}

} // namespace tinyedit::prompts
