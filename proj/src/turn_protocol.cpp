// SPDX-License-Identifier: Apache-2.0
#include "tinyedit/judge.hpp"

#include <fmt/format.h>

#include <regex>

namespace tinyedit
{

namespace
{

struct Block
{
    bool found = false;
    std::size_t begin = 0;   // start of the opening tag
    std::size_t end = 0;     // one past the closing tag (or end of text)
    std::string content;
};

const std::regex& tag_regex(std::string_view which)
{
    static const std::regex think_open(R"(<\s*start\s+thinking\s*>)", std::regex::icase);
    static const std::regex think_close(R"(<\s*/\s*start\s+thinking\s*>)", std::regex::icase);
    static const std::regex tool_open(R"(<\s*tool_call\s*>)", std::regex::icase);
    static const std::regex tool_close(R"(<\s*/\s*tool_call\s*>)", std::regex::icase);
    static const std::regex final_open(R"(<\s*start\s+final\s+answer\s*>)", std::regex::icase);
    static const std::regex final_close(R"(<\s*/\s*start\s+final\s+answer\s*>)", std::regex::icase);
    if (which == "think_open")
        return think_open;
    if (which == "think_close")
        return think_close;
    if (which == "tool_open")
        return tool_open;
    if (which == "tool_close")
        return tool_close;
    if (which == "final_open")
        return final_open;
    return final_close;
}

/// First block starting at or after `from`. A missing closing tag runs to the end.
Block find_block(const std::string& text, std::size_t from, const std::regex& open, const std::regex& close)
{
    Block block;
    std::smatch m;
    auto const start = text.begin() + static_cast<std::ptrdiff_t>(from);
    if (!std::regex_search(start, text.end(), m, open))
        return block;
    block.found = true;
    block.begin = from + static_cast<std::size_t>(m.position(0));
    auto const content_begin = block.begin + static_cast<std::size_t>(m.length(0));
    std::smatch c;
    auto const cstart = text.begin() + static_cast<std::ptrdiff_t>(content_begin);
    if (std::regex_search(cstart, text.end(), c, close))
    {
        block.content = text.substr(content_begin, static_cast<std::size_t>(c.position(0)));
        block.end = content_begin + static_cast<std::size_t>(c.position(0) + c.length(0));
    }
    else
    {
        block.content = text.substr(content_begin);
        block.end = text.size();
    }
    return block;
}

std::string trim(std::string_view s)
{
    auto const b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos)
        return {};
    auto const e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

/// Splits a tool_call body into top-level JSON values.
std::vector<std::string> scan_json_values(const std::string& body)
{
    std::vector<std::string> values;
    std::size_t i = 0;
    while (i < body.size())
    {
        auto const c = body[i];
        if (std::isspace(static_cast<unsigned char>(c)) || c == ',')
        {
            ++i;
            continue;
        }
        if (c != '{' && c != '[')
        {
            // Tolerate code fences around the JSON.
            if (body.compare(i, 3, "```") == 0)
            {
                auto const eol = body.find('\n', i);
                i = eol == std::string::npos ? body.size() : eol + 1;
                continue;
            }
            throw ProtocolError("malformed-tool-json",
                                fmt::format("unexpected text in tool_call block: '{}'", trim(body.substr(i, 40))));
        }
        int depth = 0;
        bool in_string = false;
        bool escaped = false;
        auto const start = i;
        for (; i < body.size(); ++i)
        {
            auto const ch = body[i];
            if (in_string)
            {
                if (escaped)
                    escaped = false;
                else if (ch == '\\')
                    escaped = true;
                else if (ch == '"')
                    in_string = false;
                continue;
            }
            if (ch == '"')
                in_string = true;
            else if (ch == '{' || ch == '[')
                ++depth;
            else if (ch == '}' || ch == ']')
            {
                if (--depth == 0)
                {
                    ++i;
                    break;
                }
            }
        }
        if (depth != 0)
            throw ProtocolError("malformed-tool-json", "unbalanced braces in tool_call block");
        values.push_back(body.substr(start, i - start));
    }
    return values;
}

ToolInvocation invocation_from_json(const nlohmann::json& j)
{
    if (!j.is_object() || !j.contains("name") || !j["name"].is_string())
        throw ProtocolError("malformed-tool-json", "each tool call needs a string \"name\"");
    ToolInvocation inv;
    inv.name = j["name"].get<std::string>();
    auto const key = j.contains("parameters") ? "parameters" : (j.contains("arguments") ? "arguments" : "");
    if (*key == '\0')
        throw ProtocolError("malformed-tool-json", fmt::format("tool call {} lacks \"parameters\"", inv.name));
    auto params = j[key];
    if (params.is_string())
    {
        params = nlohmann::json::parse(params.get<std::string>(), nullptr, false);
        if (params.is_discarded())
            throw ProtocolError("malformed-tool-json", "tool call parameters string is not JSON");
    }
    if (!params.is_object())
        throw ProtocolError("malformed-tool-json", fmt::format("parameters of {} must be an object", inv.name));
    inv.parameters = std::move(params);
    return inv;
}

std::vector<ToolInvocation> parse_tool_calls(const std::vector<std::string>& bodies)
{
    std::vector<ToolInvocation> calls;
    for (const auto& body: bodies)
        for (const auto& value: scan_json_values(body))
        {
            auto const parsed = nlohmann::json::parse(value, nullptr, false);
            if (parsed.is_discarded())
                throw ProtocolError("malformed-tool-json", fmt::format("tool call is not valid JSON: {}", value));
            if (parsed.is_array())
                for (const auto& item: parsed)
                    calls.push_back(invocation_from_json(item));
            else
                calls.push_back(invocation_from_json(parsed));
        }
    if (calls.empty())
        throw ProtocolError("empty-tool-call", "the tool_call block contains no tool call");
    return calls;
}

std::string strip_label(std::string_view text)
{
    auto s = trim(text);
    auto const junk = [](char c) {
        return c == '*' || c == '.' || c == '"' || c == '\'' || c == '`' || std::isspace(static_cast<unsigned char>(c));
    };
    while (!s.empty() && junk(s.front()))
        s.erase(s.begin());
    while (!s.empty() && junk(s.back()))
        s.pop_back();
    return s;
}

} // namespace

JudgeTurn parse_turn(std::string_view text, Criterion criterion)
{
    JudgeTurn turn;
    turn.raw = std::string(text);
    auto const& raw = turn.raw;

    // Tags quoted inside the thinking block do not count as actions.
    auto think = find_block(raw, 0, tag_regex("think_open"), tag_regex("think_close"));
    if (think.found && think.end == raw.size())
    {
        // Unclosed thinking ends where the first action tag begins.
        std::smatch m;
        std::size_t cut = think.content.size();
        for (auto const* tag: { "tool_open", "final_open" })
            if (std::regex_search(think.content, m, tag_regex(tag)))
                cut = std::min(cut, static_cast<std::size_t>(m.position(0)));
        think.end -= think.content.size() - cut;
        think.content.resize(cut);
    }
    std::string rest = raw;
    if (think.found)
    {
        turn.thinking = trim(think.content);
        rest = raw.substr(0, think.begin) + raw.substr(think.end);
    }

    std::vector<std::string> tool_bodies;
    for (std::size_t pos = 0;;)
    {
        auto const block = find_block(rest, pos, tag_regex("tool_open"), tag_regex("tool_close"));
        if (!block.found)
            break;
        tool_bodies.push_back(block.content);
        pos = block.end;
    }
    auto const final_block = find_block(rest, 0, tag_regex("final_open"), tag_regex("final_close"));

    if (!tool_bodies.empty() && final_block.found)
        throw ProtocolError("both-blocks", "the reply contains both a tool call and a final answer");
    if (tool_bodies.empty() && !final_block.found)
        throw ProtocolError("no-action", "the reply contains neither a tool call nor a final answer");

    if (final_block.found)
    {
        // The final block may run to the end of the text when unclosed; stop at another tag.
        auto content = final_block.content;
        if (auto const lt = content.find('<'); lt != std::string::npos)
            content = content.substr(0, lt);
        auto const label_text = strip_label(content);
        auto label = RubricLabel::parse(criterion, label_text);
        if (!label)
        {
            std::string valid;
            for (const auto& l: RubricLabel::all(criterion))
                valid += fmt::format("{}{}", valid.empty() ? "" : ", ", l.name());
            throw ProtocolError("unknown-label",
                                fmt::format("'{}' is not a valid label; use exactly one of: {}", label_text, valid));
        }
        turn.final_label = label;
        return turn;
    }
    turn.tool_calls = parse_tool_calls(tool_bodies);
    return turn;
}

std::string render_turn(const JudgeTurn& turn)
{
    std::string out = fmt::format("<Start Thinking>{}</Start Thinking>\n", turn.thinking);
    if (turn.final_label)
        return out + fmt::format("<Start Final Answer>{}</Start Final Answer>", turn.final_label->name());
    out += "<tool_call>\n";
    for (const auto& call: turn.tool_calls)
        out += to_json(call).dump() + "\n";
    out += "</tool_call>";
    return out;
}

} // namespace tinyedit
