// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "tinyedit/backends.hpp"
#include "tinyedit/geometry.hpp"
#include "tinyedit/tools.hpp"

#include <cstdint>
#include <filesystem>
#include <istream>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>

namespace tinyedit
{

class ConfigError: public std::runtime_error
{
  public:
    using std::runtime_error::runtime_error;
};

inline constexpr const char* kJudgeKeyEnv = "JUDGE_API_KEY";
inline constexpr const char* kEditorKeyEnv = "EDITOR_API_KEY";

struct HarnessConfig
{
    std::optional<HttpEndpoint> judge;
    std::optional<HttpEndpoint> detector;
    std::optional<HttpEndpoint> enhancer;
    std::optional<HttpEndpoint> editor;
    std::filesystem::path judge_script; // scripted judge replies, used when no judge URL is set

    int workers = 8;
    int turn_limit = 6;
    std::uint64_t seed = 0;
    ToolSuiteConfig tools;
    ExpansionParams expansion;

    /// Throws ConfigError on out-of-range values.
    void validate() const;
    /// Non-secret view for manifests.
    [[nodiscard]] nlohmann::ordered_json describe() const;
};

/// Key/value file with [judge], [detector], [enhancer], [editor], [run],
/// [diff], [expansion] and [enhancement] sections. Values may be quoted; lines
/// starting with '#' or ';' are comments. Keys that look like secrets are rejected:
/// tokens only come from JUDGE_API_KEY and EDITOR_API_KEY.
HarnessConfig parse_config(std::istream& in);
HarnessConfig load_config(const std::filesystem::path& path);

/// Copies bearer tokens from the environment into the judge and editor endpoints.
void apply_environment_secrets(HarnessConfig& config);

/// Offline scripted judge when configured, otherwise the HTTP judge. Throws
/// ConfigError when neither is available.
std::unique_ptr<ChatBackend> make_judge_backend(const HarnessConfig& config);
ToolSuite make_tool_suite(const HarnessConfig& config);

} // namespace tinyedit
