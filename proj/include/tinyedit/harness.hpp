// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "tinyedit/config.hpp"
#include "tinyedit/judge.hpp"

#include <atomic>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

namespace tinyedit
{

struct ModelOutputs
{
    std::string model_id;
    std::filesystem::path dir;                               // <dir>/<sample_id>.png
    std::map<std::string, std::filesystem::path> overrides; // sample_id -> image path
};

/// JSON object {sample_id: path}; relative paths resolve against the file's directory.
std::map<std::string, std::filesystem::path> load_edit_mapping(const std::filesystem::path& path);

std::filesystem::path edited_image_path(const ModelOutputs& outputs, std::string_view sample_id);

struct EpisodeCounts
{
    int completed = 0;
    int failed = 0;
};

struct RunManifest
{
    std::string run_id;
    std::string dataset_path;
    std::string dataset_sha256;
    EvalMode mode = EvalMode::OracleGuided;
    std::vector<Criterion> criteria;
    std::vector<std::string> models;
    nlohmann::ordered_json backends; // non-secret endpoint settings
    int turn_limit = 6;
    std::uint64_t seed = 0;
    std::string started_at;
    std::string finished_at; // empty until every episode has a verdict
    int total_episodes = 0;
    EpisodeCounts counts;
};

nlohmann::ordered_json to_json(const RunManifest& manifest);
RunManifest manifest_from_json(const nlohmann::json& json);

struct EvalRequest
{
    std::filesystem::path dataset;
    std::filesystem::path image_root; // empty: the dataset's directory
    std::vector<ModelOutputs> models;
    EvalMode mode = EvalMode::OracleGuided;
    std::vector<Criterion> criteria { Criterion::InstructionFollowing, Criterion::VisualConsistency };
    std::filesystem::path run_dir;
    std::string run_id; // empty: the run directory name
};

struct EvalHooks
{
    /// Checked before each episode starts; running episodes finish and are persisted.
    const std::atomic<bool>* stop = nullptr;
    /// Called under the writer lock after each verdict is persisted.
    std::function<void(const VerdictRecord&)> on_verdict;
    /// Clock for manifest timestamps.
    std::function<std::string()> now;
};

/// (sample, model, criterion, mode)
using EpisodeKey = std::tuple<std::string, std::string, Criterion, EvalMode>;
EpisodeKey episode_key(const VerdictRecord& verdict);

/// Reads a verdict file; a torn final line (no newline) is ignored.
std::vector<VerdictRecord> load_verdicts(const std::filesystem::path& path);

/// Runs every (sample, model, criterion) episode not already recorded in
/// run_dir/verdicts.jsonl. Writes verdicts.jsonl, transcripts.jsonl,
/// observations/ and manifest.json under run_dir. Throws ConfigError or
/// DatasetError before any episode when the inputs are unusable.
RunManifest run_evaluation(const EvalRequest& request, const HarnessConfig& config, ChatBackend& judge,
                           const ToolSuite& tools, const EvalHooks& hooks = {});

/// UTC ISO-8601 timestamp with seconds.
std::string utc_timestamp();

} // namespace tinyedit
