// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "tinyedit/pipeline.hpp"
#include "tinyedit/sample.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace tinyedit
{

/// Kinds: "bbox", "metadata_fix", "reference_verdict", "rubric_label".
struct AnnotationRecord
{
    std::string sample_id;
    std::string annotator_id;
    std::string kind;
    nlohmann::json payload;
    std::string timestamp;

    friend bool operator==(const AnnotationRecord&, const AnnotationRecord&) = default;
};

nlohmann::ordered_json to_json(const AnnotationRecord& record);
AnnotationRecord annotation_from_json(const nlohmann::json& json);

struct HumanLabel
{
    std::string sample_id;
    std::string model_id;
    std::string annotator_id;
    Criterion criterion = Criterion::InstructionFollowing;
    RubricLabel label = IFLabel::FlawlessExecution;
    int target_index = 0;

    friend bool operator==(const HumanLabel&, const HumanLabel&) = default;
};

nlohmann::ordered_json to_json(const HumanLabel& label);
/// Accepts a flat label object or a "rubric_label" annotation record.
HumanLabel human_label_from_json(const nlohmann::json& json);
std::vector<HumanLabel> load_human_labels(const std::filesystem::path& path);

/// Everything the annotation log determines.
struct AnnotationState
{
    std::vector<EditSample> samples;
    /// One label per (sample, model, annotator, criterion, target); later posts replace earlier ones.
    std::vector<HumanLabel> labels;

    friend bool operator==(const AnnotationState&, const AnnotationState&) = default;
};

/// Applies an already validated record. Throws DatasetError for unknown samples.
void apply_record(AnnotationState& state, const AnnotationRecord& record);
AnnotationState replay(std::vector<EditSample> base, std::span<const AnnotationRecord> log);

struct ApiResponse
{
    int status = 200;
    nlohmann::ordered_json body;
    std::string bytes; // raw payload instead of body when set
    std::string content_type = "application/json";
};

struct AnnotationOptions
{
    std::filesystem::path dataset;
    std::filesystem::path image_root;           // empty: the dataset's directory
    std::filesystem::path state_dir;            // annotations.jsonl and the derived dataset.jsonl
    std::optional<std::filesystem::path> store; // reference-generation store
    std::optional<std::filesystem::path> runs;  // directory of evaluation runs
    std::string bearer_token;                   // empty: no authentication
    std::function<std::string()> clock;         // defaults to UTC now
};

/// Environment variable holding the shared bearer token for the service.
inline constexpr const char* kServiceTokenEnv = "TINYEDIT_SERVICE_TOKEN";

class AnnotationService
{
  public:
    explicit AnnotationService(AnnotationOptions options);
    ~AnnotationService();
    AnnotationService(const AnnotationService&) = delete;
    AnnotationService& operator=(const AnnotationService&) = delete;

    ApiResponse list_samples(const std::optional<std::string>& status, const std::optional<std::uint64_t>& shuffle_seed);
    ApiResponse get_sample(const std::string& id);
    ApiResponse get_image(const std::string& id, const std::string& role, int attempt);
    /// kind is the route suffix: bbox, metadata, reference_verdict, labels.
    ApiResponse post(const std::string& id, const std::string& kind, const std::string& body,
                     const std::string& annotator);
    ApiResponse list_runs();
    ApiResponse run_results(const std::string& run_id);

    [[nodiscard]] AnnotationState state() const;
    [[nodiscard]] std::vector<AnnotationRecord> log() const;

    /// Binds (port 0 picks a free port) and serves on a background thread.
    int start(const std::string& host, int port);
    /// Binds and serves on the calling thread until stop().
    void serve(const std::string& host, int port);
    void stop();

  private:
    struct Impl;
    std::unique_ptr<Impl> _impl;
};

} // namespace tinyedit
