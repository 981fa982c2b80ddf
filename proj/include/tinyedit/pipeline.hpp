// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "tinyedit/backends.hpp"
#include "tinyedit/geometry.hpp"
#include "tinyedit/sample.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace tinyedit
{

enum class QuestionType
{
    Location,
    Color,
    Material,
    Count,
    Shape,
    Object,
    OCR,
};

std::string_view to_token(QuestionType type);
std::optional<QuestionType> parse_question_type(std::string_view token);
/// location -> removal, object -> replacement, the rest map by name.
EditType edit_type_for(QuestionType type);

struct CounterfactualMetadata
{
    std::string q_type; // kept as text so validation can report unknown values
    std::string prompt_clean;
    std::string prompt_adv;
    std::vector<std::string> edit_ops;
    std::string edit_instruction;
    std::string modified_object;
};

/// Accepts edit_ops / edit_instruction either as a string or an array of strings.
CounterfactualMetadata metadata_from_json(const nlohmann::json& json);
nlohmann::ordered_json to_json(const CounterfactualMetadata& metadata);

/// Codes: unknown-q-type, empty-field, edit-ops-count, location-requires-remove,
/// remove-only-for-location, op-type-mismatch, captions-identical; warning count-reduction.
ValidationReport validate_metadata(const CounterfactualMetadata& metadata);

/// Rewrites alter_text to text_flip.
CounterfactualMetadata canonicalize(CounterfactualMetadata metadata);

class SynthesisError: public std::runtime_error
{
  public:
    SynthesisError(std::string code, const std::string& message, ValidationReport report = {})
        : std::runtime_error(message), _code(std::move(code)), _report(std::move(report))
    {
    }
    [[nodiscard]] const std::string& code() const { return _code; }
    [[nodiscard]] const ValidationReport& report() const { return _report; }

  private:
    std::string _code;
    ValidationReport _report;
};

struct SynthesisResult
{
    CounterfactualMetadata metadata;
    int negative_option = 0;
    std::uint64_t seed = 0;
    int attempts = 0;
};

/// Per-sample seed derived from the run seed and the sample id, so the choice
/// does not depend on processing order.
std::uint64_t sample_seed(std::uint64_t run_seed, std::string_view sample_id);

/// Uniformly random incorrect option. Throws std::invalid_argument if none exists.
int choose_negative_option(const RawVQASample& raw, std::uint64_t seed);

std::string render_synthesis_prompt(const RawVQASample& raw, int negative_option);

/// Calls the backend, parses and validates; one retry carrying the problems.
SynthesisResult synthesize_metadata(const RawVQASample& raw, ChatBackend& llm, std::uint64_t seed);

/// Draft sample (no boxes, no reference) built from a synthesis result.
EditSample draft_sample(const RawVQASample& raw, const SynthesisResult& result);

class ExtractionError: public std::runtime_error
{
  public:
    using std::runtime_error::runtime_error;
};

/// Parses "[Result]: <name>" from the reply.
std::string parse_extraction_reply(std::string_view reply);
std::string extract_target_name(std::string_view instruction, ChatBackend& llm);

inline constexpr int kMaxReferenceAttempts = 3;

enum class AttemptVerdict
{
    Pending,
    Accept,
    Reject,
};

std::string_view to_token(AttemptVerdict verdict);
std::optional<AttemptVerdict> parse_attempt_verdict(std::string_view token);

struct ReferenceAttemptRecord
{
    int attempt = 1;
    std::string candidate; // image path, empty if the editor failed
    AttemptVerdict verdict = AttemptVerdict::Pending;
    std::string error;
};

class StaleAttemptError: public std::runtime_error
{
  public:
    using std::runtime_error::runtime_error;
};

/// Reference generation state for one sample; shared by the CLI flow and the annotation service.
struct ReferenceGenStatus
{
    enum class Final
    {
        Pending,
        Accepted,
        Discarded,
    };

    std::vector<ReferenceAttemptRecord> attempts;
    Final final = Final::Pending;

    [[nodiscard]] int attempt_count() const { return static_cast<int>(attempts.size()); }
    [[nodiscard]] bool terminal() const { return final != Final::Pending; }
    [[nodiscard]] bool awaiting_verdict() const;
    /// Not terminal, nothing pending, fewer than three attempts.
    [[nodiscard]] bool needs_candidate() const;

    /// Records an editor call outcome. A failed call is an immediate rejection.
    void add_attempt(std::string candidate, std::string error = {});
    /// Throws StaleAttemptError unless `attempt` is the pending attempt.
    void apply_verdict(int attempt, bool accept);
    /// Rejects the pending attempt and ends the sample without further attempts.
    void discard(int attempt);
};

std::string_view to_token(ReferenceGenStatus::Final final);
nlohmann::ordered_json to_json(const ReferenceGenStatus& status);
ReferenceGenStatus reference_status_from_json(const nlohmann::json& json);

/// Synchronous verdict source (human queue adaptor or scripted stub).
class Verifier
{
  public:
    virtual ~Verifier() = default;
    virtual bool accept(const EditSample& sample, const Image& candidate, int attempt) = 0;
};

struct ReferenceResult
{
    std::optional<Image> reference; // set when accepted
    ReferenceGenStatus status;
    std::vector<std::optional<Image>> candidates; // every attempt, kept for audit
    BBox edit_region;
};

/// The region sent to the editor: expand_bbox of the targets' enclosing box.
BBox reference_edit_region(const EditSample& sample, ImageDims dims, const ExpansionParams& params = {});

/// Crops, edits, pastes back. Returns std::nullopt plus the error on editor failure.
std::optional<Image> make_reference_candidate(const EditSample& sample, const Image& source, EditorBackend& editor,
                                              const ExpansionParams& params, std::string& error);

ReferenceResult generate_reference(const EditSample& sample, const Image& source, EditorBackend& editor,
                                   Verifier& verifier, const ExpansionParams& params = {});

/// Per-sample, per-stage JSON records under root/<stage>/<sample_id>.json,
/// written with write-then-rename.
class PipelineStore
{
  public:
    explicit PipelineStore(std::filesystem::path root);

    [[nodiscard]] std::optional<nlohmann::json> load(std::string_view stage, std::string_view sample_id) const;
    void save(std::string_view stage, std::string_view sample_id, const nlohmann::ordered_json& record) const;
    [[nodiscard]] std::filesystem::path artifact_path(std::string_view stage, std::string_view sample_id,
                                                      std::string_view name) const;
    [[nodiscard]] const std::filesystem::path& root() const { return _root; }

  private:
    [[nodiscard]] std::filesystem::path record_path(std::string_view stage, std::string_view sample_id) const;
    std::filesystem::path _root;
};

struct StageStats
{
    int processed = 0;
    int skipped = 0;
    int failed = 0;
};

/// Stage 1 over a raw set. Samples with a stored record are not sent again.
StageStats run_synthesis(std::span<const RawVQASample> raw, ChatBackend& llm, const PipelineStore& store,
                         std::uint64_t run_seed, std::vector<EditSample>& drafts);

/// Stage 2 step: produces candidates for samples that need one. Samples
/// awaiting a verdict or already terminal cost no editor call.
StageStats run_reference_generation(std::span<const EditSample> samples, const std::filesystem::path& image_root,
                                    EditorBackend& editor, const PipelineStore& store,
                                    const ExpansionParams& params = {});

struct PendingCandidate
{
    std::string sample_id;
    int attempt = 0;
    std::string candidate;
};

std::vector<PendingCandidate> pending_candidates(std::span<const EditSample> samples, const PipelineStore& store);

enum class ReferenceDecision
{
    Accept,
    Regenerate,
    Discard,
};

std::string_view to_token(ReferenceDecision decision);
/// Also accepts "reject" for Regenerate.
std::optional<ReferenceDecision> parse_reference_decision(std::string_view token);

/// Applies a decision to a status and mirrors the outcome on the sample
/// (verified with the reference path on accept, discarded once no attempt remains).
void apply_reference_decision(EditSample& sample, ReferenceGenStatus& status, int attempt, ReferenceDecision decision);

/// Same, reading and writing the stored status.
void apply_reference_verdict(EditSample& sample, const PipelineStore& store, int attempt, ReferenceDecision decision);

} // namespace tinyedit
