#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "emoflow/conditioning.hpp"
#include "emoflow/disentangle.hpp"
#include "emoflow/encoders.hpp"
#include "emoflow/flowmatch.hpp"
#include "emoflow/synthdata.hpp"

namespace emoflow::harness {

// Cumulative ablation ladder: V1 conditioning only, V2 adds the
// cross-orthogonality constraint, V3 adds in-batch contrastive learning,
// V4 adds emotion-query cross-attention. V1-V3 bypass cross-attention and
// feed the pooled token representations directly.
enum class Variant { V1 = 1, V2 = 2, V3 = 3, V4 = 4 };

Variant variant_from_string(const std::string& s); // "v1".."v4"
std::string to_string(Variant v);

struct LossWeights {
    double lambda_orth = 0.1;
    double lambda_contrast = 0.5;
};

struct TrainFlags {
    bool contrastive_symmetric = false;
    bool query_per_token = false;
    bool pairwise_orth = false;
};

struct TrainConfig {
    Variant variant = Variant::V2;
    LossWeights weights;
    double lr = 1e-3;
    int batch_size = 16;
    int steps = 2000;
    std::uint64_t seed = 1;
    std::string corpus_dir;
    double train_fraction = 0.8;
    TrainFlags flags;
    // model dims not fixed by the corpus
    int hidden = 64;
    int vocab = 32;
    int max_tokens = 8;
    double encoder_init_scale = 0.1;

    void validate() const;
};

TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::ordered_json train_config_to_json(const TrainConfig& c);

// All trainable state of the pipeline. Initialization draws happen in a fixed
// order from the "init" stream so every variant starts from identical weights.
struct PipelineModel {
    enc::Encoder speaker_encoder;
    enc::Encoder emotion_encoder;
    dis::ProjectionHeads heads;
    attn::TokenEncoder token_encoder;
    attn::CrossAttention cross_attention;
    fm::VectorFieldNet field;

    std::size_t feature_dim = 0;
    std::size_t embed_dim = 0;

    std::vector<std::pair<std::string, ag::Value>> named_parameters() const;
    std::vector<ag::Value> parameters() const;
};

PipelineModel make_model(std::size_t feature_dim, std::size_t embed_dim, const TrainConfig& config,
                         RngStream& init_rng);

// Deterministic transcript stand-in shared by both members of a pair: tokens
// and real length derive from pair_id alone, padded to max_tokens.
attn::TokenSequence tokens_for_pair(int pair_id, int max_tokens, int vocab);

struct TrainBatch {
    Tensor pooled; // B x F frame-mean features, constant w.r.t. the graph
    std::vector<int> speaker_ids;
    std::vector<int> emotion_ids;
    std::vector<attn::TokenSequence> tokens;
    fm::FlowBatch flow; // x0 noise, x1 target frames, t draws
};

struct CombinedLossOptions {
    Variant variant = Variant::V2;
    LossWeights weights;
    TrainFlags flags;
    // overridable for gating checks; by default follows the variant
    std::optional<bool> use_cross_attention;

    bool cross_attention_active() const {
        return use_cross_attention.value_or(variant == Variant::V4);
    }
};

struct LossBreakdown {
    ag::Value total;
    double cfm = 0.0;
    double orth = 0.0;     // raw term value, 0 when gated off
    double contrast = 0.0; // raw term value, 0 when gated off
};

LossBreakdown combined_loss(const PipelineModel& model, const TrainBatch& batch,
                            const CombinedLossOptions& opts);

struct StepLog {
    int step = 0;
    double loss_total = 0.0;
    double loss_cfm = 0.0;
    double loss_orth = 0.0;
    double loss_contrast = 0.0;
    double grad_norm = 0.0;
};

std::string train_log_csv(const std::vector<StepLog>& log);

struct TrainOutput {
    PipelineModel model;
    std::vector<StepLog> log;
    synth::SplitResult split;
    std::string corpus_hash;
};

// Adam loop over the combined objective with a fixed batch order derived from
// the seed; deterministic given config + corpus. Aborts with DivergenceError
// (carrying the step index and last finite losses) if the loss goes
// non-finite.
TrainOutput train(const TrainConfig& config, const synth::Corpus& corpus);

struct EvalReport {
    double mean_abs_cross_cosine = 0.0;
    double emotion_probe_acc = 0.0;
    double speaker_probe_acc = 0.0;
    std::optional<double> direction_recovery_cosine;
    double loss_total = 0.0;
    double loss_cfm = 0.0;
    double loss_orth = 0.0;
    double loss_contrast = 0.0;
};

nlohmann::ordered_json report_to_json(const EvalReport& r);

// Ground-truth-aware metrics on held-out data: mean |cos(s_i, e_i)|, linear
// probe accuracies (closed-form ridge fit on the train split), per-emotion
// direction recovery against the planted directions, and loss terms over one
// deterministic eval pass. Ground truth may be null; the report then omits
// direction recovery.
EvalReport evaluate(const PipelineModel& model, const TrainConfig& config,
                    const std::vector<synth::SpeechSample>& train_samples,
                    const std::vector<synth::SpeechSample>& eval_samples,
                    const synth::GroundTruth* ground_truth);

struct AblationRow {
    std::string variant;
    std::string status; // "ok" or the error message
    std::optional<EvalReport> report;
    std::string corpus_hash;
};

// train + evaluate per variant with shared seed and corpus; failures are
// recorded per row and do not stop the remaining variants
std::vector<AblationRow> ablate(const TrainConfig& base, const synth::Corpus& corpus);

std::string ablation_csv(const std::vector<AblationRow>& rows);

// model persistence: a directory of TNSR parameter files plus manifest.json
void save_model(const std::filesystem::path& dir, const PipelineModel& model, const TrainConfig& config);
struct LoadedModel {
    PipelineModel model;
    TrainConfig config;
};
LoadedModel load_model(const std::filesystem::path& dir);

} // namespace emoflow::harness
