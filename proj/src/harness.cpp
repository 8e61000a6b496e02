#include "emoflow/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>

#include "emoflow/errors.hpp"
#include "emoflow/linalg.hpp"
#include "emoflow/tensor_io.hpp"

namespace emoflow::harness {

using ag::Value;
using ordered_json = nlohmann::ordered_json;

Variant variant_from_string(const std::string& s) {
    if (s == "v1" || s == "V1") return Variant::V1;
    if (s == "v2" || s == "V2") return Variant::V2;
    if (s == "v3" || s == "V3") return Variant::V3;
    if (s == "v4" || s == "V4") return Variant::V4;
    throw ConfigError("variant: expected one of v1..v4, got '" + s + "'");
}

std::string to_string(Variant v) {
    switch (v) {
        case Variant::V1: return "v1";
        case Variant::V2: return "v2";
        case Variant::V3: return "v3";
        case Variant::V4: return "v4";
    }
    return "v?";
}

void TrainConfig::validate() const {
    if (!(lr > 0.0)) throw ConfigError("train config: lr must be > 0");
    if (steps < 1) throw ConfigError("train config: steps must be >= 1");
    if (batch_size < 2) throw ConfigError("train config: batch_size must be >= 2");
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw ConfigError("train config: train_fraction must be in (0,1)");
    if (weights.lambda_orth < 0.0 || weights.lambda_contrast < 0.0)
        throw ConfigError("train config: loss weights must be >= 0");
    if (hidden < 1) throw ConfigError("train config: hidden must be >= 1");
    if (vocab < 2) throw ConfigError("train config: vocab must be >= 2");
    if (max_tokens < 1) throw ConfigError("train config: max_tokens must be >= 1");
    if (encoder_init_scale < 0.0) throw ConfigError("train config: encoder_init_scale must be >= 0");
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    try {
        if (j.contains("variant")) c.variant = variant_from_string(j.at("variant").get<std::string>());
        if (j.contains("weights")) {
            const auto& w = j.at("weights");
            if (w.contains("lambda_orth")) c.weights.lambda_orth = w.at("lambda_orth").get<double>();
            if (w.contains("lambda_contrast"))
                c.weights.lambda_contrast = w.at("lambda_contrast").get<double>();
        }
        if (j.contains("lr")) c.lr = j.at("lr").get<double>();
        if (j.contains("batch_size")) c.batch_size = j.at("batch_size").get<int>();
        if (j.contains("steps")) c.steps = j.at("steps").get<int>();
        if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("corpus")) c.corpus_dir = j.at("corpus").get<std::string>();
        if (j.contains("train_fraction")) c.train_fraction = j.at("train_fraction").get<double>();
        if (j.contains("flags")) {
            const auto& f = j.at("flags");
            if (f.contains("contrastive_symmetric"))
                c.flags.contrastive_symmetric = f.at("contrastive_symmetric").get<bool>();
            if (f.contains("query_per_token")) c.flags.query_per_token = f.at("query_per_token").get<bool>();
            if (f.contains("pairwise_orth")) c.flags.pairwise_orth = f.at("pairwise_orth").get<bool>();
        }
        if (j.contains("hidden")) c.hidden = j.at("hidden").get<int>();
        if (j.contains("vocab")) c.vocab = j.at("vocab").get<int>();
        if (j.contains("max_tokens")) c.max_tokens = j.at("max_tokens").get<int>();
        if (j.contains("encoder_init_scale"))
            c.encoder_init_scale = j.at("encoder_init_scale").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("train config: ") + e.what());
    }
    return c;
}

ordered_json train_config_to_json(const TrainConfig& c) {
    return ordered_json{
        {"variant", to_string(c.variant)},
        {"weights", ordered_json{{"lambda_orth", c.weights.lambda_orth},
                                 {"lambda_contrast", c.weights.lambda_contrast}}},
        {"lr", c.lr},
        {"batch_size", c.batch_size},
        {"steps", c.steps},
        {"seed", c.seed},
        {"corpus", c.corpus_dir},
        {"train_fraction", c.train_fraction},
        {"flags", ordered_json{{"contrastive_symmetric", c.flags.contrastive_symmetric},
                               {"query_per_token", c.flags.query_per_token},
                               {"pairwise_orth", c.flags.pairwise_orth}}},
        {"hidden", c.hidden},
        {"vocab", c.vocab},
        {"max_tokens", c.max_tokens},
        {"encoder_init_scale", c.encoder_init_scale}};
}

std::vector<std::pair<std::string, Value>> PipelineModel::named_parameters() const {
    return {{"speaker_encoder.projection", speaker_encoder.projection},
            {"emotion_encoder.projection", emotion_encoder.projection},
            {"heads.P_s", heads.P_s},
            {"heads.P_e", heads.P_e},
            {"token_encoder.embedding", token_encoder.embedding},
            {"token_encoder.positional", token_encoder.positional},
            {"token_encoder.W_q", token_encoder.W_q},
            {"token_encoder.W_k", token_encoder.W_k},
            {"token_encoder.W_v", token_encoder.W_v},
            {"cross_attention.W_q", cross_attention.W_q},
            {"cross_attention.W_k", cross_attention.W_k},
            {"cross_attention.W_v", cross_attention.W_v},
            {"field.W1", field.W1},
            {"field.b1", field.b1},
            {"field.W2", field.W2},
            {"field.b2", field.b2},
            {"field.W3", field.W3},
            {"field.b3", field.b3}};
}

std::vector<Value> PipelineModel::parameters() const {
    std::vector<Value> out;
    for (auto& [name, v] : named_parameters()) out.push_back(v);
    return out;
}

PipelineModel make_model(std::size_t feature_dim, std::size_t embed_dim, const TrainConfig& config,
                         RngStream& init_rng) {
    PipelineModel m;
    m.feature_dim = feature_dim;
    m.embed_dim = embed_dim;
    m.speaker_encoder =
        enc::make_trainable_encoder(feature_dim, embed_dim, init_rng, config.encoder_init_scale);
    m.emotion_encoder =
        enc::make_trainable_encoder(feature_dim, embed_dim, init_rng, config.encoder_init_scale);
    const double head_scale = 1.0 / std::sqrt(static_cast<double>(embed_dim));
    Tensor ps = Tensor::zeros({embed_dim, embed_dim});
    for (auto& v : ps.data) v = head_scale * init_rng.normal();
    Tensor pe = Tensor::zeros({embed_dim, embed_dim});
    for (auto& v : pe.data) v = head_scale * init_rng.normal();
    m.heads.P_s = Value::leaf(std::move(ps), true);
    m.heads.P_e = Value::leaf(std::move(pe), true);
    m.token_encoder = attn::make_token_encoder(static_cast<std::size_t>(config.vocab),
                                               static_cast<std::size_t>(config.max_tokens), embed_dim,
                                               init_rng);
    m.cross_attention = attn::make_cross_attention(embed_dim, init_rng);
    // cond = [context | pooled h_LM | s | e]
    m.field = fm::make_vector_field(feature_dim, 4 * embed_dim, static_cast<std::size_t>(config.hidden),
                                    init_rng);
    return m;
}

attn::TokenSequence tokens_for_pair(int pair_id, int max_tokens, int vocab) {
    attn::TokenSequence seq;
    const int real_len = 1 + (pair_id % max_tokens);
    for (int k = 0; k < max_tokens; ++k) {
        std::uint64_t h = (static_cast<std::uint64_t>(pair_id) << 20) ^ static_cast<std::uint64_t>(k);
        h += 0x9e3779b97f4a7c15ULL;
        h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ULL;
        h = (h ^ (h >> 27)) * 0x94d049bb133111ebULL;
        h ^= h >> 31;
        const bool real = k < real_len;
        seq.token_ids.push_back(real ? static_cast<int>(h % static_cast<std::uint64_t>(vocab)) : 0);
        seq.pad_mask.push_back(real ? 1 : 0);
    }
    return seq;
}

LossBreakdown combined_loss(const PipelineModel& model, const TrainBatch& batch,
                            const CombinedLossOptions& opts) {
    const std::size_t B = batch.pooled.rows();
    if (B == 0) throw BatchError("combined_loss: empty batch");
    if (batch.tokens.size() != B || batch.speaker_ids.size() != B || batch.emotion_ids.size() != B)
        throw ShapeError("combined_loss: inconsistent batch member counts");

    Value pooled = Value::constant(batch.pooled);
    Value s_batch = enc::encode_pooled(model.speaker_encoder, pooled); // B x D
    Value e_batch = enc::encode_pooled(model.emotion_encoder, pooled); // B x D

    const bool use_cross = opts.cross_attention_active();
    std::vector<Value> contexts, pooled_lm;
    contexts.reserve(B);
    pooled_lm.reserve(B);
    for (std::size_t i = 0; i < B; ++i) {
        const auto& seq = batch.tokens[i];
        Value h_lm = attn::encode_tokens(model.token_encoder, seq);
        Value lm_mean = attn::masked_mean_rows(h_lm, seq.pad_mask);
        pooled_lm.push_back(lm_mean);
        if (use_cross) {
            Value e_i = ag::slice_rows(e_batch, i, 1);
            auto attended = attn::cross_attend(model.cross_attention, e_i, h_lm, seq.pad_mask,
                                               opts.flags.query_per_token);
            contexts.push_back(attn::masked_mean_rows(attended.output, seq.pad_mask));
        } else {
            contexts.push_back(lm_mean);
        }
    }
    Value cond = ag::concat_cols(
        {ag::stack_rows(contexts), ag::stack_rows(pooled_lm), s_batch, e_batch}); // B x 4D

    LossBreakdown out;
    Value cfm = fm::cfm_loss(model.field, batch.flow, cond);
    out.cfm = cfm.scalar();
    Value total = cfm;

    const bool orth_on = static_cast<int>(opts.variant) >= static_cast<int>(Variant::V2);
    const bool contrast_on = static_cast<int>(opts.variant) >= static_cast<int>(Variant::V3);
    dis::EmbeddingBatch emb{s_batch, e_batch, batch.speaker_ids, batch.emotion_ids};
    if (orth_on) {
        Value orth = dis::orthogonality_loss(emb, opts.flags.pairwise_orth);
        out.orth = orth.scalar();
        total = ag::add(total, ag::scale(orth, opts.weights.lambda_orth));
    }
    if (contrast_on) {
        Value contrast = dis::contrastive_loss(emb, model.heads, opts.flags.contrastive_symmetric);
        out.contrast = contrast.scalar();
        total = ag::add(total, ag::scale(contrast, opts.weights.lambda_contrast));
    }
    out.total = total;
    return out;
}

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// plain Adam over leaf values
class Adam {
public:
    Adam(std::vector<Value> params, double lr) : params_(std::move(params)), lr_(lr) {
        for (const auto& p : params_) {
            m_.push_back(Tensor::zeros(p.value().shape));
            v_.push_back(Tensor::zeros(p.value().shape));
        }
    }

    void zero_grad() {
        for (auto& p : params_) p.zero_grad();
    }

    void step() {
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, t_);
        const double bc2 = 1.0 - std::pow(beta2_, t_);
        for (std::size_t pi = 0; pi < params_.size(); ++pi) {
            const Tensor& g = params_[pi].grad();
            Tensor value = params_[pi].value();
            for (std::size_t i = 0; i < value.data.size(); ++i) {
                m_[pi].data[i] = beta1_ * m_[pi].data[i] + (1.0 - beta1_) * g.data[i];
                v_[pi].data[i] = beta2_ * v_[pi].data[i] + (1.0 - beta2_) * g.data[i] * g.data[i];
                const double mhat = m_[pi].data[i] / bc1;
                const double vhat = v_[pi].data[i] / bc2;
                value.data[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
            }
            params_[pi].set_value(std::move(value));
        }
    }

private:
    std::vector<Value> params_;
    std::vector<Tensor> m_, v_;
    double lr_;
    double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
    long t_ = 0;
};

std::vector<Tensor> pool_features(const std::vector<synth::SpeechSample>& samples) {
    std::vector<Tensor> pooled;
    pooled.reserve(samples.size());
    for (const auto& s : samples) pooled.push_back(mean_over_rows(s.features));
    return pooled;
}

// Draw order per element: frame index, t, then the F noise components; this
// keeps reruns bit-identical for a fixed seed.
TrainBatch assemble_batch(const std::vector<synth::SpeechSample>& samples,
                          const std::vector<Tensor>& pooled_cache,
                          const std::vector<std::size_t>& indices, const TrainConfig& config,
                          RngStream& rng) {
    const std::size_t B = indices.size();
    const std::size_t F = samples.at(indices.at(0)).features.cols();
    TrainBatch batch;
    batch.pooled = Tensor::zeros({B, F});
    batch.flow.x0 = Tensor::zeros({B, F});
    batch.flow.x1 = Tensor::zeros({B, F});
    for (std::size_t b = 0; b < B; ++b) {
        const auto& s = samples[indices[b]];
        const std::size_t T = s.features.rows();
        const std::size_t frame = static_cast<std::size_t>(rng.below(T));
        batch.flow.t.push_back(rng.uniform01());
        for (std::size_t f = 0; f < F; ++f) {
            batch.pooled.at(b, f) = pooled_cache[indices[b]].data[f];
            batch.flow.x0.at(b, f) = rng.normal();
            batch.flow.x1.at(b, f) = s.features.at(frame, f);
        }
        batch.speaker_ids.push_back(s.speaker_id);
        batch.emotion_ids.push_back(s.emotion_id);
        batch.tokens.push_back(tokens_for_pair(s.pair_id, config.max_tokens, config.vocab));
    }
    return batch;
}

} // namespace

std::string train_log_csv(const std::vector<StepLog>& log) {
    std::string out = "step,loss_total,loss_cfm,loss_orth,loss_contrast,grad_norm\n";
    for (const auto& r : log) {
        out += std::to_string(r.step);
        out += ',' + fmt_double(r.loss_total);
        out += ',' + fmt_double(r.loss_cfm);
        out += ',' + fmt_double(r.loss_orth);
        out += ',' + fmt_double(r.loss_contrast);
        out += ',' + fmt_double(r.grad_norm);
        out += '\n';
    }
    return out;
}

TrainOutput train(const TrainConfig& config, const synth::Corpus& corpus) {
    config.validate();
    corpus.spec.validate();

    TrainOutput out;
    out.corpus_hash = synth::corpus_hash(corpus);
    out.split = synth::split(corpus, config.train_fraction, config.seed);

    RngStream init_rng = named_stream(config.seed, "init");
    out.model = make_model(static_cast<std::size_t>(corpus.spec.feature_dim),
                           static_cast<std::size_t>(corpus.spec.embed_dim), config, init_rng);

    RngStream batching = named_stream(config.seed, "batching");
    const auto pooled_cache = pool_features(out.split.train);
    const std::size_t n_train = out.split.train.size();
    if (n_train == 0) throw ConfigError("train: empty training split");

    Adam adam(out.model.parameters(), config.lr);
    CombinedLossOptions opts{config.variant, config.weights, config.flags, std::nullopt};

    StepLog last_finite{};
    for (int step = 1; step <= config.steps; ++step) {
        std::vector<std::size_t> indices;
        indices.reserve(static_cast<std::size_t>(config.batch_size));
        for (int b = 0; b < config.batch_size; ++b)
            indices.push_back(static_cast<std::size_t>(batching.below(n_train)));
        TrainBatch batch = assemble_batch(out.split.train, pooled_cache, indices, config, batching);

        LossBreakdown loss = combined_loss(out.model, batch, opts);
        const double total = loss.total.scalar();
        if (!std::isfinite(total)) {
            throw DivergenceError(
                "train: non-finite loss at step " + std::to_string(step) + "; last finite: total=" +
                    fmt_double(last_finite.loss_total) + " cfm=" + fmt_double(last_finite.loss_cfm) +
                    " orth=" + fmt_double(last_finite.loss_orth) +
                    " contrast=" + fmt_double(last_finite.loss_contrast),
                step);
        }

        adam.zero_grad();
        ag::backward(loss.total);
        double grad_sq = 0.0;
        for (const auto& p : out.model.parameters())
            for (double g : p.grad().data) grad_sq += g * g;
        adam.step();

        StepLog row{step, total, loss.cfm, loss.orth, loss.contrast, std::sqrt(grad_sq)};
        out.log.push_back(row);
        last_finite = row;
    }
    return out;
}

namespace {

struct ProbeData {
    Tensor x;               // n x (D+1) with bias column
    std::vector<int> label; // class indices
};

ProbeData probe_features(const std::vector<Tensor>& embeddings, const std::vector<int>& labels) {
    const std::size_t n = embeddings.size();
    const std::size_t d = embeddings.empty() ? 0 : embeddings[0].numel();
    ProbeData pd;
    pd.x = Tensor::zeros({n, d + 1});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) pd.x.at(i, j) = embeddings[i].data[j];
        pd.x.at(i, d) = 1.0;
    }
    pd.label = labels;
    return pd;
}

// closed-form ridge regression to one-hot targets, argmax prediction
double ridge_probe_accuracy(const ProbeData& train, const ProbeData& eval_set, int num_classes) {
    constexpr double alpha = 1e-3;
    const std::size_t d = train.x.cols();
    Tensor xtx = Tensor::zeros({d, d});
    for (std::size_t i = 0; i < train.x.rows(); ++i)
        for (std::size_t a = 0; a < d; ++a) {
            const double xa = train.x.at(i, a);
            if (xa == 0.0) continue;
            for (std::size_t b = 0; b < d; ++b) xtx.at(a, b) += xa * train.x.at(i, b);
        }
    for (std::size_t a = 0; a < d; ++a) xtx.at(a, a) += alpha;
    Tensor xty = Tensor::zeros({d, static_cast<std::size_t>(num_classes)});
    for (std::size_t i = 0; i < train.x.rows(); ++i)
        for (std::size_t a = 0; a < d; ++a)
            xty.at(a, static_cast<std::size_t>(train.label[i])) += train.x.at(i, a);
    Tensor w = solve_linear(xtx, xty);

    std::size_t correct = 0;
    for (std::size_t i = 0; i < eval_set.x.rows(); ++i) {
        int best = 0;
        double best_score = -std::numeric_limits<double>::infinity();
        for (int c = 0; c < num_classes; ++c) {
            double score = 0.0;
            for (std::size_t a = 0; a < d; ++a)
                score += eval_set.x.at(i, a) * w.at(a, static_cast<std::size_t>(c));
            if (score > best_score) {
                best_score = score;
                best = c;
            }
        }
        if (best == eval_set.label[i]) ++correct;
    }
    return eval_set.x.rows() == 0 ? 0.0
                                  : static_cast<double>(correct) / static_cast<double>(eval_set.x.rows());
}

} // namespace

ordered_json report_to_json(const EvalReport& r) {
    ordered_json j{{"mean_abs_cross_cosine", r.mean_abs_cross_cosine},
                   {"emotion_probe_acc", r.emotion_probe_acc},
                   {"speaker_probe_acc", r.speaker_probe_acc}};
    if (r.direction_recovery_cosine) j["direction_recovery_cosine"] = *r.direction_recovery_cosine;
    j["loss_total"] = r.loss_total;
    j["loss_cfm"] = r.loss_cfm;
    j["loss_orth"] = r.loss_orth;
    j["loss_contrast"] = r.loss_contrast;
    return j;
}

EvalReport evaluate(const PipelineModel& model, const TrainConfig& config,
                    const std::vector<synth::SpeechSample>& train_samples,
                    const std::vector<synth::SpeechSample>& eval_samples,
                    const synth::GroundTruth* ground_truth) {
    EvalReport report;
    if (eval_samples.empty()) throw BatchError("evaluate: empty eval split");

    auto embed_all = [&](const std::vector<synth::SpeechSample>& samples) {
        std::vector<Tensor> s_emb, e_emb;
        s_emb.reserve(samples.size());
        e_emb.reserve(samples.size());
        for (const auto& s : samples) {
            s_emb.push_back(enc::encode(model.speaker_encoder, s));
            e_emb.push_back(enc::encode(model.emotion_encoder, s));
        }
        return std::pair{std::move(s_emb), std::move(e_emb)};
    };
    auto [train_s, train_e] = embed_all(train_samples);
    auto [eval_s, eval_e] = embed_all(eval_samples);

    double abs_cos = 0.0;
    for (std::size_t i = 0; i < eval_samples.size(); ++i)
        abs_cos += std::fabs(cosine(eval_s[i], eval_e[i]));
    report.mean_abs_cross_cosine = abs_cos / static_cast<double>(eval_samples.size());

    // speaker probe over all samples; emotion probe over emotional samples
    // (labels 1..E-1 shifted down), keeping both probe datasets class-balanced
    int num_speakers = 0, num_emotions = 0;
    for (const auto& s : train_samples) {
        num_speakers = std::max(num_speakers, s.speaker_id + 1);
        num_emotions = std::max(num_emotions, s.emotion_id + 1);
    }
    std::vector<int> spk_train_labels, spk_eval_labels;
    for (const auto& s : train_samples) spk_train_labels.push_back(s.speaker_id);
    for (const auto& s : eval_samples) spk_eval_labels.push_back(s.speaker_id);
    report.speaker_probe_acc =
        ridge_probe_accuracy(probe_features(train_s, spk_train_labels),
                             probe_features(eval_s, spk_eval_labels), num_speakers);

    std::vector<Tensor> emo_train_x, emo_eval_x;
    std::vector<int> emo_train_labels, emo_eval_labels;
    for (std::size_t i = 0; i < train_samples.size(); ++i)
        if (train_samples[i].emotion_id != 0) {
            emo_train_x.push_back(train_e[i]);
            emo_train_labels.push_back(train_samples[i].emotion_id - 1);
        }
    for (std::size_t i = 0; i < eval_samples.size(); ++i)
        if (eval_samples[i].emotion_id != 0) {
            emo_eval_x.push_back(eval_e[i]);
            emo_eval_labels.push_back(eval_samples[i].emotion_id - 1);
        }
    report.emotion_probe_acc =
        ridge_probe_accuracy(probe_features(emo_train_x, emo_train_labels),
                             probe_features(emo_eval_x, emo_eval_labels), num_emotions - 1);

    if (ground_truth) {
        const auto pairs = synth::pair_table(eval_samples);
        double cos_sum = 0.0;
        int emotions_used = 0;
        for (int emo = 1; emo < num_emotions; ++emo) {
            std::vector<std::pair<Tensor, Tensor>> encoded;
            for (const auto& [ei, ni] : pairs) {
                if (eval_samples[ei].emotion_id != emo) continue;
                encoded.emplace_back(enc::encode(model.emotion_encoder, eval_samples[ei]),
                                     enc::encode(model.emotion_encoder, eval_samples[ni]));
            }
            if (encoded.empty()) continue;
            int n = std::min<int>(10, static_cast<int>(encoded.size()));
            enc::AggregateResult agg;
            try {
                agg = enc::aggregate_emotion(encoded, n, emo);
            } catch (const InsufficientPairsError& e) {
                if (e.usable_pairs < 1) continue;
                agg = enc::aggregate_emotion(encoded, e.usable_pairs, emo);
            }
            const Tensor dir = row(ground_truth->emotion_directions, static_cast<std::size_t>(emo));
            cos_sum += cosine(agg.embedding.vector, enc::direction_image(model.emotion_encoder, dir));
            ++emotions_used;
        }
        if (emotions_used > 0)
            report.direction_recovery_cosine = cos_sum / static_cast<double>(emotions_used);
    }

    // loss terms over one deterministic pass of the eval split
    RngStream eval_rng = named_stream(config.seed, "eval");
    std::vector<std::size_t> indices(eval_samples.size());
    for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = i;
    const auto pooled_cache = pool_features(eval_samples);
    TrainBatch batch = assemble_batch(eval_samples, pooled_cache, indices, config, eval_rng);
    CombinedLossOptions opts{config.variant, config.weights, config.flags, std::nullopt};
    LossBreakdown loss = combined_loss(model, batch, opts);
    report.loss_total = loss.total.scalar();
    report.loss_cfm = loss.cfm;
    report.loss_orth = loss.orth;
    report.loss_contrast = loss.contrast;
    return report;
}

std::vector<AblationRow> ablate(const TrainConfig& base, const synth::Corpus& corpus) {
    const std::string hash = synth::corpus_hash(corpus);
    std::vector<AblationRow> rows;
    for (Variant v : {Variant::V1, Variant::V2, Variant::V3, Variant::V4}) {
        AblationRow row;
        row.variant = to_string(v);
        row.corpus_hash = hash;
        TrainConfig config = base;
        config.variant = v;
        try {
            TrainOutput out = train(config, corpus);
            row.report = evaluate(out.model, config, out.split.train, out.split.eval,
                                  corpus.ground_truth ? &*corpus.ground_truth : nullptr);
            row.status = "ok";
        } catch (const Error& e) {
            row.status = e.what();
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
    std::string out =
        "variant,status,mean_abs_cross_cosine,emotion_probe_acc,speaker_probe_acc,"
        "direction_recovery_cosine,loss_total,loss_cfm,loss_orth,loss_contrast,corpus_hash\n";
    for (const auto& r : rows) {
        std::string status = r.status;
        for (auto& ch : status)
            if (ch == ',' || ch == '\n') ch = ';';
        out += r.variant + ',' + status + ',';
        if (r.report) {
            const auto& rep = *r.report;
            out += fmt_double(rep.mean_abs_cross_cosine) + ',';
            out += fmt_double(rep.emotion_probe_acc) + ',';
            out += fmt_double(rep.speaker_probe_acc) + ',';
            out += rep.direction_recovery_cosine ? fmt_double(*rep.direction_recovery_cosine) : "";
            out += ',';
            out += fmt_double(rep.loss_total) + ',';
            out += fmt_double(rep.loss_cfm) + ',';
            out += fmt_double(rep.loss_orth) + ',';
            out += fmt_double(rep.loss_contrast) + ',';
        } else {
            out += ",,,,,,,,";
        }
        out += r.corpus_hash + '\n';
    }
    return out;
}

void save_model(const std::filesystem::path& dir, const PipelineModel& model, const TrainConfig& config) {
    std::filesystem::create_directories(dir / "params");
    ordered_json manifest;
    manifest["tool_version"] = "0.1.0";
    manifest["feature_dim"] = model.feature_dim;
    manifest["embed_dim"] = model.embed_dim;
    manifest["config"] = train_config_to_json(config);
    ordered_json params = ordered_json::array();
    for (const auto& [name, value] : model.named_parameters()) {
        std::string fname = name;
        for (auto& c : fname)
            if (c == '.') c = '_';
        fname += ".tnsr";
        write_tnsr(dir / "params" / fname, value.value());
        params.push_back(ordered_json{{"name", name}, {"file", "params/" + fname}});
    }
    manifest["parameters"] = params;
    std::ofstream f(dir / "model.json", std::ios::trunc);
    if (!f) throw IoError("save_model: cannot write " + (dir / "model.json").string());
    f << manifest.dump(2) << "\n";
}

LoadedModel load_model(const std::filesystem::path& dir) {
    std::ifstream f(dir / "model.json");
    if (!f) throw IoError("load_model: cannot open " + (dir / "model.json").string());
    nlohmann::json manifest;
    try {
        f >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("load_model: bad model.json: ") + e.what());
    }
    LoadedModel lm;
    lm.config = train_config_from_json(manifest.at("config"));
    const auto feature_dim = manifest.at("feature_dim").get<std::size_t>();
    const auto embed_dim = manifest.at("embed_dim").get<std::size_t>();
    RngStream init_rng = named_stream(lm.config.seed, "init");
    lm.model = make_model(feature_dim, embed_dim, lm.config, init_rng);
    std::map<std::string, Value> by_name;
    for (auto& [name, v] : lm.model.named_parameters()) by_name.emplace(name, v);
    for (const auto& p : manifest.at("parameters")) {
        const std::string name = p.at("name").get<std::string>();
        auto it = by_name.find(name);
        if (it == by_name.end()) throw ConfigError("load_model: unknown parameter '" + name + "'");
        it->second.set_value(read_tnsr(dir / p.at("file").get<std::string>()));
    }
    return lm;
}

} // namespace emoflow::harness
