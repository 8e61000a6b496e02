#include "emoflow/gradsuite.hpp"

#include <cmath>

#include "emoflow/harness.hpp"
#include "emoflow/rng.hpp"

namespace emoflow {

namespace {

using ag::Value;

constexpr double kStep = 1e-5;
constexpr double kTol = 1e-4;
const std::uint64_t kSeeds[] = {11, 22, 33};

Tensor random_tensor(std::vector<std::size_t> shape, RngStream& rng, double scale = 1.0) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (auto& v : t.data) v = scale * rng.normal();
    return t;
}

GradCheckCase check(const std::string& name,
                    const std::function<Value(const std::vector<Value>&)>& f,
                    const std::vector<Tensor>& params) {
    GradCheckCase c;
    c.name = name;
    c.max_rel_err = ag::grad_check(f, params, kStep);
    c.tolerance = kTol;
    c.pass = c.max_rel_err < kTol;
    return c;
}

GradCheckCase check_orth(std::uint64_t seed, bool pairwise) {
    RngStream rng(seed);
    const std::size_t B = 4, D = 8;
    std::vector<Tensor> params = {random_tensor({B, D}, rng), random_tensor({B, D}, rng)};
    auto f = [pairwise](const std::vector<Value>& vs) {
        dis::EmbeddingBatch batch{vs[0], vs[1], {}, {}};
        return dis::orthogonality_loss(batch, pairwise);
    };
    return check(std::string("orthogonality_") + (pairwise ? "pairwise" : "default") + "_seed" +
                     std::to_string(seed),
                 f, params);
}

GradCheckCase check_contrastive(std::uint64_t seed) {
    RngStream rng(seed);
    const std::size_t B = 4, D = 8;
    std::vector<Tensor> params = {random_tensor({B, D}, rng), random_tensor({B, D}, rng),
                                  random_tensor({D, D}, rng, 0.5), random_tensor({D, D}, rng, 0.5)};
    auto f = [](const std::vector<Value>& vs) {
        dis::EmbeddingBatch batch{vs[0], vs[1], {}, {}};
        dis::ProjectionHeads heads{vs[2], vs[3]};
        return dis::contrastive_loss(batch, heads);
    };
    return check("contrastive_seed" + std::to_string(seed), f, params);
}

GradCheckCase check_cross_attend(std::uint64_t seed) {
    RngStream rng(seed);
    const std::size_t L = 5, D = 6;
    std::vector<Tensor> params = {random_tensor({1, D}, rng), random_tensor({D, D}, rng, 0.5),
                                  random_tensor({D, D}, rng, 0.5), random_tensor({D, D}, rng, 0.5),
                                  random_tensor({L, D}, rng)};
    const Tensor functional = random_tensor({L, D}, rng); // fixed projection to a scalar
    std::vector<std::uint8_t> mask = {1, 1, 0, 1, 1};     // includes one padded position
    auto f = [functional, mask](const std::vector<Value>& vs) {
        attn::CrossAttention ca{vs[1], vs[2], vs[3]};
        auto res = attn::cross_attend(ca, vs[0], vs[4], mask, false);
        return ag::sum_all(ag::mul(res.output, Value::constant(functional)));
    };
    return check("cross_attend_seed" + std::to_string(seed), f, params);
}

GradCheckCase check_cfm(std::uint64_t seed) {
    RngStream rng(seed);
    const std::size_t B = 3, F = 4, C = 5, H = 8;
    fm::FlowBatch batch;
    batch.x0 = random_tensor({B, F}, rng);
    batch.x1 = random_tensor({B, F}, rng);
    for (std::size_t i = 0; i < B; ++i) batch.t.push_back(rng.uniform01());
    std::vector<Tensor> params = {
        random_tensor({F + 1 + C, H}, rng, 0.5), random_tensor({1, H}, rng, 0.1),
        random_tensor({H, H}, rng, 0.5),         random_tensor({1, H}, rng, 0.1),
        random_tensor({H, F}, rng, 0.5),         random_tensor({1, F}, rng, 0.1),
        random_tensor({B, C}, rng)};
    auto f = [batch, F, C, H](const std::vector<Value>& vs) {
        fm::VectorFieldNet net;
        net.W1 = vs[0];
        net.b1 = vs[1];
        net.W2 = vs[2];
        net.b2 = vs[3];
        net.W3 = vs[4];
        net.b3 = vs[5];
        net.target_dim = F;
        net.cond_dim = C;
        net.hidden = H;
        return fm::cfm_loss(net, batch, vs[6]);
    };
    return check("cfm_loss_seed" + std::to_string(seed), f, params);
}

GradCheckCase check_combined(std::uint64_t seed) {
    // full pipeline at toy dims, V4 so every path is exercised
    synth::CorpusSpec spec;
    spec.num_speakers = 2;
    spec.num_emotions = 3;
    spec.frames = 3;
    spec.feature_dim = 8;
    spec.embed_dim = 6;
    spec.pairs_per_stratum = 2;
    spec.seed = seed;
    synth::Corpus corpus = synth::generate_corpus(spec);

    harness::TrainConfig config;
    config.hidden = 8;
    config.vocab = 7;
    config.max_tokens = 5;
    config.encoder_init_scale = 0.2;
    config.seed = seed;
    config.variant = harness::Variant::V4;

    RngStream init_rng = named_stream(seed, "init");
    harness::PipelineModel proto = harness::make_model(8, 6, config, init_rng);
    std::vector<Tensor> params;
    for (const auto& [name, v] : proto.named_parameters()) params.push_back(v.value());

    RngStream batch_rng = named_stream(seed, "batching");
    const std::size_t B = 4, F = 8;
    harness::TrainBatch batch;
    batch.pooled = Tensor::zeros({B, F});
    batch.flow.x0 = Tensor::zeros({B, F});
    batch.flow.x1 = Tensor::zeros({B, F});
    for (std::size_t b = 0; b < B; ++b) {
        const auto& s = corpus.samples[b * 3 % corpus.samples.size()];
        const Tensor pooled = mean_over_rows(s.features);
        batch.flow.t.push_back(batch_rng.uniform01());
        for (std::size_t f = 0; f < F; ++f) {
            batch.pooled.at(b, f) = pooled.data[f];
            batch.flow.x0.at(b, f) = batch_rng.normal();
            batch.flow.x1.at(b, f) = s.features.at(0, f);
        }
        batch.speaker_ids.push_back(s.speaker_id);
        batch.emotion_ids.push_back(s.emotion_id);
        batch.tokens.push_back(harness::tokens_for_pair(s.pair_id, config.max_tokens, config.vocab));
    }

    harness::CombinedLossOptions opts{config.variant, config.weights, config.flags, std::nullopt};
    auto f = [batch, opts, config](const std::vector<Value>& vs) {
        harness::PipelineModel m;
        m.feature_dim = 8;
        m.embed_dim = 6;
        m.speaker_encoder.projection = vs[0];
        m.speaker_encoder.frozen = false;
        m.emotion_encoder.projection = vs[1];
        m.emotion_encoder.frozen = false;
        m.heads.P_s = vs[2];
        m.heads.P_e = vs[3];
        m.token_encoder.embedding = vs[4];
        m.token_encoder.positional = vs[5];
        m.token_encoder.W_q = vs[6];
        m.token_encoder.W_k = vs[7];
        m.token_encoder.W_v = vs[8];
        m.cross_attention.W_q = vs[9];
        m.cross_attention.W_k = vs[10];
        m.cross_attention.W_v = vs[11];
        m.field.W1 = vs[12];
        m.field.b1 = vs[13];
        m.field.W2 = vs[14];
        m.field.b2 = vs[15];
        m.field.W3 = vs[16];
        m.field.b3 = vs[17];
        m.field.target_dim = 8;
        m.field.cond_dim = 4 * 6;
        m.field.hidden = static_cast<std::size_t>(config.hidden);
        return harness::combined_loss(m, batch, opts).total;
    };
    return check("combined_loss_seed" + std::to_string(seed), f, params);
}

} // namespace

std::vector<GradCheckCase> run_grad_check_suite() {
    std::vector<GradCheckCase> cases;
    for (std::uint64_t seed : kSeeds) {
        cases.push_back(check_orth(seed, false));
        cases.push_back(check_orth(seed, true));
        cases.push_back(check_contrastive(seed));
        cases.push_back(check_cross_attend(seed));
        cases.push_back(check_cfm(seed));
        cases.push_back(check_combined(seed));
    }
    return cases;
}

} // namespace emoflow
