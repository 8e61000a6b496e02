#include "emoflow/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

#include <nlohmann/json.hpp>

#include "emoflow/errors.hpp"
#include "emoflow/linalg.hpp"
#include "emoflow/rng.hpp"
#include "emoflow/tensor_io.hpp"

namespace emoflow::synth {

using ordered_json = nlohmann::ordered_json;

void CorpusSpec::validate() const {
    if (num_speakers < 2) throw ConfigError("corpus spec: num_speakers must be >= 2");
    if (num_emotions < 2) throw ConfigError("corpus spec: num_emotions must be >= 2");
    if (frames < 1) throw ConfigError("corpus spec: frames must be >= 1");
    if (feature_dim < embed_dim)
        throw ConfigError("corpus spec: feature_dim (" + std::to_string(feature_dim) +
                          ") must be >= embed_dim (" + std::to_string(embed_dim) + ")");
    if (embed_dim < 1) throw ConfigError("corpus spec: embed_dim must be >= 1");
    if (noise_sigma < 0.0) throw ConfigError("corpus spec: noise_sigma must be >= 0");
    if (intensity_lo > intensity_hi)
        throw ConfigError("corpus spec: intensity range lo (" + std::to_string(intensity_lo) +
                          ") must be <= hi (" + std::to_string(intensity_hi) + ")");
    if (pairs_per_stratum < 1) throw ConfigError("corpus spec: pairs_per_stratum must be >= 1");
}

Corpus generate_corpus(const CorpusSpec& spec) {
    spec.validate();
    RngStream rng = named_stream(spec.seed, "corpus");

    const std::size_t S = static_cast<std::size_t>(spec.num_speakers);
    const std::size_t E = static_cast<std::size_t>(spec.num_emotions);
    const std::size_t T = static_cast<std::size_t>(spec.frames);
    const std::size_t F = static_cast<std::size_t>(spec.feature_dim);

    Tensor raw = Tensor::zeros({S, F});
    for (auto& v : raw.data) v = rng.normal();
    GroundTruth gt;
    gt.speaker_bases = orthonormal_rows(raw);
    gt.emotion_directions = Tensor::zeros({E, F});
    for (std::size_t e = 1; e < E; ++e) {
        double norm = 0.0;
        for (std::size_t j = 0; j < F; ++j) {
            gt.emotion_directions.at(e, j) = rng.normal();
            norm += gt.emotion_directions.at(e, j) * gt.emotion_directions.at(e, j);
        }
        norm = std::sqrt(norm);
        for (std::size_t j = 0; j < F; ++j) gt.emotion_directions.at(e, j) /= norm;
    }

    Corpus corpus;
    corpus.spec = spec;
    corpus.ground_truth = gt;
    int pair_id = 0;
    for (std::size_t spk = 0; spk < S; ++spk) {
        for (std::size_t emo = 1; emo < E; ++emo) {
            for (int p = 0; p < spec.pairs_per_stratum; ++p) {
                const double intensity = rng.uniform(spec.intensity_lo, spec.intensity_hi);
                SpeechSample emotional;
                emotional.features = Tensor::zeros({T, F});
                emotional.speaker_id = static_cast<int>(spk);
                emotional.emotion_id = static_cast<int>(emo);
                emotional.intensity = intensity;
                emotional.pair_id = pair_id;
                for (std::size_t t = 0; t < T; ++t)
                    for (std::size_t f = 0; f < F; ++f)
                        emotional.features.at(t, f) = gt.speaker_bases.at(spk, f) +
                                                      intensity * gt.emotion_directions.at(emo, f) +
                                                      spec.noise_sigma * rng.normal();
                SpeechSample neutral;
                neutral.features = Tensor::zeros({T, F});
                neutral.speaker_id = static_cast<int>(spk);
                neutral.emotion_id = 0;
                neutral.intensity = 0.0;
                neutral.pair_id = pair_id;
                for (std::size_t t = 0; t < T; ++t)
                    for (std::size_t f = 0; f < F; ++f)
                        neutral.features.at(t, f) = gt.speaker_bases.at(spk, f) + spec.noise_sigma * rng.normal();
                corpus.samples.push_back(std::move(emotional));
                corpus.samples.push_back(std::move(neutral));
                ++pair_id;
            }
        }
    }
    return corpus;
}

SplitResult split(const Corpus& corpus, double train_fraction, std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw ConfigError("split: train_fraction must be in (0,1), got " + std::to_string(train_fraction));

    // stratum key = (speaker, emotion of the emotional member)
    std::map<std::pair<int, int>, std::vector<int>> strata;
    for (const auto& s : corpus.samples)
        if (s.emotion_id != 0) strata[{s.speaker_id, s.emotion_id}].push_back(s.pair_id);

    RngStream rng = named_stream(seed, "split");
    std::vector<char> pair_in_train;
    for (const auto& s : corpus.samples)
        pair_in_train.resize(std::max<std::size_t>(pair_in_train.size(), static_cast<std::size_t>(s.pair_id) + 1), 0);

    for (auto& [key, pair_ids] : strata) {
        if (pair_ids.size() < 2)
            throw SplitError("split: stratum (speaker=" + std::to_string(key.first) +
                             ", emotion=" + std::to_string(key.second) + ") has " +
                             std::to_string(pair_ids.size()) + " pair(s); need >= 2");
        std::sort(pair_ids.begin(), pair_ids.end());
        rng.shuffle(pair_ids);
        const auto n = pair_ids.size();
        std::size_t n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
        n_train = std::clamp<std::size_t>(n_train, 1, n - 1);
        for (std::size_t i = 0; i < n_train; ++i) pair_in_train[static_cast<std::size_t>(pair_ids[i])] = 1;
    }

    SplitResult out;
    for (const auto& s : corpus.samples) {
        if (pair_in_train[static_cast<std::size_t>(s.pair_id)])
            out.train.push_back(s);
        else
            out.eval.push_back(s);
    }
    return out;
}

std::vector<std::pair<std::size_t, std::size_t>> pair_table(const std::vector<SpeechSample>& samples) {
    std::map<int, std::pair<std::size_t, std::size_t>> by_pair;
    std::map<int, std::pair<bool, bool>> seen;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& s = samples[i];
        auto& slot = by_pair[s.pair_id];
        auto& flags = seen[s.pair_id];
        if (s.emotion_id != 0) {
            slot.first = i;
            flags.first = true;
        } else {
            slot.second = i;
            flags.second = true;
        }
    }
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (const auto& [pid, slot] : by_pair) {
        const auto& flags = seen[pid];
        if (flags.first && flags.second) out.push_back(slot);
    }
    return out;
}

namespace {

ordered_json spec_to_json(const CorpusSpec& s) {
    return ordered_json{{"num_speakers", s.num_speakers},
                        {"num_emotions", s.num_emotions},
                        {"frames", s.frames},
                        {"feature_dim", s.feature_dim},
                        {"embed_dim", s.embed_dim},
                        {"noise_sigma", s.noise_sigma},
                        {"emotion_intensity_range", ordered_json::array({s.intensity_lo, s.intensity_hi})},
                        {"pairs_per_stratum", s.pairs_per_stratum},
                        {"seed", s.seed}};
}

CorpusSpec spec_from_json(const nlohmann::json& j) {
    CorpusSpec s;
    try {
        s.num_speakers = j.at("num_speakers").get<int>();
        s.num_emotions = j.at("num_emotions").get<int>();
        s.frames = j.at("frames").get<int>();
        s.feature_dim = j.at("feature_dim").get<int>();
        s.embed_dim = j.at("embed_dim").get<int>();
        if (j.contains("noise_sigma")) s.noise_sigma = j.at("noise_sigma").get<double>();
        if (j.contains("emotion_intensity_range")) {
            const auto& r = j.at("emotion_intensity_range");
            s.intensity_lo = r.at(0).get<double>();
            s.intensity_hi = r.at(1).get<double>();
        }
        if (j.contains("pairs_per_stratum")) s.pairs_per_stratum = j.at("pairs_per_stratum").get<int>();
        if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("corpus spec: ") + e.what());
    }
    return s;
}

std::string sample_filename(std::size_t idx) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "sample_%06zu.tnsr", idx);
    return buf;
}

void hash_bytes(std::uint64_t& h, const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= b[i];
        h *= 0x100000001b3ULL;
    }
}

} // namespace

void save_corpus(const std::filesystem::path& dir, const Corpus& corpus) {
    std::filesystem::create_directories(dir);
    ordered_json j;
    j["spec"] = spec_to_json(corpus.spec);
    ordered_json samples = ordered_json::array();
    std::map<int, ordered_json> pairs;
    for (std::size_t i = 0; i < corpus.samples.size(); ++i) {
        const auto& s = corpus.samples[i];
        const std::string fname = sample_filename(i);
        samples.push_back(ordered_json{{"file", fname},
                                       {"speaker_id", s.speaker_id},
                                       {"emotion_id", s.emotion_id},
                                       {"intensity", s.intensity},
                                       {"pair_id", s.pair_id}});
        write_tnsr(dir / fname, s.features);
    }
    j["samples"] = samples;
    ordered_json pairing = ordered_json::array();
    for (const auto& [e, n] : pair_table(corpus.samples))
        pairing.push_back(ordered_json::array({e, n}));
    j["pairs"] = pairing;
    std::ofstream f(dir / "corpus.json", std::ios::trunc);
    if (!f) throw IoError("save_corpus: cannot write " + (dir / "corpus.json").string());
    f << j.dump(2) << "\n";

    if (corpus.ground_truth) {
        const auto& gt = *corpus.ground_truth;
        const std::size_t F = gt.speaker_bases.cols();
        Tensor stacked = Tensor::zeros({gt.speaker_bases.rows() + gt.emotion_directions.rows(), F});
        std::copy(gt.speaker_bases.data.begin(), gt.speaker_bases.data.end(), stacked.data.begin());
        std::copy(gt.emotion_directions.data.begin(), gt.emotion_directions.data.end(),
                  stacked.data.begin() + static_cast<std::ptrdiff_t>(gt.speaker_bases.numel()));
        write_tnsr(dir / "ground_truth.tnsr", stacked);
    }
}

Corpus load_corpus(const std::filesystem::path& dir) {
    std::ifstream f(dir / "corpus.json");
    if (!f) throw IoError("load_corpus: cannot open " + (dir / "corpus.json").string());
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("load_corpus: bad corpus.json: ") + e.what());
    }
    Corpus corpus;
    corpus.spec = spec_from_json(j.at("spec"));
    for (const auto& sj : j.at("samples")) {
        SpeechSample s;
        s.features = read_tnsr(dir / sj.at("file").get<std::string>());
        s.speaker_id = sj.at("speaker_id").get<int>();
        s.emotion_id = sj.at("emotion_id").get<int>();
        s.intensity = sj.at("intensity").get<double>();
        s.pair_id = sj.at("pair_id").get<int>();
        corpus.samples.push_back(std::move(s));
    }
    const auto gt_path = dir / "ground_truth.tnsr";
    if (std::filesystem::exists(gt_path)) {
        Tensor stacked = read_tnsr(gt_path);
        const std::size_t S = static_cast<std::size_t>(corpus.spec.num_speakers);
        const std::size_t E = static_cast<std::size_t>(corpus.spec.num_emotions);
        const std::size_t F = stacked.cols();
        if (stacked.rows() != S + E) throw IoError("load_corpus: ground_truth.tnsr has unexpected rows");
        GroundTruth gt;
        gt.speaker_bases = Tensor::zeros({S, F});
        gt.emotion_directions = Tensor::zeros({E, F});
        std::copy(stacked.data.begin(), stacked.data.begin() + static_cast<std::ptrdiff_t>(S * F),
                  gt.speaker_bases.data.begin());
        std::copy(stacked.data.begin() + static_cast<std::ptrdiff_t>(S * F), stacked.data.end(),
                  gt.emotion_directions.data.begin());
        corpus.ground_truth = std::move(gt);
    }
    return corpus;
}

std::string corpus_hash(const Corpus& corpus) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    const std::string spec_str = spec_to_json(corpus.spec).dump();
    hash_bytes(h, spec_str.data(), spec_str.size());
    for (const auto& s : corpus.samples) {
        hash_bytes(h, &s.speaker_id, sizeof(s.speaker_id));
        hash_bytes(h, &s.emotion_id, sizeof(s.emotion_id));
        hash_bytes(h, &s.intensity, sizeof(s.intensity));
        hash_bytes(h, &s.pair_id, sizeof(s.pair_id));
        hash_bytes(h, s.features.data.data(), s.features.data.size() * sizeof(double));
    }
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// JSON helpers shared with the CLI
CorpusSpec corpus_spec_from_json(const nlohmann::json& j) {
    return spec_from_json(j);
}

nlohmann::ordered_json corpus_spec_to_json(const CorpusSpec& s) {
    return spec_to_json(s);
}

} // namespace emoflow::synth
