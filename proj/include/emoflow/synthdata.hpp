#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "emoflow/tensor.hpp"

namespace emoflow::synth {

// Synthetic factorized stand-in for an emotional speech corpus. Every sample
// is speaker basis + intensity * emotion direction + iid Gaussian noise, so
// disentanglement and direction-recovery claims can be checked against exact
// ground truth.
struct CorpusSpec {
    int num_speakers = 4;
    int num_emotions = 4; // index 0 is Neutral
    int frames = 20;      // T
    int feature_dim = 32; // F
    int embed_dim = 16;   // D
    double noise_sigma = 0.1;
    double intensity_lo = 0.5;
    double intensity_hi = 1.0;
    int pairs_per_stratum = 50; // emotional/neutral pairs per (speaker, emotion)
    std::uint64_t seed = 1;

    void validate() const; // throws ConfigError
};

struct SpeechSample {
    Tensor features; // T x F
    int speaker_id = 0;
    int emotion_id = 0;
    double intensity = 0.0; // always 0 for Neutral
    int pair_id = 0;        // links the emotional and neutral member of a pair
};

struct GroundTruth {
    Tensor speaker_bases;      // num_speakers x F, mutually orthogonal rows
    Tensor emotion_directions; // num_emotions x F, row 0 zero, rows 1.. unit norm
};

struct Corpus {
    CorpusSpec spec;
    std::vector<SpeechSample> samples;
    std::optional<GroundTruth> ground_truth;
};

// Deterministic given spec.seed; every emotional sample gets a neutral partner
// with the same speaker and fresh noise.
Corpus generate_corpus(const CorpusSpec& spec);

struct SplitResult {
    std::vector<SpeechSample> train;
    std::vector<SpeechSample> eval;
};

// Pair-preserving split, stratified by (speaker, emotion); both members of a
// pair land on the same side. A stratum with fewer than 2 pairs raises
// SplitError naming the stratum.
SplitResult split(const Corpus& corpus, double train_fraction, std::uint64_t seed);

// (emotional index, neutral index) per pair_id, in pair_id order
std::vector<std::pair<std::size_t, std::size_t>> pair_table(const std::vector<SpeechSample>& samples);

void save_corpus(const std::filesystem::path& dir, const Corpus& corpus);
Corpus load_corpus(const std::filesystem::path& dir);

// content hash over spec, sample metadata and feature bytes (FNV-1a 64)
std::string corpus_hash(const Corpus& corpus);

CorpusSpec corpus_spec_from_json(const nlohmann::json& j);
nlohmann::ordered_json corpus_spec_to_json(const CorpusSpec& s);

} // namespace emoflow::synth
