// Command-line surface: gen-data, train, ablate, extract-emotion, eval,
// grad-check. Every command resolves its configuration (JSON file plus
// --set overrides plus explicit flags), runs, and writes a run manifest to
// <out>/manifest.json on both success and failure. Exit codes: 0 success,
// 1 numerical/runtime failure, 2 configuration error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "emoflow/encoders.hpp"
#include "emoflow/errors.hpp"
#include "emoflow/gradsuite.hpp"
#include "emoflow/harness.hpp"
#include "emoflow/synthdata.hpp"
#include "emoflow/tensor_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

constexpr const char* kToolVersion = "0.1.0";

struct CommonOpts {
    std::string out;
    std::optional<std::uint64_t> seed;
    std::string config_path;
    std::vector<std::string> sets;
    bool json_errors = false;
};

void add_common(CLI::App* cmd, CommonOpts& opts, bool out_required) {
    auto* out = cmd->add_option("--out", opts.out, "output directory");
    if (out_required) out->required();
    cmd->add_option("--seed", opts.seed, "seed override (u64)");
    cmd->add_option("--config", opts.config_path, "JSON config file");
    cmd->add_option("--set", opts.sets, "config override, dotted path: --set key.sub=value");
    cmd->add_flag("--json-errors", opts.json_errors, "machine-readable JSON errors on stderr");
}

void write_text(const fs::path& path, const std::string& content) {
    std::ofstream f(path, std::ios::trunc | std::ios::binary);
    if (!f) throw emoflow::IoError("cannot write " + path.string());
    f << content;
}

json load_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw emoflow::ConfigError("cannot open config file: " + path);
    try {
        json j;
        f >> j;
        return j;
    } catch (const json::exception& e) {
        throw emoflow::ConfigError("bad JSON in " + path + ": " + e.what());
    }
}

// applies "a.b.c=value" into j; value parsed as JSON when possible
void apply_set(json& j, const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
        throw emoflow::ConfigError("--set expects key=value, got '" + kv + "'");
    const std::string key = kv.substr(0, eq);
    const std::string raw = kv.substr(eq + 1);
    json value;
    try {
        value = json::parse(raw);
    } catch (const json::exception&) {
        value = raw; // plain string
    }
    json* cursor = &j;
    std::size_t start = 0;
    while (true) {
        const auto dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? dot : dot - start);
        if (part.empty()) throw emoflow::ConfigError("--set: empty path segment in '" + key + "'");
        if (dot == std::string::npos) {
            (*cursor)[part] = value;
            break;
        }
        cursor = &(*cursor)[part];
        start = dot + 1;
    }
}

json resolve_config(const CommonOpts& opts) {
    json j = opts.config_path.empty() ? json::object() : load_json_file(opts.config_path);
    for (const auto& kv : opts.sets) apply_set(j, kv);
    return j;
}

struct Manifest {
    std::string command;
    std::uint64_t seed = 0;
    ordered_json config = ordered_json::object();
    std::optional<std::string> corpus_hash;
    std::vector<std::string> outputs;
    std::optional<std::string> error;

    ordered_json to_json() const {
        ordered_json j;
        j["command"] = command;
        j["tool_version"] = kToolVersion;
        j["seed"] = seed;
        j["config"] = config;
        if (corpus_hash) j["corpus_hash"] = *corpus_hash;
        j["outputs"] = outputs;
        if (error) j["error"] = *error;
        return j;
    }
};

void write_manifest(const std::string& out_dir, const Manifest& m) {
    if (out_dir.empty()) return;
    fs::create_directories(out_dir);
    write_text(fs::path(out_dir) / "manifest.json", m.to_json().dump(2) + "\n");
}

void report_error(const CommonOpts& opts, const std::string& kind, const std::string& message) {
    if (opts.json_errors) {
        std::cerr << ordered_json{{"kind", kind}, {"message", message}}.dump() << "\n";
    } else {
        std::cerr << "error (" << kind << "): " << message << "\n";
    }
}

template <typename Fn>
int run_guarded(const CommonOpts& opts, Manifest& manifest, Fn fn) {
    try {
        fn();
        write_manifest(opts.out, manifest);
        return 0;
    } catch (const emoflow::ConfigError& e) {
        manifest.error = e.what();
        write_manifest(opts.out, manifest);
        report_error(opts, "config", e.what());
        return 2;
    } catch (const std::exception& e) {
        manifest.error = e.what();
        write_manifest(opts.out, manifest);
        report_error(opts, "numeric", e.what());
        return 1;
    }
}

// ---- gen-data ---------------------------------------------------------------

int cmd_gen_data(const CommonOpts& opts, const std::string& spec_path) {
    Manifest manifest;
    manifest.command = "gen-data";
    return run_guarded(opts, manifest, [&] {
        json spec_json = spec_path.empty() ? json::object() : load_json_file(spec_path);
        for (const auto& kv : opts.sets) apply_set(spec_json, kv);
        emoflow::synth::CorpusSpec spec = emoflow::synth::corpus_spec_from_json(spec_json);
        if (opts.seed) spec.seed = *opts.seed;
        spec.validate();
        manifest.seed = spec.seed;
        manifest.config = emoflow::synth::corpus_spec_to_json(spec);

        auto corpus = emoflow::synth::generate_corpus(spec);
        emoflow::synth::save_corpus(opts.out, corpus);
        manifest.corpus_hash = emoflow::synth::corpus_hash(corpus);
        manifest.outputs.push_back("corpus.json");
        manifest.outputs.push_back("ground_truth.tnsr");
        for (std::size_t i = 0; i < corpus.samples.size(); ++i) {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "sample_%06zu.tnsr", i);
            manifest.outputs.push_back(buf);
        }
        std::cout << "gen-data: " << corpus.samples.size() << " samples, hash " << *manifest.corpus_hash
                  << "\n";
    });
}

// ---- train ------------------------------------------------------------------

emoflow::harness::TrainConfig make_train_config(const CommonOpts& opts, const std::string& variant,
                                                const std::string& corpus_dir) {
    json j = resolve_config(opts);
    auto config = emoflow::harness::train_config_from_json(j);
    if (!variant.empty()) config.variant = emoflow::harness::variant_from_string(variant);
    if (!corpus_dir.empty()) config.corpus_dir = corpus_dir;
    if (opts.seed) config.seed = *opts.seed;
    config.validate();
    if (config.corpus_dir.empty())
        throw emoflow::ConfigError("train: no corpus directory (use --corpus or config key 'corpus')");
    return config;
}

int cmd_train(const CommonOpts& opts, const std::string& variant, const std::string& corpus_dir) {
    Manifest manifest;
    manifest.command = "train";
    return run_guarded(opts, manifest, [&] {
        auto config = make_train_config(opts, variant, corpus_dir);
        manifest.seed = config.seed;
        manifest.config = emoflow::harness::train_config_to_json(config);

        auto corpus = emoflow::synth::load_corpus(config.corpus_dir);
        auto out = emoflow::harness::train(config, corpus);
        manifest.corpus_hash = out.corpus_hash;
        auto report = emoflow::harness::evaluate(
            out.model, config, out.split.train, out.split.eval,
            corpus.ground_truth ? &*corpus.ground_truth : nullptr);

        fs::create_directories(opts.out);
        write_text(fs::path(opts.out) / "train_log.csv", emoflow::harness::train_log_csv(out.log));
        ordered_json report_json;
        report_json["config"] = emoflow::harness::train_config_to_json(config);
        report_json["corpus_hash"] = out.corpus_hash;
        report_json["eval"] = emoflow::harness::report_to_json(report);
        write_text(fs::path(opts.out) / "report.json", report_json.dump(2) + "\n");
        emoflow::harness::save_model(fs::path(opts.out) / "model", out.model, config);
        manifest.outputs = {"train_log.csv", "report.json", "model"};
        std::cout << "train " << emoflow::harness::to_string(config.variant) << " seed " << config.seed
                  << ": final loss " << out.log.back().loss_total
                  << ", cross-cos " << report.mean_abs_cross_cosine << "\n";
    });
}

// ---- ablate -------------------------------------------------------------------

int cmd_ablate(const CommonOpts& opts, const std::string& corpus_dir) {
    Manifest manifest;
    manifest.command = "ablate";
    return run_guarded(opts, manifest, [&] {
        auto config = make_train_config(opts, "", corpus_dir);
        manifest.seed = config.seed;
        manifest.config = emoflow::harness::train_config_to_json(config);

        auto corpus = emoflow::synth::load_corpus(config.corpus_dir);
        manifest.corpus_hash = emoflow::synth::corpus_hash(corpus);
        auto rows = emoflow::harness::ablate(config, corpus);
        fs::create_directories(opts.out);
        write_text(fs::path(opts.out) / "ablation.csv", emoflow::harness::ablation_csv(rows));
        manifest.outputs = {"ablation.csv"};
        for (const auto& r : rows)
            std::cout << "ablate " << r.variant << ": " << r.status
                      << (r.report ? " cross-cos " + std::to_string(r.report->mean_abs_cross_cosine) : "")
                      << "\n";
    });
}

// ---- extract-emotion ------------------------------------------------------------

int cmd_extract_emotion(const CommonOpts& opts, const std::string& corpus_dir, int n, int emotion) {
    Manifest manifest;
    manifest.command = "extract-emotion";
    return run_guarded(opts, manifest, [&] {
        const std::uint64_t seed = opts.seed.value_or(1);
        manifest.seed = seed;
        manifest.config = ordered_json{{"corpus", corpus_dir}, {"n", n}, {"emotion", emotion}};
        if (n < 1) throw emoflow::ConfigError("extract-emotion: --n must be >= 1");

        auto corpus = emoflow::synth::load_corpus(corpus_dir);
        manifest.corpus_hash = emoflow::synth::corpus_hash(corpus);
        emoflow::RngStream rng = emoflow::named_stream(seed, "init");
        auto encoder = emoflow::enc::make_frozen_orthonormal_encoder(
            static_cast<std::size_t>(corpus.spec.feature_dim),
            static_cast<std::size_t>(corpus.spec.embed_dim), rng);

        std::vector<int> emotions;
        if (emotion >= 1)
            emotions.push_back(emotion);
        else
            for (int e = 1; e < corpus.spec.num_emotions; ++e) emotions.push_back(e);

        fs::create_directories(opts.out);
        for (int emo : emotions) {
            auto res = emoflow::enc::extract_emotion(
                corpus.samples, encoder, emo, n,
                corpus.ground_truth ? &*corpus.ground_truth : nullptr);
            const std::string base = "emotion_" + std::to_string(emo);
            emoflow::write_tnsr(fs::path(opts.out) / (base + ".tnsr"), res.embedding.vector);
            ordered_json sidecar{{"emotion_id", emo},
                                 {"N", res.embedding.num_pairs},
                                 {"pair_ids", res.pair_ids},
                                 {"degenerate_skipped", res.degenerate_skipped}};
            if (res.cosine_vs_oracle) sidecar["cosine_vs_oracle"] = *res.cosine_vs_oracle;
            write_text(fs::path(opts.out) / (base + ".json"), sidecar.dump(2) + "\n");
            manifest.outputs.push_back(base + ".tnsr");
            manifest.outputs.push_back(base + ".json");
            std::cout << "extract-emotion " << emo << ": N=" << n;
            if (res.cosine_vs_oracle) std::cout << " cosine_vs_oracle=" << *res.cosine_vs_oracle;
            std::cout << "\n";
        }
    });
}

// ---- eval ---------------------------------------------------------------------

int cmd_eval(const CommonOpts& opts, const std::string& model_dir, const std::string& corpus_dir) {
    Manifest manifest;
    manifest.command = "eval";
    return run_guarded(opts, manifest, [&] {
        auto loaded = emoflow::harness::load_model(model_dir);
        auto config = loaded.config;
        if (!corpus_dir.empty()) config.corpus_dir = corpus_dir;
        manifest.seed = config.seed;
        manifest.config = emoflow::harness::train_config_to_json(config);

        auto corpus = emoflow::synth::load_corpus(config.corpus_dir);
        manifest.corpus_hash = emoflow::synth::corpus_hash(corpus);
        auto split = emoflow::synth::split(corpus, config.train_fraction, config.seed);
        auto report = emoflow::harness::evaluate(loaded.model, config, split.train, split.eval,
                                                 corpus.ground_truth ? &*corpus.ground_truth : nullptr);
        fs::create_directories(opts.out);
        ordered_json report_json;
        report_json["config"] = emoflow::harness::train_config_to_json(config);
        report_json["corpus_hash"] = *manifest.corpus_hash;
        report_json["eval"] = emoflow::harness::report_to_json(report);
        write_text(fs::path(opts.out) / "report.json", report_json.dump(2) + "\n");
        manifest.outputs = {"report.json"};
        std::cout << "eval: cross-cos " << report.mean_abs_cross_cosine << ", emotion probe "
                  << report.emotion_probe_acc << ", speaker probe " << report.speaker_probe_acc << "\n";
    });
}

// ---- grad-check ------------------------------------------------------------------

int cmd_grad_check(const CommonOpts& opts) {
    Manifest manifest;
    manifest.command = "grad-check";
    manifest.seed = opts.seed.value_or(0);
    bool all_pass = true;
    const int rc = run_guarded(opts, manifest, [&] {
        auto cases = emoflow::run_grad_check_suite();
        std::printf("%-34s %14s %10s  %s\n", "case", "max_rel_err", "tolerance", "status");
        for (const auto& c : cases) {
            std::printf("%-34s %14.3e %10.0e  %s\n", c.name.c_str(), c.max_rel_err, c.tolerance,
                        c.pass ? "PASS" : "FAIL");
            all_pass = all_pass && c.pass;
        }
        if (!all_pass) throw emoflow::NumericError("grad-check: at least one case failed");
    });
    return rc;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"synthetic speaker-emotion disentanglement testbed"};
    app.require_subcommand(1);

    CommonOpts gen_opts;
    std::string gen_spec;
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic corpus");
    gen->add_option("--spec", gen_spec, "corpus spec JSON file");
    add_common(gen, gen_opts, true);

    CommonOpts train_opts;
    std::string train_variant, train_corpus;
    auto* train = app.add_subcommand("train", "train one variant and evaluate");
    train->add_option("--variant", train_variant, "v1|v2|v3|v4");
    train->add_option("--corpus", train_corpus, "corpus directory");
    add_common(train, train_opts, true);

    CommonOpts ablate_opts;
    std::string ablate_corpus;
    auto* ablate = app.add_subcommand("ablate", "run the v1..v4 ladder");
    ablate->add_option("--corpus", ablate_corpus, "corpus directory");
    add_common(ablate, ablate_opts, true);

    CommonOpts extract_opts;
    std::string extract_corpus;
    int extract_n = 10;
    int extract_emotion = -1;
    auto* extract = app.add_subcommand("extract-emotion", "aggregate emotion embeddings");
    extract->add_option("--corpus", extract_corpus, "corpus directory")->required();
    extract->add_option("--n", extract_n, "number of pairs to aggregate (default 10)");
    extract->add_option("--emotion", extract_emotion, "emotion id (default: all non-neutral)");
    add_common(extract, extract_opts, true);

    CommonOpts eval_opts;
    std::string eval_model, eval_corpus;
    auto* evalc = app.add_subcommand("eval", "evaluate a saved model");
    evalc->add_option("--model", eval_model, "model directory")->required();
    evalc->add_option("--corpus", eval_corpus, "corpus directory override");
    add_common(evalc, eval_opts, true);

    CommonOpts grad_opts;
    auto* grad = app.add_subcommand("grad-check", "finite-difference gradient suite");
    add_common(grad, grad_opts, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    if (gen->parsed()) return cmd_gen_data(gen_opts, gen_spec);
    if (train->parsed()) return cmd_train(train_opts, train_variant, train_corpus);
    if (ablate->parsed()) return cmd_ablate(ablate_opts, ablate_corpus);
    if (extract->parsed()) return cmd_extract_emotion(extract_opts, extract_corpus, extract_n, extract_emotion);
    if (evalc->parsed()) return cmd_eval(eval_opts, eval_model, eval_corpus);
    if (grad->parsed()) return cmd_grad_check(grad_opts);
    return 2;
}
