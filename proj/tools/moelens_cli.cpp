// moelens command-line frontend: tokenizer training/encoding, model training,
// greedy generation, and the expert-choice analysis pipeline.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "moelens/lens/cluster.hpp"
#include "moelens/lens/io.hpp"
#include "moelens/lens/profile.hpp"
#include "moelens/lens/svg.hpp"
#include "moelens/lens/tsne.hpp"
#include "moelens/manifest.hpp"
#include "moelens/model/checkpoint.hpp"
#include "moelens/model/model.hpp"
#include "moelens/tokenizer.hpp"
#include "moelens/train/trainer.hpp"

namespace fs = std::filesystem;
using namespace moelens;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << content;
}

void prepare_out_dir(const std::string& dir, bool force) {
    if (fs::exists(fs::path(dir) / "manifest.json") && !force)
        throw std::runtime_error("output directory '" + dir +
                                 "' already holds a run; pass --force to overwrite");
    fs::create_directories(dir);
}

ModelConfig resolve_model_config(const std::string& preset, const std::string& config_path) {
    if (!config_path.empty())
        return ModelConfig::from_json(nlohmann::json::parse(read_file(config_path)));
    if (preset == "tiny") return ModelConfig::tiny();
    if (preset == "table1") return ModelConfig::table1();
    throw std::runtime_error("unknown preset '" + preset + "' (expected tiny or table1)");
}

std::vector<int> parse_id_file(const std::string& path) {
    std::istringstream ss(read_file(path));
    std::vector<int> ids;
    int v;
    while (ss >> v) ids.push_back(v);
    return ids;
}

std::string format_ids(const std::vector<int>& ids) {
    std::string out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i) out += ' ';
        out += std::to_string(ids[i]);
    }
    out += '\n';
    return out;
}

// --- subcommand bodies -----------------------------------------------------

int run_tokenizer_train(const std::vector<std::string>& corpus_paths, std::size_t target_size,
                        const std::string& out_dir, bool force) {
    prepare_out_dir(out_dir, force);
    RunManifest man("tokenizer train", out_dir);
    man.set_config({{"target_size", target_size}});
    std::vector<std::string> docs;
    for (const auto& p : corpus_paths) {
        man.add_input(p, p);
        docs.push_back(read_file(p));
    }
    man.write();
    auto vocab = tok::train_bpe(docs, target_size);
    const std::string vocab_path = (fs::path(out_dir) / "vocab.txt").string();
    vocab.save(vocab_path);
    man.add_output("vocab", vocab_path);
    man.write();
    std::printf("trained vocabulary of %zu tokens (%zu merges) -> %s\n", vocab.size(),
                vocab.merge_count(), vocab_path.c_str());
    return 0;
}

int run_tokenizer_encode(const std::string& vocab_path, const std::string& input,
                         const std::string& out_dir, bool force) {
    prepare_out_dir(out_dir, force);
    RunManifest man("tokenizer encode", out_dir);
    man.add_input("vocab", vocab_path);
    man.add_input("input", input);
    man.write();
    auto vocab = tok::Vocabulary::load(vocab_path);
    auto seq = tok::encode(read_file(input), vocab);
    const std::string out_path = (fs::path(out_dir) / "tokens.txt").string();
    write_file(out_path, format_ids(seq.ids));
    man.add_output("tokens", out_path);
    man.write();
    std::printf("encoded %zu tokens -> %s\n", seq.length(), out_path.c_str());
    return 0;
}

int run_tokenizer_decode(const std::string& vocab_path, const std::string& input,
                         const std::string& out_dir, bool force) {
    prepare_out_dir(out_dir, force);
    RunManifest man("tokenizer decode", out_dir);
    man.add_input("vocab", vocab_path);
    man.add_input("input", input);
    man.write();
    auto vocab = tok::Vocabulary::load(vocab_path);
    tok::TokenSequence seq{parse_id_file(input)};
    const std::string out_path = (fs::path(out_dir) / "decoded.txt").string();
    write_file(out_path, tok::decode(seq, vocab));
    man.add_output("decoded", out_path);
    man.write();
    return 0;
}

int run_train(const std::string& preset, const std::string& config_path,
              const std::string& vocab_path, const std::string& corpus_path,
              std::size_t steps, std::uint64_t seed, double lr, std::size_t seq_len,
              const std::string& out_dir, bool force) {
    prepare_out_dir(out_dir, force);
    ModelConfig cfg = resolve_model_config(preset, config_path);
    auto vocab = tok::Vocabulary::load(vocab_path);
    if (vocab.size() > cfg.vocab_size) cfg.vocab_size = vocab.size();
    TrainConfig tc;
    tc.total_steps = steps;
    tc.seed = seed;
    tc.lr_init = lr;
    tc.seq_len = seq_len;
    tc.validate();

    RunManifest man("train", out_dir);
    man.set_seed(seed);
    man.set_config({{"model", cfg.to_json()},
                    {"steps", steps},
                    {"lr_init", lr},
                    {"seq_len", seq_len}});
    man.add_input("vocab", vocab_path);
    man.add_input("corpus", corpus_path);
    man.write();

    auto stream = tok::encode(read_file(corpus_path), vocab).ids;
    Model model(cfg);
    model.init_weights(seed);
    auto result = train(model, stream, tc);
    if (result.data_exhausted)
        throw std::runtime_error("corpus too small for a single training batch");

    const std::string hist_path = (fs::path(out_dir) / "history.csv").string();
    write_history(result.history, hist_path);
    const std::string ckpt_dir = (fs::path(out_dir) / "checkpoint").string();
    save_checkpoint(model, ckpt_dir);
    man.add_output("history", hist_path);
    man.add_output("checkpoint_manifest", ckpt_dir + "/manifest.txt");
    man.add_output("checkpoint_weights", ckpt_dir + "/weights.bin");
    man.write();
    if (!result.history.empty())
        std::printf("trained %zu steps: lm_loss %.4f -> %.4f\n", result.history.size(),
                    result.history.front().lm_loss, result.history.back().lm_loss);
    return 0;
}

int run_generate(const std::string& ckpt_dir, const std::string& vocab_path,
                 const std::string& prompt, std::size_t max_tokens, const std::string& out_dir,
                 bool force) {
    prepare_out_dir(out_dir, force);
    RunManifest man("generate", out_dir);
    man.add_input("checkpoint_manifest", (fs::path(ckpt_dir) / "manifest.txt").string());
    man.add_input("checkpoint_weights", (fs::path(ckpt_dir) / "weights.bin").string());
    man.add_input("vocab", vocab_path);
    man.set_config({{"prompt", prompt}, {"max_tokens", max_tokens}});
    man.write();
    auto vocab = tok::Vocabulary::load(vocab_path);
    Model model = load_checkpoint(ckpt_dir);
    auto seq = model.generate(tok::encode(prompt, vocab).ids, max_tokens);
    const std::string text = tok::decode(tok::TokenSequence{seq}, vocab);
    const std::string out_path = (fs::path(out_dir) / "generation.txt").string();
    write_file(out_path, text + "\n");
    man.add_output("generation", out_path);
    man.write();
    std::printf("%s\n", text.c_str());
    return 0;
}

int run_analyze(const std::string& ckpt_dir, const std::string& vocab_path,
                const std::string& corpus_dir, const std::string& reducer, double perplexity,
                std::size_t iterations, std::uint64_t seed, bool mean_normalize,
                const std::string& out_dir, bool force) {
    prepare_out_dir(out_dir, force);
    RunManifest man("analyze", out_dir);
    man.set_seed(seed);
    man.set_config({{"reducer", reducer},
                    {"perplexity", perplexity},
                    {"iterations", iterations},
                    {"mean_normalize", mean_normalize}});
    man.add_input("checkpoint_manifest", (fs::path(ckpt_dir) / "manifest.txt").string());
    man.add_input("checkpoint_weights", (fs::path(ckpt_dir) / "weights.bin").string());
    man.add_input("vocab", vocab_path);
    man.write();

    auto vocab = tok::Vocabulary::load(vocab_path);
    Model model = load_checkpoint(ckpt_dir);

    // one subdirectory per label, files sorted for determinism
    std::vector<lens::LabeledDocument> docs;
    std::vector<std::string> label_dirs;
    for (const auto& entry : fs::directory_iterator(corpus_dir))
        if (entry.is_directory()) label_dirs.push_back(entry.path().string());
    std::sort(label_dirs.begin(), label_dirs.end());
    if (label_dirs.size() < 2)
        throw std::runtime_error("analyze: need at least 2 label subdirectories in " +
                                 corpus_dir);
    for (const auto& dir : label_dirs) {
        std::vector<std::string> files;
        for (const auto& f : fs::directory_iterator(dir))
            if (f.is_regular_file()) files.push_back(f.path().string());
        std::sort(files.begin(), files.end());
        for (const auto& f : files)
            docs.push_back({fs::path(dir).filename().string(),
                            tok::encode(read_file(f), vocab).ids});
    }

    auto collected = lens::collect_profiles(model, docs, mean_normalize);
    if (collected.skipped_empty > 0)
        std::fprintf(stderr, "warning: skipped %zu empty documents\n", collected.skipped_empty);
    const auto& profiles = collected.profiles;

    const std::string prof_path = (fs::path(out_dir) / "profiles.csv").string();
    lens::write_profiles(profiles, prof_path);
    man.add_output("profiles", prof_path);

    nlohmann::json report;
    if (reducer == "tsne") {
        const std::size_t n = profiles.size();
        Tensor mat({n, profiles.front().concatenated.size()});
        std::vector<std::string> labels;
        for (std::size_t i = 0; i < n; ++i) {
            std::copy(profiles[i].concatenated.begin(), profiles[i].concatenated.end(),
                      mat.data() + i * mat.dim(1));
            labels.push_back(profiles[i].label);
        }
        lens::TsneConfig tcfg;
        tcfg.perplexity = std::min(perplexity, (static_cast<double>(n) - 1.0) / 3.0 - 1e-9);
        tcfg.iterations = iterations;
        tcfg.seed = seed;
        auto emb = lens::tsne_reduce(mat, tcfg);
        const std::string emb_path = (fs::path(out_dir) / "embedding.csv").string();
        lens::write_embedding(emb, labels, emb_path);
        const std::string plot_path = (fs::path(out_dir) / "plot.svg").string();
        lens::emit_plot(emb, labels, plot_path);
        man.add_output("embedding", emb_path);
        man.add_output("plot", plot_path);
        auto rep = lens::cluster_report(profiles, &emb.coords);
        report["silhouette"] = rep.silhouette;
        report["mean_intra_cosine"] = rep.mean_intra_cosine;
        report["mean_inter_cosine"] = rep.mean_inter_cosine;
        for (const auto& p : rep.pairs)
            report["pairs"].push_back({{"label_a", p.label_a},
                                       {"label_b", p.label_b},
                                       {"mean_cosine_distance", p.mean_cosine_distance}});
    } else if (reducer == "none") {
        auto rep = lens::cluster_report(profiles, nullptr);
        report["mean_intra_cosine"] = rep.mean_intra_cosine;
        report["mean_inter_cosine"] = rep.mean_inter_cosine;
        for (const auto& p : rep.pairs)
            report["pairs"].push_back({{"label_a", p.label_a},
                                       {"label_b", p.label_b},
                                       {"mean_cosine_distance", p.mean_cosine_distance}});
    } else {
        throw std::runtime_error("unknown reducer '" + reducer + "' (expected tsne or none)");
    }
    const std::string rep_path = (fs::path(out_dir) / "report.json").string();
    write_file(rep_path, report.dump(2) + "\n");
    man.add_output("report", rep_path);
    man.write();
    std::printf("analyzed %zu profiles across %zu labels -> %s\n", profiles.size(),
                label_dirs.size(), out_dir.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"moelens: scientific-tokenizer MoE transformer with expert-choice analysis"};
    app.require_subcommand(1);

    // tokenizer
    auto* tok_cmd = app.add_subcommand("tokenizer", "train/apply the scientific tokenizer");
    tok_cmd->require_subcommand(1);
    std::vector<std::string> corpus_paths;
    std::size_t target_size = 512;
    std::string out_dir, vocab_path, input_path;
    bool force = false;

    auto* tt = tok_cmd->add_subcommand("train", "train BPE merges over a corpus");
    tt->add_option("--corpus", corpus_paths, "corpus text files")
        ->required()
        ->check(CLI::ExistingFile);
    tt->add_option("--target-size", target_size, "total vocabulary size");
    tt->add_option("--out", out_dir, "output directory")->required();
    tt->add_flag("--force", force, "overwrite an existing run directory");

    auto* te = tok_cmd->add_subcommand("encode", "encode a document to token ids");
    te->add_option("--vocab", vocab_path, "vocabulary file")->required()->check(CLI::ExistingFile);
    te->add_option("--input", input_path, "document to encode")->required()->check(CLI::ExistingFile);
    te->add_option("--out", out_dir, "output directory")->required();
    te->add_flag("--force", force, "overwrite an existing run directory");

    auto* td = tok_cmd->add_subcommand("decode", "decode token ids back to text");
    td->add_option("--vocab", vocab_path, "vocabulary file")->required()->check(CLI::ExistingFile);
    td->add_option("--input", input_path, "id file to decode")->required()->check(CLI::ExistingFile);
    td->add_option("--out", out_dir, "output directory")->required();
    td->add_flag("--force", force, "overwrite an existing run directory");

    // train
    std::string preset = "tiny", config_path, corpus_path;
    std::size_t steps = 500, seq_len = 32, max_tokens = 32, iterations = 1000;
    std::uint64_t seed = 0;
    double lr = 1e-3, perplexity = 30.0;
    auto* tr = app.add_subcommand("train", "train a model on an encoded corpus");
    tr->add_option("--preset", preset, "model preset (tiny, table1)");
    tr->add_option("--config", config_path, "model config JSON (overrides --preset)")
        ->check(CLI::ExistingFile);
    tr->add_option("--vocab", vocab_path, "vocabulary file")->required()->check(CLI::ExistingFile);
    tr->add_option("--corpus", corpus_path, "training corpus text file")
        ->required()
        ->check(CLI::ExistingFile);
    tr->add_option("--steps", steps, "training steps");
    tr->add_option("--seed", seed, "rng seed");
    tr->add_option("--lr", lr, "peak learning rate");
    tr->add_option("--seq-len", seq_len, "training window length");
    tr->add_option("--out", out_dir, "output directory")->required();
    tr->add_flag("--force", force, "overwrite an existing run directory");

    // generate
    std::string ckpt_dir, prompt;
    auto* ge = app.add_subcommand("generate", "greedy continuation from a checkpoint");
    ge->add_option("--checkpoint", ckpt_dir, "checkpoint directory")
        ->required()
        ->check(CLI::ExistingDirectory);
    ge->add_option("--vocab", vocab_path, "vocabulary file")->required()->check(CLI::ExistingFile);
    ge->add_option("--prompt", prompt, "prompt text")->required();
    ge->add_option("--max-tokens", max_tokens, "tokens to generate");
    ge->add_option("--out", out_dir, "output directory")->required();
    ge->add_flag("--force", force, "overwrite an existing run directory");

    // analyze
    std::string corpus_dir, reducer = "tsne";
    bool mean_normalize = false;
    auto* an = app.add_subcommand("analyze", "expert-choice profiles, t-SNE and plots");
    an->add_option("--checkpoint", ckpt_dir, "checkpoint directory")
        ->required()
        ->check(CLI::ExistingDirectory);
    an->add_option("--vocab", vocab_path, "vocabulary file")->required()->check(CLI::ExistingFile);
    an->add_option("--corpus", corpus_dir, "labeled corpus directory (one subdir per label)")
        ->required()
        ->check(CLI::ExistingDirectory);
    an->add_option("--reducer", reducer, "tsne or none");
    an->add_option("--perplexity", perplexity, "t-SNE perplexity (capped at (n-1)/3)");
    an->add_option("--iterations", iterations, "t-SNE iterations");
    an->add_option("--seed", seed, "rng seed");
    an->add_flag("--mean-normalize", mean_normalize,
                 "average gate logits over tokens before the softmax");
    an->add_option("--out", out_dir, "output directory")->required();
    an->add_flag("--force", force, "overwrite an existing run directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;  // stable contract: usage errors exit 2
    }

    try {
        if (tt->parsed()) return run_tokenizer_train(corpus_paths, target_size, out_dir, force);
        if (te->parsed()) return run_tokenizer_encode(vocab_path, input_path, out_dir, force);
        if (td->parsed()) return run_tokenizer_decode(vocab_path, input_path, out_dir, force);
        if (tr->parsed())
            return run_train(preset, config_path, vocab_path, corpus_path, steps, seed, lr,
                             seq_len, out_dir, force);
        if (ge->parsed())
            return run_generate(ckpt_dir, vocab_path, prompt, max_tokens, out_dir, force);
        if (an->parsed())
            return run_analyze(ckpt_dir, vocab_path, corpus_dir, reducer, perplexity, iterations,
                               seed, mean_normalize, out_dir, force);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 2;
}
