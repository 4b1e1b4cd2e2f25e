#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "lingo/checkpoint.hpp"
#include "lingo/config.hpp"
#include "lingo/langgen.hpp"
#include "lingo/model.hpp"
#include "lingo/training.hpp"
#include "lingo/vocab.hpp"

namespace testutil {

// Small shared config used by every training-dependent test; sized so the
// whole fixture pretrains in well under a minute.
inline lingo::ExperimentConfig small_config() {
    lingo::KvConfig kv;
    kv.set("quick", "true");
    lingo::ExperimentConfig cfg = lingo::ExperimentConfig::from_kv(kv);
    cfg.sizes = lingo::SplitSizes{120, 24, 32};
    cfg.pretrain.epochs = 25;
    return cfg;
}

struct PretrainedFixture {
    lingo::ExperimentConfig cfg;
    lingo::Vocabulary vocab;
    lingo::SpecMap specs;
    std::vector<lingo::Corpus> old_corpora;
    std::vector<lingo::Corpus> new_corpora;
    lingo::Model<float> model;
    lingo::Checkpoint unadapted;
};

// Built once per test binary run: data plus a pretrained 2-language model.
inline PretrainedFixture& pretrained_fixture() {
    static PretrainedFixture* fixture = [] {
        auto* f = new PretrainedFixture();
        f->cfg = small_config();
        f->vocab = lingo::Vocabulary(lingo::make_vocab_tokens(f->cfg), f->cfg.old_languages);
        f->specs = lingo::build_language_specs(f->cfg, f->vocab);
        for (const auto& lang : f->cfg.old_languages)
            f->old_corpora.push_back(lingo::generate_language(f->specs.at(lang), f->vocab, f->cfg.sizes));
        for (const auto& lang : f->cfg.new_languages)
            f->new_corpora.push_back(lingo::generate_language(f->specs.at(lang), f->vocab, f->cfg.sizes));
        f->model = lingo::Model<float>(f->cfg.model, f->vocab,
                                       lingo::derive_seed(f->cfg.seed, "init"));
        lingo::pretrain(f->model, f->vocab, f->specs, f->old_corpora, f->cfg.pretrain,
                        lingo::derive_seed(f->cfg.seed, "pretrain"));
        f->unadapted = lingo::checkpoint_from_model(f->model, f->vocab);
        return f;
    }();
    return *fixture;
}

// Fresh copy of the pretrained state (fixture itself stays untouched).
inline lingo::Model<float> fresh_pretrained(PretrainedFixture& f, lingo::Vocabulary& vocab_out) {
    vocab_out = lingo::Vocabulary(lingo::make_vocab_tokens(f.cfg), f.cfg.old_languages);
    return lingo::model_from_checkpoint(f.unadapted, vocab_out);
}

class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        path_ = (std::filesystem::temp_directory_path() / ("lingo_test_" + tag)).string();
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() { std::filesystem::remove_all(path_); }
    const std::string& path() const { return path_; }

private:
    std::string path_;
};

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::string s((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return s;
}

}  // namespace testutil
