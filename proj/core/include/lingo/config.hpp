#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lingo/decode.hpp"
#include "lingo/langgen.hpp"
#include "lingo/model.hpp"
#include "lingo/training.hpp"
#include "lingo/vocab.hpp"

namespace lingo {

// Flat key-value text configuration: one `key = value` per line, `#` starts a
// comment, dotted keys for sections. Keys are stored sorted so dumps are
// deterministic.
class KvConfig {
public:
    static KvConfig parse_file(const std::string& path);
    static KvConfig parse_string(const std::string& text);

    bool has(const std::string& key) const { return kv_.count(key) > 0; }
    void set(const std::string& key, const std::string& value) { kv_[key] = value; }

    std::string get_str(const std::string& key, const std::string& fallback) const;
    long long get_int(const std::string& key, long long fallback) const;
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
    double get_double(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<std::string> get_list(const std::string& key,
                                      const std::vector<std::string>& fallback) const;

    std::string dump() const;
    const std::map<std::string, std::string>& values() const { return kv_; }

private:
    std::map<std::string, std::string> kv_;
};

// Fully resolved experiment settings. Every random draw anywhere in a run is
// derived from the single seed.
struct ExperimentConfig {
    std::uint64_t seed = 42;

    std::vector<std::string> old_languages{"alba", "brin"};
    std::vector<std::string> new_languages{"cela", "dora"};

    // synthetic data
    int vocab_tokens = 72;  // syllables; the space token is added on top
    int tokens_per_language = 26;
    double overlap = 0.75;  // fraction of a new language's tokens shared with its paired old one
    int mean_words = 6;
    int word_len_min = 2;
    int word_len_max = 3;
    double feature_noise = 0.35;
    double bias_scale = 0.3;
    int frames_per_token = 4;
    SplitSizes sizes{2000, 200, 200};

    ModelConfig model;

    PretrainOptions pretrain;
    TrainHyper adapt;
    double beta = 0.1;
    double replay_fraction = 0.1;

    DecodeConfig decode;

    std::string out_dir = "out";

    static ExperimentConfig from_kv(const KvConfig& kv);
    KvConfig to_kv() const;  // resolved echo

    // reduced sizes for the quick desk-scale run
    void apply_quick();
    void validate() const;
};

// Deterministic shared syllable inventory (plus the space token).
std::vector<std::string> make_vocab_tokens(const ExperimentConfig& cfg);

// Per-language grammar and rendering parameters. Each new language draws
// `overlap` of its tokens from its paired old language's subset, the rest
// from tokens no old language uses.
SpecMap build_language_specs(const ExperimentConfig& cfg, const Vocabulary& vocab);

}  // namespace lingo
