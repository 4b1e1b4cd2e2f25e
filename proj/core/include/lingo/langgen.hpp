#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lingo/matrix.hpp"
#include "lingo/vocab.hpp"

namespace lingo {

// Synthetic language: a bigram grammar over a subset of the shared vocabulary
// tokens, plus the parameters of its "acoustic" rendering. Everything a
// language produces is a pure function of the seeds stored here.
struct LanguageSpec {
    std::string name;
    std::uint64_t seed = 0;
    std::vector<int> token_subset;      // global vocab-token ids, no space token
    Matrix<double> bigram_weights;      // subset x subset, rows normalized
    std::vector<double> start_weights;  // normalized
    int mean_len = 8;                   // words per utterance; sampled in [mean-1, mean+1]
    int word_len_min = 1;               // tokens per word
    int word_len_max = 1;
    double feature_noise = 0.3;
    double bias_scale = 0.25;           // strength of the language cue in features
    int frames_per_token = 4;
    int feature_dim = 24;

    // Hard error on an unusable grammar: empty subset, negative weights, or a
    // transition row with no outgoing mass (an absorbing dead end).
    void validate() const;
};

struct Utterance {
    std::string id;
    std::string language;
    std::string text;
    std::uint64_t feature_seed = 0;
};

struct Corpus {
    std::string language;
    std::vector<Utterance> train, dev, test;

    const std::vector<Utterance>& split(const std::string& name) const;
};

struct SplitSizes {
    int train = 2000;
    int dev = 200;
    int test = 200;
};

// Samples utterances from the bigram grammar; deterministic under the
// language seed. Splits are disjoint by utterance id.
Corpus generate_language(const LanguageSpec& spec, const Vocabulary& vocab,
                         const SplitSizes& sizes);

// Feature frames for one utterance: per token, frames_per_token rows of the
// token's fixed acoustic embedding plus a language bias plus seeded noise.
// T = frames_per_token * token count, F = feature_dim.
Matrix<double> synthesize_features(const std::string& text, const LanguageSpec& spec,
                                   const Vocabulary& vocab, std::uint64_t utt_seed);

// JSON-lines persistence; features are regenerated from the seeds on load.
void save_corpus_split(const std::vector<Utterance>& utts, const std::string& path);
std::vector<Utterance> load_corpus_split(const std::string& path);
void save_corpus(const Corpus& corpus, const std::string& dir);
Corpus load_corpus(const std::string& language, const std::string& dir);

}  // namespace lingo
