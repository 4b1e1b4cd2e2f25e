#pragma once

#include <string>
#include <vector>

#include "lingo/model.hpp"
#include "lingo/vocab.hpp"

namespace lingo {

struct DecodeConfig {
    int beam_width = 1;       // 1 = greedy inner decode
    int top_n = 2;            // languages kept after language identification
    int min_words = 5;        // guard: minimum words per decoding path
    int max_overlap = 3;      // guard: maximum words shared between two paths
    bool lid_renormalize = true;
    bool asr_score_include_lid = false;

    void validate() const {
        if (beam_width < 1 || top_n < 1 || min_words < 0 || max_overlap < 0)
            throw std::invalid_argument("DecodeConfig: invalid values");
    }
};

// One language-conditioned hypothesis. asr_score sums the log-probabilities
// of the transcription tokens (end-of-transcript included, language-id token
// excluded unless configured otherwise).
struct DecodingPath {
    std::string language;
    int lid_token = -1;
    double lid_score = 0.0;
    TokenSeq tokens;  // [sot, lid, ..., eot]
    std::vector<double> token_logprobs;
    double asr_score = 0.0;
    std::string text;
};

struct DecodeResult {
    DecodingPath chosen;
    std::vector<DecodingPath> candidates;  // language-id rank order
    bool guard_triggered = false;
    bool fallback_used = false;  // guard overrode the score-based choice
};

struct LidScore {
    std::string language;
    double score = 0.0;
};

// Language probabilities from the first decoder step after start-of-transcript.
// The language-id logits live in the shared special-token table, so they do
// not depend on which vocabulary table is selected; scores are either a
// softmax restricted to the language-id logits (default) or full-softmax
// probabilities over the base view. Returned in registry order.
std::vector<LidScore> lid_scores(Model<float>& model, const Vocabulary& vocab,
                                 const Matrix<float>& memory, const DecodeConfig& cfg);

// Decodes with the language forced: prefix [sot, lid(language)], inner
// greedy/beam rollout over that language's embedding view.
DecodingPath decode_language_aware(Model<float>& model, const Vocabulary& vocab,
                                   const Matrix<float>& memory, const std::string& language,
                                   const DecodeConfig& cfg);

// Standard language-agnostic decoding: best language-id score, then
// language-aware decoding in that language.
DecodeResult decode_language_agnostic(Model<float>& model, const Vocabulary& vocab,
                                      const Matrix<float>& memory, const DecodeConfig& cfg);

// Decodes in the top-N identified languages and keeps the hypothesis with the
// highest asr_score; stability guards fall back to the top-1 language path.
DecodeResult task_wise_beam_search(Model<float>& model, const Vocabulary& vocab,
                                   const Matrix<float>& memory, const DecodeConfig& cfg);

int count_words(const std::string& text);
// multiset intersection size of whitespace-split words
int overlap_words(const std::string& a, const std::string& b);

// Pure selection rule behind task_wise_beam_search, exposed for direct
// checking: applies the min-words / overlap guards, otherwise picks the
// highest asr_score (ties to the earlier registry rank, then lexicographically
// smaller token sequence).
struct PathSelection {
    std::size_t chosen_index = 0;
    bool guard_triggered = false;
};
PathSelection select_path(const std::vector<DecodingPath>& paths, std::size_t top_lid_index,
                          const std::vector<int>& registry_rank, const DecodeConfig& cfg);

}  // namespace lingo
