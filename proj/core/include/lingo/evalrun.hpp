#pragma once

#include <map>
#include <string>
#include <vector>

#include "lingo/decode.hpp"
#include "lingo/langgen.hpp"
#include "lingo/model.hpp"
#include "lingo/vocab.hpp"

namespace lingo {

using SpecMap = std::map<std::string, LanguageSpec>;

enum class DecodeSetting { Aware, Agnostic, TaskWise };
std::string setting_to_string(DecodeSetting s);

struct UttDecodeRecord {
    std::string id;
    std::string true_language;
    std::string predicted_language;
    std::string text;
    double asr_score = 0.0;
    std::vector<LidScore> lid;
    bool guard_triggered = false;
};

// Decodes one utterance list with the chosen pipeline. Features are
// synthesized from the utterance's true language spec.
std::vector<UttDecodeRecord> decode_split(Model<float>& model, const Vocabulary& vocab,
                                          const SpecMap& specs,
                                          const std::vector<Utterance>& utts,
                                          DecodeSetting setting, const DecodeConfig& cfg);

// Test-set WER of decode records against the reference texts (matched by id).
double records_wer(const std::vector<Utterance>& refs,
                   const std::vector<UttDecodeRecord>& records);

struct RecordsWer {
    double value = 0.0;
    bool empty_reference = false;
};
RecordsWer records_wer_detail(const std::vector<Utterance>& refs,
                              const std::vector<UttDecodeRecord>& records);

Matrix<float> utterance_features(const SpecMap& specs, const Utterance& utt,
                                 const Vocabulary& vocab);

}  // namespace lingo
