#include "lingo/evalrun.hpp"

#include <stdexcept>
#include <unordered_map>

#include "lingo/metrics.hpp"

namespace lingo {

std::string setting_to_string(DecodeSetting s) {
    switch (s) {
        case DecodeSetting::Aware: return "aware";
        case DecodeSetting::Agnostic: return "agnostic";
        case DecodeSetting::TaskWise: return "taskwise";
    }
    throw std::logic_error("setting_to_string: bad setting");
}

Matrix<float> utterance_features(const SpecMap& specs, const Utterance& utt,
                                 const Vocabulary& vocab) {
    auto it = specs.find(utt.language);
    if (it == specs.end())
        throw std::out_of_range("utterance_features: no spec for language " + utt.language);
    return cast_matrix<float>(synthesize_features(utt.text, it->second, vocab, utt.feature_seed));
}

std::vector<UttDecodeRecord> decode_split(Model<float>& model, const Vocabulary& vocab,
                                          const SpecMap& specs,
                                          const std::vector<Utterance>& utts,
                                          DecodeSetting setting, const DecodeConfig& cfg) {
    std::vector<UttDecodeRecord> out;
    out.reserve(utts.size());
    for (const Utterance& u : utts) {
        const Matrix<float> features = utterance_features(specs, u, vocab);
        const Matrix<float> memory = model.encode(features);
        UttDecodeRecord rec;
        rec.id = u.id;
        rec.true_language = u.language;
        rec.lid = lid_scores(model, vocab, memory, cfg);
        switch (setting) {
            case DecodeSetting::Aware: {
                const DecodingPath p = decode_language_aware(model, vocab, memory, u.language, cfg);
                rec.predicted_language = p.language;
                rec.text = p.text;
                rec.asr_score = p.asr_score;
                break;
            }
            case DecodeSetting::Agnostic: {
                const DecodeResult r = decode_language_agnostic(model, vocab, memory, cfg);
                rec.predicted_language = r.chosen.language;
                rec.text = r.chosen.text;
                rec.asr_score = r.chosen.asr_score;
                rec.guard_triggered = r.guard_triggered;
                break;
            }
            case DecodeSetting::TaskWise: {
                const DecodeResult r = task_wise_beam_search(model, vocab, memory, cfg);
                rec.predicted_language = r.chosen.language;
                rec.text = r.chosen.text;
                rec.asr_score = r.chosen.asr_score;
                rec.guard_triggered = r.guard_triggered;
                break;
            }
        }
        out.push_back(std::move(rec));
    }
    return out;
}

RecordsWer records_wer_detail(const std::vector<Utterance>& refs,
                              const std::vector<UttDecodeRecord>& records) {
    std::unordered_map<std::string, const Utterance*> by_id;
    for (const Utterance& u : refs) by_id[u.id] = &u;
    CorpusWerAccumulator acc;
    for (const UttDecodeRecord& r : records) {
        auto it = by_id.find(r.id);
        if (it == by_id.end()) throw std::out_of_range("records_wer: no reference for " + r.id);
        acc.add(it->second->text, r.text);
    }
    return {acc.value(), acc.empty_reference};
}

double records_wer(const std::vector<Utterance>& refs,
                   const std::vector<UttDecodeRecord>& records) {
    return records_wer_detail(refs, records).value;
}

}  // namespace lingo
