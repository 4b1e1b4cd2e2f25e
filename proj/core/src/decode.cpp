#include "lingo/decode.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "lingo/ops.hpp"

namespace lingo {

namespace {

// Tokens a transcription rollout may emit: vocabulary tokens and
// end-of-transcript. Control and language-id tokens are suppressed.
std::vector<int> allowed_locals(const EmbeddingView<float>& view) {
    std::vector<int> out;
    const Vocabulary& vocab = *view.vocab;
    out.push_back(view.to_local(vocab.eot()));
    for (int l = view.num_specials(); l < view.size(); ++l) out.push_back(l);
    return out;
}

struct Hypothesis {
    TokenSeq tokens;  // full sequence incl. [sot, lid]
    std::vector<double> logprobs;
    double score = 0.0;
    bool finished = false;
};

bool tokens_less(const TokenSeq& a, const TokenSeq& b) {
    return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

// higher score first; ties prefer the lexicographically smaller sequence
bool hyp_better(const Hypothesis& a, const Hypothesis& b) {
    if (a.score != b.score) return a.score > b.score;
    return tokens_less(a.tokens, b.tokens);
}

// Greedy/beam rollout after the forced [sot, lid] prefix. The cumulative
// score is the sum of transcription-token log-probabilities; hitting the
// length cap forces end-of-transcript with its own log-probability.
Hypothesis rollout(Model<float>& model, const Matrix<float>& memory,
                   const EmbeddingView<float>& view, int lid_global, const DecodeConfig& cfg) {
    const Vocabulary& vocab = *view.vocab;
    const std::size_t cap = model.config().max_decode_len;
    const std::vector<int> allowed = allowed_locals(view);
    const int eot_local = view.to_local(vocab.eot());

    std::vector<Hypothesis> beam(1);
    beam[0].tokens = {vocab.sot(), lid_global};

    while (true) {
        bool any_alive = false;
        for (const Hypothesis& h : beam) any_alive |= !h.finished;
        if (!any_alive) break;

        std::vector<Hypothesis> next;
        for (Hypothesis& h : beam) {
            if (h.finished) {
                next.push_back(std::move(h));
                continue;
            }
            const std::vector<float> logits = model.decode_step(memory, h.tokens, view);
            std::vector<float> lp = log_softmax_row(logits.data(), logits.size());
            const std::size_t emitted = h.tokens.size() - 2;
            if (emitted + 1 >= cap) {
                // force end-of-transcript at the cap
                Hypothesis done = h;
                done.tokens.push_back(vocab.eot());
                done.logprobs.push_back(lp[static_cast<std::size_t>(eot_local)]);
                done.score += lp[static_cast<std::size_t>(eot_local)];
                done.finished = true;
                next.push_back(std::move(done));
                continue;
            }
            if (cfg.beam_width == 1) {
                int best = allowed[0];
                for (int l : allowed) {
                    if (lp[static_cast<std::size_t>(l)] > lp[static_cast<std::size_t>(best)]) best = l;
                }
                h.tokens.push_back(view.to_global(best));
                h.logprobs.push_back(lp[static_cast<std::size_t>(best)]);
                h.score += lp[static_cast<std::size_t>(best)];
                h.finished = best == eot_local;
                next.push_back(std::move(h));
            } else {
                for (int l : allowed) {
                    Hypothesis ext = h;
                    ext.tokens.push_back(view.to_global(l));
                    ext.logprobs.push_back(lp[static_cast<std::size_t>(l)]);
                    ext.score += lp[static_cast<std::size_t>(l)];
                    ext.finished = l == eot_local;
                    next.push_back(std::move(ext));
                }
            }
        }
        std::stable_sort(next.begin(), next.end(), hyp_better);
        if (next.size() > static_cast<std::size_t>(cfg.beam_width))
            next.resize(static_cast<std::size_t>(cfg.beam_width));
        beam = std::move(next);
    }
    std::stable_sort(beam.begin(), beam.end(), hyp_better);
    return beam.front();
}

std::vector<int> registry_ranks(const Model<float>& model,
                                const std::vector<DecodingPath>& paths) {
    std::vector<int> ranks;
    for (const DecodingPath& p : paths) {
        int rank = -1;
        for (std::size_t i = 0; i < model.emb.registry.size(); ++i) {
            if (model.emb.registry[i].language == p.language) rank = static_cast<int>(i);
        }
        ranks.push_back(rank);
    }
    return ranks;
}

}  // namespace

std::vector<LidScore> lid_scores(Model<float>& model, const Vocabulary& vocab,
                                 const Matrix<float>& memory, const DecodeConfig& cfg) {
    EmbeddingView<float> view = model.emb.base_view(vocab);
    const TokenSeq prefix{vocab.sot()};
    const std::vector<float> logits = model.decode_step(memory, prefix, view);
    std::vector<LidScore> out;
    if (cfg.lid_renormalize) {
        std::vector<float> lid_logits;
        for (const auto& e : model.emb.registry)
            lid_logits.push_back(logits[static_cast<std::size_t>(view.to_local(e.lid_global))]);
        const std::vector<float> lp = log_softmax_row(lid_logits.data(), lid_logits.size());
        for (std::size_t i = 0; i < model.emb.registry.size(); ++i)
            out.push_back({model.emb.registry[i].language, std::exp(static_cast<double>(lp[i]))});
    } else {
        const std::vector<float> lp = log_softmax_row(logits.data(), logits.size());
        for (const auto& e : model.emb.registry)
            out.push_back({e.language,
                           std::exp(static_cast<double>(
                               lp[static_cast<std::size_t>(view.to_local(e.lid_global))]))});
    }
    return out;
}

DecodingPath decode_language_aware(Model<float>& model, const Vocabulary& vocab,
                                   const Matrix<float>& memory, const std::string& language,
                                   const DecodeConfig& cfg) {
    cfg.validate();
    if (!model.emb.find(language))
        throw std::out_of_range("decode_language_aware: unknown language " + language);
    EmbeddingView<float> view = model.emb.select_view(language, vocab);
    const int lid = vocab.lid_id(language);

    DecodingPath path;
    path.language = language;
    path.lid_token = lid;
    for (const LidScore& s : lid_scores(model, vocab, memory, cfg)) {
        if (s.language == language) path.lid_score = s.score;
    }
    Hypothesis hyp = rollout(model, memory, view, lid, cfg);
    path.tokens = std::move(hyp.tokens);
    path.token_logprobs = std::move(hyp.logprobs);
    path.asr_score = hyp.score;
    if (cfg.asr_score_include_lid) {
        const TokenSeq sot_prefix{vocab.sot()};
        const std::vector<float> logits = model.decode_step(memory, sot_prefix, view);
        const std::vector<float> lp = log_softmax_row(logits.data(), logits.size());
        path.asr_score += static_cast<double>(lp[static_cast<std::size_t>(view.to_local(lid))]);
    }
    path.text = vocab.detokenize(path.tokens);
    return path;
}

DecodeResult decode_language_agnostic(Model<float>& model, const Vocabulary& vocab,
                                      const Matrix<float>& memory, const DecodeConfig& cfg) {
    cfg.validate();
    if (model.emb.registry.empty())
        throw std::logic_error("decode_language_agnostic: no registered languages");
    const std::vector<LidScore> scores = lid_scores(model, vocab, memory, cfg);
    std::size_t best = 0;
    for (std::size_t i = 1; i < scores.size(); ++i) {
        if (scores[i].score > scores[best].score) best = i;  // ties: registry order
    }
    DecodeResult result;
    result.candidates.push_back(
        decode_language_aware(model, vocab, memory, scores[best].language, cfg));
    result.chosen = result.candidates.front();
    return result;
}

int count_words(const std::string& text) {
    std::istringstream ss(text);
    std::string w;
    int n = 0;
    while (ss >> w) ++n;
    return n;
}

int overlap_words(const std::string& a, const std::string& b) {
    std::istringstream sa(a), sb(b);
    std::string w;
    std::map<std::string, int> counts;
    while (sa >> w) ++counts[w];
    int overlap = 0;
    while (sb >> w) {
        auto it = counts.find(w);
        if (it != counts.end() && it->second > 0) {
            --it->second;
            ++overlap;
        }
    }
    return overlap;
}

PathSelection select_path(const std::vector<DecodingPath>& paths, std::size_t top_lid_index,
                          const std::vector<int>& registry_rank, const DecodeConfig& cfg) {
    if (paths.empty()) throw std::invalid_argument("select_path: no candidate paths");
    if (registry_rank.size() != paths.size())
        throw std::invalid_argument("select_path: rank/path count mismatch");
    PathSelection sel;
    bool guard = false;
    for (const DecodingPath& p : paths) {
        if (count_words(p.text) < cfg.min_words) guard = true;
    }
    for (std::size_t i = 0; i < paths.size() && !guard; ++i) {
        for (std::size_t j = i + 1; j < paths.size(); ++j) {
            if (overlap_words(paths[i].text, paths[j].text) > cfg.max_overlap) {
                guard = true;
                break;
            }
        }
    }
    if (guard) {
        sel.chosen_index = top_lid_index;
        sel.guard_triggered = true;
        return sel;
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < paths.size(); ++i) {
        const bool better =
            paths[i].asr_score > paths[best].asr_score ||
            (paths[i].asr_score == paths[best].asr_score &&
             (registry_rank[i] < registry_rank[best] ||
              (registry_rank[i] == registry_rank[best] && tokens_less(paths[i].tokens, paths[best].tokens))));
        if (better) best = i;
    }
    sel.chosen_index = best;
    return sel;
}

DecodeResult task_wise_beam_search(Model<float>& model, const Vocabulary& vocab,
                                   const Matrix<float>& memory, const DecodeConfig& cfg) {
    cfg.validate();
    if (model.emb.registry.empty())
        throw std::logic_error("task_wise_beam_search: no registered languages");
    const std::vector<LidScore> scores = lid_scores(model, vocab, memory, cfg);
    // top-N languages, ties broken by registry order
    std::vector<std::size_t> order(scores.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return scores[a].score > scores[b].score;
    });
    const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(cfg.top_n), order.size());

    DecodeResult result;
    for (std::size_t i = 0; i < n; ++i)
        result.candidates.push_back(
            decode_language_aware(model, vocab, memory, scores[order[i]].language, cfg));
    const PathSelection sel =
        select_path(result.candidates, /*top_lid_index=*/0, registry_ranks(model, result.candidates), cfg);
    result.guard_triggered = sel.guard_triggered;
    std::size_t score_best = 0;
    for (std::size_t i = 1; i < result.candidates.size(); ++i) {
        if (result.candidates[i].asr_score > result.candidates[score_best].asr_score) score_best = i;
    }
    result.fallback_used = sel.guard_triggered && sel.chosen_index != score_best;
    result.chosen = result.candidates[sel.chosen_index];
    return result;
}

}  // namespace lingo
