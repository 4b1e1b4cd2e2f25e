#include "lingo/training.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "lingo/errors.hpp"
#include "lingo/metrics.hpp"

namespace lingo {

Strategy strategy_from_string(const std::string& name) {
    if (name == "ft") return Strategy::FT;
    if (name == "er") return Strategy::ER;
    if (name == "avg") return Strategy::AVG;
    if (name == "er-e") return Strategy::ERE;
    if (name == "er-e-part") return Strategy::EREPart;
    if (name == "er-e-b") return Strategy::EREB;
    throw ConfigError("unknown strategy: " + name +
                      " (expected ft|er|avg|er-e|er-e-part|er-e-b)");
}

std::string strategy_to_string(Strategy s) {
    switch (s) {
        case Strategy::FT: return "ft";
        case Strategy::ER: return "er";
        case Strategy::AVG: return "avg";
        case Strategy::ERE: return "er-e";
        case Strategy::EREPart: return "er-e-part";
        case Strategy::EREB: return "er-e-b";
    }
    throw std::logic_error("strategy_to_string: bad strategy");
}

bool strategy_uses_replay(Strategy s) {
    return s == Strategy::ER || s == Strategy::ERE || s == Strategy::EREPart ||
           s == Strategy::EREB;
}

bool strategy_spawns_table(Strategy s) { return s == Strategy::ERE || s == Strategy::EREB; }

bool ReplayBuffer::empty() const { return total() == 0; }

std::size_t ReplayBuffer::total() const {
    std::size_t n = 0;
    for (const auto& b : per_language) n += b.utterances.size();
    return n;
}

ReplayBuffer draw_replay_buffer(const std::vector<const Corpus*>& seen, double fraction,
                                double beta, std::uint64_t seed) {
    if (fraction <= 0.0 || fraction > 1.0)
        throw std::invalid_argument("draw_replay_buffer: fraction must be in (0, 1]");
    ReplayBuffer buffer;
    buffer.beta = beta;
    for (const Corpus* corpus : seen) {
        const std::vector<Utterance>& train = corpus->train;
        std::size_t take = static_cast<std::size_t>(
            std::llround(fraction * static_cast<double>(train.size())));
        take = std::max<std::size_t>(1, std::min(take, train.size()));
        std::vector<std::size_t> order(train.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng rng(derive_seed(seed, "replay/" + corpus->language));
        rng.shuffle(order);
        ReplayBuffer::LangBuf buf;
        buf.language = corpus->language;
        for (std::size_t i = 0; i < take; ++i) buf.utterances.push_back(train[order[i]]);
        buffer.per_language.push_back(std::move(buf));
    }
    return buffer;
}

double replay_objective(double new_task_loss, const std::vector<double>& replay_task_losses,
                        double beta) {
    double total = new_task_loss;
    for (double l : replay_task_losses) total += beta * l;
    return total;
}

namespace {

// Shuffled cycling order over one utterance list.
struct BatchSource {
    const std::vector<Utterance>* utts = nullptr;
    std::vector<std::size_t> order;
    std::size_t pos = 0;
    Rng rng;

    BatchSource(const std::vector<Utterance>* u, std::uint64_t seed) : utts(u), rng(seed) {
        order.resize(u->size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        rng.shuffle(order);
    }

    const Utterance& next() {
        if (pos == order.size()) {
            rng.shuffle(order);
            pos = 0;
        }
        return (*utts)[order[pos++]];
    }
};

// Encoder outputs per utterance id; valid only while the encoder is frozen.
class MemoryCache {
public:
    MemoryCache(bool enabled) : enabled_(enabled) {}

    const Matrix<float>& get(Model<float>& model, const Vocabulary& vocab, const SpecMap& specs,
                             const Utterance& u) {
        if (!enabled_) {
            scratch_ = model.encode(utterance_features(specs, u, vocab));
            return scratch_;
        }
        auto it = cache_.find(u.id);
        if (it != cache_.end()) return it->second;
        auto [pos, inserted] =
            cache_.emplace(u.id, model.encode(utterance_features(specs, u, vocab)));
        return pos->second;
    }

private:
    bool enabled_;
    std::unordered_map<std::string, Matrix<float>> cache_;
    Matrix<float> scratch_;
};

TokenSeq make_target(const Vocabulary& vocab, int lid, const std::string& text) {
    TokenSeq target{vocab.sot(), lid};
    for (int id : vocab.tokenize(text)) target.push_back(id);
    target.push_back(vocab.eot());
    return target;
}

// One optimizer batch: mean sequence loss, gradients accumulated (encoder
// included only while it is trainable).
double train_batch(Model<float>& model, const Vocabulary& vocab, const SpecMap& specs,
                   const std::vector<const Utterance*>& batch, EmbeddingView<float>& view,
                   int lid, MemoryCache& memories, bool encoder_trainable) {
    model.zero_grad();
    const float inv = 1.0f / static_cast<float>(batch.size());
    double total = 0.0;
    for (const Utterance* u : batch) {
        const Matrix<float>& memory = memories.get(model, vocab, specs, *u);
        const float loss = model.sequence_loss(memory, make_target(vocab, lid, u->text), view);
        const Matrix<float> dmem = model.backward(inv);
        if (encoder_trainable) model.encoder.backward(dmem);
        total += static_cast<double>(loss);
    }
    return total / static_cast<double>(batch.size());
}

double validation_loss(Model<float>& model, const Vocabulary& vocab, const SpecMap& specs,
                       const std::vector<const std::vector<Utterance>*>& dev_sets,
                       const std::vector<int>& lids, MemoryCache& memories) {
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t s = 0; s < dev_sets.size(); ++s) {
        for (const Utterance& u : *dev_sets[s]) {
            const Matrix<float>& memory = memories.get(model, vocab, specs, u);
            EmbeddingView<float> view = model.emb.select_view(u.language, vocab);
            total += static_cast<double>(
                model.sequence_loss(memory, make_target(vocab, lids[s], u.text), view));
            ++count;
        }
    }
    return count ? total / static_cast<double>(count) : 0.0;
}

struct ParamState {
    bool trainable;
    std::optional<Matrix<float>> mask;
};

std::vector<ParamState> save_param_state(Model<float>& model) {
    std::vector<ParamState> out;
    for (ParamTensor<float>* p : model.parameters())
        out.push_back({p->trainable, p->freeze_mask});
    return out;
}

void restore_param_state(Model<float>& model, const std::vector<ParamState>& saved) {
    auto params = model.parameters();
    for (std::size_t i = 0; i < params.size() && i < saved.size(); ++i) {
        params[i]->trainable = saved[i].trainable;
        params[i]->freeze_mask = saved[i].mask;
    }
}

}  // namespace

PhaseOutcome pretrain(Model<float>& model, Vocabulary& vocab, const SpecMap& specs,
                      const std::vector<Corpus>& old_corpora, const PretrainOptions& opts,
                      std::uint64_t seed, const TrainLogger& logger) {
    if (old_corpora.size() < 2)
        throw ConfigError("pretrain: need at least 2 pretraining languages, have " +
                          std::to_string(old_corpora.size()));
    for (const Corpus& c : old_corpora) {
        if (!vocab.has_language(c.language))
            throw ConfigError("pretrain: language " + c.language + " missing from vocabulary");
    }

    model.set_encoder_trainable(true);
    AdamW<float> opt(opts.opt);
    NewBobScheduler sched;
    sched.current_lr = opts.opt.lr;
    sched.improvement_threshold = opts.newbob_threshold;
    sched.anneal_factor = opts.newbob_factor;
    sched.patience = opts.newbob_patience;

    std::size_t total_train = 0;
    std::vector<BatchSource> sources;
    std::vector<int> lids;
    std::vector<const std::vector<Utterance>*> dev_sets;
    for (const Corpus& c : old_corpora) {
        total_train += c.train.size();
        sources.emplace_back(&c.train, derive_seed(seed, "pretrain/shuffle/" + c.language));
        lids.push_back(vocab.lid_id(c.language));
        dev_sets.push_back(&c.dev);
    }
    const long steps_per_epoch = static_cast<long>(
        (total_train + static_cast<std::size_t>(opts.batch_size) - 1) /
        static_cast<std::size_t>(opts.batch_size));
    const long total_steps = steps_per_epoch * opts.epochs;
    const long val_every =
        std::max<long>(1, std::lround(static_cast<double>(steps_per_epoch) * opts.val_interval));

    Rng lang_rng(derive_seed(seed, "pretrain/langs"));
    MemoryCache memories(/*enabled=*/false);  // encoder is training
    PhaseOutcome outcome;
    std::vector<Matrix<float>> best = snapshot_values(model);

    for (long step = 1; step <= total_steps; ++step) {
        const std::size_t li = lang_rng.below(sources.size());
        std::vector<const Utterance*> batch;
        for (int b = 0; b < opts.batch_size; ++b) batch.push_back(&sources[li].next());
        EmbeddingView<float> view =
            model.emb.select_view(old_corpora[li].language, vocab);
        const double loss =
            train_batch(model, vocab, specs, batch, view, lids[li], memories, true);
        if (!std::isfinite(loss))
            throw std::runtime_error("pretrain: non-finite loss at step " + std::to_string(step));
        opt.set_lr(sched.current_lr);
        auto params = model.parameters();
        opt.step(params);
        outcome.step_losses.push_back(loss);

        TrainLogEntry entry{step, "pretrain", old_corpora[li].language, loss, sched.current_lr};
        if (step % val_every == 0 || step == total_steps) {
            const double val = validation_loss(model, vocab, specs, dev_sets, lids, memories);
            if (opts.anneal) sched.update(val);
            outcome.validations.emplace_back(step, val);
            if (val < outcome.best_val) {
                outcome.best_val = val;
                outcome.best_step = step;
                best = snapshot_values(model);
            }
            entry.has_val = true;
            entry.val_loss = val;
        }
        if (logger) logger(entry);
    }
    restore_values(model, best);
    model.set_encoder_trainable(false);

    // learnability gate: each pretraining language must transcribe its own
    // test split well before any adaptation is meaningful
    for (const Corpus& c : old_corpora) {
        const auto records =
            decode_split(model, vocab, specs, c.test, DecodeSetting::Aware, opts.gate_decode);
        const double w = records_wer(c.test, records);
        if (w >= opts.gate_wer)
            throw InvariantError("pretrain gate: language " + c.language + " at WER " +
                                 std::to_string(w * 100.0) + "% (gate " +
                                 std::to_string(opts.gate_wer * 100.0) + "%)");
    }
    return outcome;
}

PhaseOutcome adapt_phase(Model<float>& model, Vocabulary& vocab, const SpecMap& specs,
                         const Corpus& new_corpus, const ReplayBuffer* replay, Strategy strategy,
                         const TrainHyper& hyper, std::uint64_t seed, const TrainLogger& logger) {
    const std::string& language = new_corpus.language;
    const bool uses_replay = strategy_uses_replay(strategy);
    if (uses_replay && (replay == nullptr || replay->empty()))
        throw ConfigError("adapt(" + strategy_to_string(strategy) + "): empty replay buffer");
    if (new_corpus.train.empty()) throw ConfigError("adapt: empty train split for " + language);

    // register the language: one appended language-id token plus its
    // special-token embedding row
    if (!vocab.has_language(language)) {
        const int lid = vocab.add_language(language);
        model.emb.register_language(language, lid, seed);
    }
    const int lid = vocab.lid_id(language);
    if (strategy_spawns_table(strategy) && hyper.surgery_enabled) {
        if (!model.emb.select_view(language, vocab).is_base())
            throw ConfigError("adapt: table already spawned for " + language);
        model.emb.spawn_language_table(language, new_corpus.train, vocab);
    }

    const std::vector<ParamState> saved_state = save_param_state(model);
    model.set_encoder_trainable(false);
    if (strategy_spawns_table(strategy) && hyper.surgery_enabled) {
        // the original table serves replayed languages and is never written
        model.emb.base.trainable = false;
    }
    if (strategy == Strategy::EREPart) {
        model.emb.base.freeze_mask =
            partial_freeze_mask<float>(vocab, new_corpus.train, model.config().model_dim);
    }
    model.emb.st.trainable = !hyper.freeze_st;

    AdamW<float> opt(hyper.opt);
    NewBobScheduler sched;
    sched.current_lr = hyper.opt.lr;
    sched.improvement_threshold = hyper.newbob_threshold;
    sched.anneal_factor = hyper.newbob_factor;
    sched.patience = hyper.newbob_patience;

    const double beta = uses_replay ? replay->beta : 0.0;
    const std::size_t replay_langs = uses_replay ? replay->per_language.size() : 0;
    MixScheduler mix(beta, replay_langs, derive_seed(seed, "adapt/mix"));
    BatchSource new_source(&new_corpus.train, derive_seed(seed, "adapt/shuffle"));
    Rng replay_pick(derive_seed(seed, "adapt/replay"));

    // with beta = 0 the replay term vanishes entirely, so the schedule must
    // match plain fine-tuning step for step
    const std::size_t mixture_size =
        new_corpus.train.size() + (uses_replay && beta > 0.0 ? replay->total() : 0);
    const long steps_per_epoch =
        static_cast<long>((mixture_size + static_cast<std::size_t>(hyper.batch_size) - 1) /
                          static_cast<std::size_t>(hyper.batch_size));
    const long total_steps = steps_per_epoch * hyper.epochs;
    const long val_every =
        std::max<long>(1, std::lround(static_cast<double>(steps_per_epoch) * hyper.val_interval));

    std::vector<int> val_lids{lid};
    std::vector<const std::vector<Utterance>*> dev_sets{&new_corpus.dev};
    MemoryCache memories(/*enabled=*/true);  // frozen encoder
    PhaseOutcome outcome;
    std::vector<Matrix<float>> best = snapshot_values(model);
    const std::string phase_name = "adapt/" + language;

    for (long step = 1; step <= total_steps; ++step) {
        const BatchDraw draw = mix.next();
        std::vector<const Utterance*> batch;
        std::string batch_language;
        double loss = 0.0;
        if (draw.replay) {
            const ReplayBuffer::LangBuf& buf = replay->per_language[draw.replay_language];
            batch_language = buf.language;
            for (int b = 0; b < hyper.batch_size; ++b)
                batch.push_back(&buf.utterances[replay_pick.below(buf.utterances.size())]);
            EmbeddingView<float> view = model.emb.select_view(buf.language, vocab);
            loss = train_batch(model, vocab, specs, batch, view, vocab.lid_id(buf.language),
                               memories, false);
        } else {
            batch_language = language;
            for (int b = 0; b < hyper.batch_size; ++b) batch.push_back(&new_source.next());
            EmbeddingView<float> view = model.emb.select_view(language, vocab);
            loss = train_batch(model, vocab, specs, batch, view, lid, memories, false);
        }
        if (!std::isfinite(loss))
            throw std::runtime_error("adapt(" + language + "): non-finite loss at step " +
                                     std::to_string(step));
        opt.set_lr(sched.current_lr);
        auto params = model.parameters();
        opt.step(params);
        outcome.step_losses.push_back(loss);

        TrainLogEntry entry{step, phase_name, batch_language, loss, sched.current_lr};
        if (step % val_every == 0 || step == total_steps) {
            const double val = validation_loss(model, vocab, specs, dev_sets, val_lids, memories);
            sched.update(val);
            outcome.validations.emplace_back(step, val);
            if (val < outcome.best_val) {
                outcome.best_val = val;
                outcome.best_step = step;
                best = snapshot_values(model);
            }
            entry.has_val = true;
            entry.val_loss = val;
        }
        if (logger) logger(entry);
    }
    restore_values(model, best);
    restore_param_state(model, saved_state);
    model.set_encoder_trainable(false);
    return outcome;
}

PhaseOutcome er_adapt(Model<float>& model, Vocabulary& vocab, const SpecMap& specs,
                      const Corpus& new_corpus, const ReplayBuffer& replay,
                      const TrainHyper& hyper, std::uint64_t seed, const TrainLogger& logger) {
    return adapt_phase(model, vocab, specs, new_corpus, &replay, Strategy::ER, hyper, seed, logger);
}

PhaseOutcome ft_adapt(Model<float>& model, Vocabulary& vocab, const SpecMap& specs,
                      const Corpus& new_corpus, const TrainHyper& hyper, std::uint64_t seed,
                      const TrainLogger& logger) {
    return adapt_phase(model, vocab, specs, new_corpus, nullptr, Strategy::FT, hyper, seed, logger);
}

SequentialOutcome sequential_adapt(Model<float>& model, Vocabulary& vocab, const SpecMap& specs,
                                   const std::vector<Corpus>& old_corpora,
                                   const std::vector<Corpus>& new_corpora,
                                   const SequentialOptions& opts, const TrainLogger& logger) {
    SequentialOutcome out;
    std::vector<const Corpus*> seen;
    for (const Corpus& c : old_corpora) seen.push_back(&c);

    for (std::size_t k = 0; k < new_corpora.size(); ++k) {
        const Corpus& corpus = new_corpora[k];
        const std::uint64_t phase_seed = derive_seed(opts.seed, "phase/" + std::to_string(k));
        ReplayBuffer buffer;
        const ReplayBuffer* buffer_ptr = nullptr;
        std::string trace;
        if (strategy_uses_replay(opts.strategy)) {
            buffer = draw_replay_buffer(seen, opts.replay_fraction, opts.beta, phase_seed);
            buffer_ptr = &buffer;
            for (const auto& b : buffer.per_language) {
                if (!trace.empty()) trace += ',';
                trace += b.language;
            }
        }
        out.replay_trace.push_back(trace);

        if (opts.strategy == Strategy::AVG) {
            Checkpoint before = checkpoint_from_model(model, vocab);
            adapt_phase(model, vocab, specs, corpus, nullptr, Strategy::FT, opts.hyper, phase_seed,
                        logger);
            Checkpoint after = checkpoint_from_model(model, vocab);
            // `before` lacks the language registered inside the phase; merge on
            // the post-registration shapes
            restore_parameters(model, avg_merge(before, after));
        } else {
            adapt_phase(model, vocab, specs, corpus, buffer_ptr, opts.strategy, opts.hyper,
                        phase_seed, logger);
        }
        out.checkpoints.push_back(checkpoint_from_model(model, vocab));
        seen.push_back(&corpus);

        const bool eval_this =
            opts.eval_phases == PhaseEvalMode::All ||
            (opts.eval_phases == PhaseEvalMode::Intermediate && k + 1 < new_corpora.size());
        if (eval_this) {
            PhaseEval pe;
            pe.phase = static_cast<int>(k + 1);
            pe.language = corpus.language;
            for (const Corpus* c : seen) {
                const auto records = decode_split(model, vocab, specs, c->test,
                                                  DecodeSetting::Agnostic, opts.decode);
                pe.rows.push_back(EvalReport::Entry{strategy_to_string(opts.strategy), c->language,
                                                    "agnostic", records_wer(c->test, records)});
            }
            out.phase_evals.push_back(std::move(pe));
        }
    }
    return out;
}

}  // namespace lingo
