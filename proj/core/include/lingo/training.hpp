#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "lingo/checkpoint.hpp"
#include "lingo/decode.hpp"
#include "lingo/evalrun.hpp"
#include "lingo/langgen.hpp"
#include "lingo/model.hpp"
#include "lingo/optim.hpp"
#include "lingo/report.hpp"
#include "lingo/rng.hpp"

namespace lingo {

// Adaptation strategies: plain fine-tuning; replay; weight averaging against
// the pre-phase model; replay with per-language embedding tables; replay with
// a partial freeze of the shared table; and the table variant paired with
// task-wise decoding (training-identical to the table variant).
enum class Strategy { FT, ER, AVG, ERE, EREPart, EREB };

Strategy strategy_from_string(const std::string& name);
std::string strategy_to_string(Strategy s);
bool strategy_uses_replay(Strategy s);
bool strategy_spawns_table(Strategy s);

struct ReplayBuffer {
    struct LangBuf {
        std::string language;
        std::vector<Utterance> utterances;
    };
    std::vector<LangBuf> per_language;
    double beta = 0.1;  // replay weight: replayed batches per new batch

    bool empty() const;
    std::size_t total() const;
};

// Fixed, seeded subset of each seen language's train split.
ReplayBuffer draw_replay_buffer(const std::vector<const Corpus*>& seen, double fraction,
                                double beta, std::uint64_t seed);

// Replay objective value: new-task loss plus beta times each replayed task's
// loss term.
double replay_objective(double new_task_loss, const std::vector<double>& replay_task_losses,
                        double beta);

// Per-step batch origin: replay with probability beta/(1+beta), so replayed
// and new batches realize the beta weighting through sampling frequency.
struct BatchDraw {
    bool replay = false;
    std::size_t replay_language = 0;
};

class MixScheduler {
public:
    MixScheduler(double beta, std::size_t replay_languages, std::uint64_t seed)
        : p_replay_(beta > 0.0 ? beta / (1.0 + beta) : 0.0),
          languages_(replay_languages),
          rng_(seed) {}

    BatchDraw next() {
        BatchDraw d;
        d.replay = rng_.uniform() < p_replay_;
        if (d.replay && languages_ > 0) d.replay_language = rng_.below(languages_);
        return d;
    }

private:
    double p_replay_;
    std::size_t languages_;
    Rng rng_;
};

struct TrainHyper {
    int epochs = 2;
    int batch_size = 4;
    double val_interval = 1.0 / 32.0;  // fraction of an epoch between validations
    AdamWConfig opt;
    double newbob_threshold = 0.0025;
    double newbob_factor = 0.5;
    int newbob_patience = 0;
    bool surgery_enabled = true;  // table strategies fall back to plain replay when off
    bool freeze_st = false;
};

struct TrainLogEntry {
    long step = 0;
    std::string phase;
    std::string language;
    double loss = 0.0;
    double lr = 0.0;
    bool has_val = false;
    double val_loss = 0.0;
};
using TrainLogger = std::function<void(const TrainLogEntry&)>;

struct PhaseOutcome {
    std::vector<double> step_losses;
    std::vector<std::pair<long, double>> validations;
    long best_step = -1;
    double best_val = std::numeric_limits<double>::infinity();
};

struct PretrainOptions {
    int epochs = 6;
    int batch_size = 4;
    double val_interval = 1.0 / 2.0;
    AdamWConfig opt{.lr = 2e-3};
    // From-scratch training sits on an early plateau that plateau-annealing
    // would turn into a frozen learning rate, so it is off by default here;
    // adaptation phases (warm starts) keep the annealing scheduler.
    bool anneal = false;
    double newbob_threshold = 0.0025;
    double newbob_factor = 0.5;
    int newbob_patience = 0;
    double gate_wer = 0.15;  // learnability gate on every pretraining language
    DecodeConfig gate_decode;
};

// Joint training from scratch over the pretraining languages; leaves the
// encoder frozen and verifies the learnability gate on every language.
PhaseOutcome pretrain(Model<float>& model, Vocabulary& vocab, const SpecMap& specs,
                      const std::vector<Corpus>& old_corpora, const PretrainOptions& opts,
                      std::uint64_t seed, const TrainLogger& logger = nullptr);

// One adaptation phase on a new language. Registers the language, spawns its
// embedding table when the strategy calls for one, mixes replay batches per
// the scheduler, anneals on validation loss and returns with the
// best-validation parameters restored. The encoder stays frozen.
PhaseOutcome adapt_phase(Model<float>& model, Vocabulary& vocab, const SpecMap& specs,
                         const Corpus& new_corpus, const ReplayBuffer* replay, Strategy strategy,
                         const TrainHyper& hyper, std::uint64_t seed,
                         const TrainLogger& logger = nullptr);

// Replay adaptation; the buffer must be non-empty.
PhaseOutcome er_adapt(Model<float>& model, Vocabulary& vocab, const SpecMap& specs,
                      const Corpus& new_corpus, const ReplayBuffer& replay,
                      const TrainHyper& hyper, std::uint64_t seed,
                      const TrainLogger& logger = nullptr);

// Decoder-only fine-tuning on the new corpus.
PhaseOutcome ft_adapt(Model<float>& model, Vocabulary& vocab, const SpecMap& specs,
                      const Corpus& new_corpus, const TrainHyper& hyper, std::uint64_t seed,
                      const TrainLogger& logger = nullptr);

enum class PhaseEvalMode { None, Intermediate, All };

struct SequentialOptions {
    Strategy strategy = Strategy::ER;
    TrainHyper hyper;
    double beta = 0.1;
    double replay_fraction = 0.1;
    DecodeConfig decode;
    PhaseEvalMode eval_phases = PhaseEvalMode::Intermediate;
    std::uint64_t seed = 0;
};

struct PhaseEval {
    int phase = 0;
    std::string language;                   // adapted in this phase
    std::vector<EvalReport::Entry> rows;    // language-agnostic WER over seen languages
};

struct SequentialOutcome {
    std::vector<Checkpoint> checkpoints;  // one per phase
    std::vector<PhaseEval> phase_evals;
    std::vector<std::string> replay_trace;  // per phase: comma-joined replayed languages
};

// Adapts to the new languages in order. Each phase replays every pretrained
// language plus the previously adapted ones (fixed per-language size). The
// averaging strategy fine-tunes and then merges with the pre-phase weights.
SequentialOutcome sequential_adapt(Model<float>& model, Vocabulary& vocab, const SpecMap& specs,
                                   const std::vector<Corpus>& old_corpora,
                                   const std::vector<Corpus>& new_corpora,
                                   const SequentialOptions& opts,
                                   const TrainLogger& logger = nullptr);

}  // namespace lingo
