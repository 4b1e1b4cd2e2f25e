#pragma once

#include <string>

#include "lingo/config.hpp"
#include "lingo/report.hpp"
#include "lingo/training.hpp"

namespace lingo {

// File layout of one experiment directory.
struct RunPaths {
    std::string root;

    std::string data_dir() const { return root + "/data"; }
    std::string vocab_path() const { return root + "/vocab.txt"; }
    std::string config_echo() const { return root + "/config.resolved"; }
    std::string unadapted_ckpt() const { return root + "/ckpt/unadapted.bin"; }
    std::string pretrain_log() const { return root + "/logs/pretrain.jsonl"; }
    std::string method_dir(const std::string& method) const { return root + "/" + method; }
    std::string phase_ckpt(const std::string& method, int phase) const {
        return method_dir(method) + "/ckpt/phase" + std::to_string(phase) + ".bin";
    }
    std::string train_log(const std::string& method) const {
        return method_dir(method) + "/logs/train.jsonl";
    }
    std::string phase_eval_file(const std::string& method) const {
        return method_dir(method) + "/phase_evals.jsonl";
    }
    std::string decode_file(const std::string& method, const std::string& setting) const {
        return method_dir(method) + "/decode_" + setting + ".jsonl";
    }
};

void run_gen_data(const ExperimentConfig& cfg);
void run_pretrain(const ExperimentConfig& cfg);
void run_adapt(const ExperimentConfig& cfg, Strategy strategy);
// method: "unadapted" or a strategy name; decodes the method's final model
// over every language it can transcribe, in each applicable setting
void run_decode(const ExperimentConfig& cfg, const std::string& method);
// builds report.json / report.csv / confusion csvs from decode outputs found
// in the run directory
EvalReport run_eval(const ExperimentConfig& cfg);

struct ReproduceResult {
    EvalReport report;
};

// Full pipeline: data, pretraining, every adaptation strategy, both decoding
// settings, metrics and a stdout summary table.
ReproduceResult run_reproduce(const ExperimentConfig& cfg);

}  // namespace lingo
