#include "lingo/experiment.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "lingo/errors.hpp"
#include "lingo/hash.hpp"
#include "lingo/metrics.hpp"

namespace lingo {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr const char* kUnadapted = "unadapted";

void require_artifact(const std::string& path, const std::string& producer) {
    if (!fs::exists(path))
        throw ConfigError("missing artifact " + path + "; run `lingo " + producer + "` first");
}

void write_config_echo(const ExperimentConfig& cfg) {
    fs::create_directories(cfg.out_dir);
    std::ofstream out(RunPaths{cfg.out_dir}.config_echo(), std::ios::binary);
    if (!out) throw ConfigError("cannot write config echo under " + cfg.out_dir);
    out << cfg.to_kv().dump();
}

struct Workspace {
    Vocabulary vocab;
    SpecMap specs;
    std::vector<Corpus> old_corpora;
    std::vector<Corpus> new_corpora;
};

Workspace load_workspace(const ExperimentConfig& cfg) {
    const RunPaths paths{cfg.out_dir};
    require_artifact(paths.vocab_path(), "gen-data");
    Workspace ws;
    ws.vocab = Vocabulary::load(paths.vocab_path());
    ws.specs = build_language_specs(cfg, ws.vocab);
    for (const std::string& lang : cfg.old_languages) {
        require_artifact(paths.data_dir() + "/" + lang + ".train.jsonl", "gen-data");
        ws.old_corpora.push_back(load_corpus(lang, paths.data_dir()));
    }
    for (const std::string& lang : cfg.new_languages) {
        require_artifact(paths.data_dir() + "/" + lang + ".train.jsonl", "gen-data");
        ws.new_corpora.push_back(load_corpus(lang, paths.data_dir()));
    }
    return ws;
}

TrainLogger jsonl_logger(const std::string& path, std::ofstream& out) {
    fs::create_directories(fs::path(path).parent_path());
    out.open(path, std::ios::binary);
    if (!out) throw ConfigError("cannot open log file " + path);
    return [&out](const TrainLogEntry& e) {
        ordered_json j;
        j["step"] = e.step;
        j["phase"] = e.phase;
        j["language"] = e.language;
        j["loss"] = e.loss;
        j["lr"] = e.lr;
        if (e.has_val) j["val_loss"] = e.val_loss;
        out << j.dump() << '\n';
    };
}

void write_decode_records(const std::vector<UttDecodeRecord>& records, const std::string& path) {
    fs::create_directories(fs::path(path).parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot open decode output " + path);
    for (const UttDecodeRecord& r : records) {
        ordered_json j;
        j["id"] = r.id;
        j["true_lang"] = r.true_language;
        j["pred_lang"] = r.predicted_language;
        j["text"] = r.text;
        j["asr_score"] = r.asr_score;
        ordered_json lid = ordered_json::object();
        for (const LidScore& s : r.lid) lid[s.language] = s.score;
        j["lid_scores"] = lid;
        j["guard_triggered"] = r.guard_triggered;
        out << j.dump() << '\n';
    }
}

std::vector<UttDecodeRecord> read_decode_records(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open decode output " + path);
    std::vector<UttDecodeRecord> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const ordered_json j = ordered_json::parse(line);
        UttDecodeRecord r;
        r.id = j.at("id").get<std::string>();
        r.true_language = j.at("true_lang").get<std::string>();
        r.predicted_language = j.at("pred_lang").get<std::string>();
        r.text = j.at("text").get<std::string>();
        r.asr_score = j.at("asr_score").get<double>();
        for (const auto& [lang, score] : j.at("lid_scores").items())
            r.lid.push_back({lang, score.get<double>()});
        r.guard_triggered = j.at("guard_triggered").get<bool>();
        out.push_back(std::move(r));
    }
    return out;
}

// strategies trained by `reproduce`; the task-wise variant reuses the
// separate-table checkpoint and differs only at decode time
const std::vector<Strategy> kReproduceStrategies{Strategy::FT, Strategy::ER, Strategy::AVG,
                                                 Strategy::ERE};

// er-e-part rows appear only when that strategy was adapted and decoded
std::vector<std::string> report_methods(const ExperimentConfig&) {
    return {kUnadapted, "ft", "er", "avg", "er-e", "er-e-part", "er-e-b"};
}

bool method_covers_new_languages(const std::string& method) { return method != kUnadapted; }

// which training directory a method's checkpoints live in
std::string checkpoint_method(const std::string& method) {
    return method == "er-e-b" ? "er-e" : method;
}

std::vector<std::string> method_settings(const std::string& method) {
    if (method == "er-e-b") return {"taskwise"};  // shares the er-e checkpoint otherwise
    return {"aware", "agnostic"};
}

// the task-wise method reuses the separate-table model, so its language-aware
// rows come from that method's decode output
std::pair<std::string, std::string> decode_source(const std::string& method,
                                                  const std::string& setting) {
    if (method == "er-e-b" && setting == "aware") return {"er-e", "aware"};
    return {method, setting};
}

Model<float> load_method_model(const ExperimentConfig& cfg, const std::string& method,
                               Vocabulary& vocab) {
    const RunPaths paths{cfg.out_dir};
    std::string ckpt_path;
    if (method == kUnadapted) {
        ckpt_path = paths.unadapted_ckpt();
        require_artifact(ckpt_path, "pretrain");
    } else {
        const std::string dir = checkpoint_method(method);
        ckpt_path = paths.phase_ckpt(dir, static_cast<int>(cfg.new_languages.size()));
        require_artifact(ckpt_path, "adapt --strategy " + dir);
    }
    return model_from_checkpoint(load_checkpoint(ckpt_path), vocab);
}

DecodeSetting setting_from_string(const std::string& s) {
    if (s == "aware") return DecodeSetting::Aware;
    if (s == "agnostic") return DecodeSetting::Agnostic;
    if (s == "taskwise") return DecodeSetting::TaskWise;
    throw ConfigError("unknown decode setting: " + s);
}

}  // namespace

void run_gen_data(const ExperimentConfig& cfg) {
    const RunPaths paths{cfg.out_dir};
    write_config_echo(cfg);
    fs::create_directories(paths.data_dir());

    const Vocabulary vocab(make_vocab_tokens(cfg), cfg.old_languages);
    vocab.save(paths.vocab_path());
    const SpecMap specs = build_language_specs(cfg, vocab);

    std::vector<std::string> all = cfg.old_languages;
    all.insert(all.end(), cfg.new_languages.begin(), cfg.new_languages.end());
    for (const std::string& lang : all) {
        const Corpus corpus = generate_language(specs.at(lang), vocab, cfg.sizes);
        save_corpus(corpus, paths.data_dir());
    }
}

void run_pretrain(const ExperimentConfig& cfg) {
    const RunPaths paths{cfg.out_dir};
    write_config_echo(cfg);
    Workspace ws = load_workspace(cfg);

    Model<float> model(cfg.model, ws.vocab, derive_seed(cfg.seed, "init"));
    std::ofstream log_stream;
    const TrainLogger logger = jsonl_logger(paths.pretrain_log(), log_stream);
    pretrain(model, ws.vocab, ws.specs, ws.old_corpora, cfg.pretrain,
             derive_seed(cfg.seed, "pretrain"), logger);

    fs::create_directories(fs::path(paths.unadapted_ckpt()).parent_path());
    save_checkpoint(checkpoint_from_model(model, ws.vocab), paths.unadapted_ckpt());
}

void run_adapt(const ExperimentConfig& cfg, Strategy strategy) {
    const RunPaths paths{cfg.out_dir};
    Workspace ws = load_workspace(cfg);
    require_artifact(paths.unadapted_ckpt(), "pretrain");

    const Checkpoint unadapted = load_checkpoint(paths.unadapted_ckpt());
    Model<float> model = model_from_checkpoint(unadapted, ws.vocab);
    const std::string* base_hash = unadapted.find_meta("encoder_hash");

    const std::string method = strategy_to_string(strategy);
    std::ofstream log_stream;
    const TrainLogger logger = jsonl_logger(paths.train_log(method), log_stream);

    SequentialOptions opts;
    opts.strategy = strategy;
    opts.hyper = cfg.adapt;
    opts.beta = cfg.beta;
    opts.replay_fraction = cfg.replay_fraction;
    opts.decode = cfg.decode;
    opts.eval_phases = PhaseEvalMode::Intermediate;
    opts.seed = derive_seed(cfg.seed, "adapt/" + method);
    const SequentialOutcome outcome =
        sequential_adapt(model, ws.vocab, ws.specs, ws.old_corpora, ws.new_corpora, opts, logger);

    if (base_hash && *base_hash != hash_hex(encoder_hash(model)))
        throw InvariantError("frozen-encoder hash mismatch after adapting with " + method);

    for (std::size_t k = 0; k < outcome.checkpoints.size(); ++k) {
        const std::string path = paths.phase_ckpt(method, static_cast<int>(k + 1));
        fs::create_directories(fs::path(path).parent_path());
        save_checkpoint(outcome.checkpoints[k], path);
    }

    // forgetting curve: language-agnostic WER over every seen language after
    // each intermediate phase (the final state is covered by `decode`/`eval`)
    std::ofstream curve(paths.phase_eval_file(method), std::ios::binary);
    if (!curve) throw ConfigError("cannot open " + paths.phase_eval_file(method));
    for (const PhaseEval& pe : outcome.phase_evals) {
        for (const EvalReport::Entry& row : pe.rows) {
            ordered_json j;
            j["phase"] = pe.phase;
            j["adapted_language"] = pe.language;
            j["language"] = row.language;
            j["setting"] = row.setting;
            j["wer"] = row.wer;
            curve << j.dump() << '\n';
        }
    }
}

void run_decode(const ExperimentConfig& cfg, const std::string& method) {
    const RunPaths paths{cfg.out_dir};
    Workspace ws = load_workspace(cfg);
    Model<float> model = load_method_model(cfg, method, ws.vocab);

    std::vector<const Corpus*> targets;
    for (const Corpus& c : ws.old_corpora) targets.push_back(&c);
    if (method_covers_new_languages(method)) {
        for (const Corpus& c : ws.new_corpora) targets.push_back(&c);
    }
    for (const std::string& setting : method_settings(method)) {
        std::vector<UttDecodeRecord> records;
        for (const Corpus* c : targets) {
            auto split_records = decode_split(model, ws.vocab, ws.specs, c->test,
                                              setting_from_string(setting), cfg.decode);
            records.insert(records.end(), split_records.begin(), split_records.end());
        }
        write_decode_records(records, paths.decode_file(method, setting));
    }
}

EvalReport run_eval(const ExperimentConfig& cfg) {
    const RunPaths paths{cfg.out_dir};
    Workspace ws = load_workspace(cfg);

    std::vector<std::string> all_languages = cfg.old_languages;
    all_languages.insert(all_languages.end(), cfg.new_languages.begin(), cfg.new_languages.end());
    std::map<std::string, const Corpus*> corpora;
    for (const Corpus& c : ws.old_corpora) corpora[c.language] = &c;
    for (const Corpus& c : ws.new_corpora) corpora[c.language] = &c;

    EvalReport report;
    report.info.emplace_back("seed", std::to_string(cfg.seed));
    report.info.emplace_back("old_languages", [&] {
        std::string s;
        for (const auto& l : cfg.old_languages) s += (s.empty() ? "" : ",") + l;
        return s;
    }());
    report.info.emplace_back("new_languages", [&] {
        std::string s;
        for (const auto& l : cfg.new_languages) s += (s.empty() ? "" : ",") + l;
        return s;
    }());

    for (const std::string& method : report_methods(cfg)) {
        const std::vector<std::string> languages =
            method_covers_new_languages(method) ? all_languages : cfg.old_languages;
        std::vector<std::string> settings = method_settings(method);
        if (method == "er-e-b") settings.insert(settings.begin(), "aware");
        for (const std::string& setting : settings) {
            const auto [src_method, src_setting] = decode_source(method, setting);
            const std::string file = paths.decode_file(src_method, src_setting);
            if (!fs::exists(file)) continue;  // method not decoded in this run
            const auto records = read_decode_records(file);

            // per-language rows; the task-wise setting reports as the
            // language-agnostic column of its method
            const std::string report_setting = setting == "taskwise" ? "agnostic" : setting;
            std::map<std::string, std::vector<UttDecodeRecord>> by_lang;
            for (const auto& r : records) by_lang[r.true_language].push_back(r);
            std::vector<double> wers;
            for (const std::string& lang : languages) {
                auto it = by_lang.find(lang);
                if (it == by_lang.end())
                    throw ConfigError("decode output " + file + " is missing language " + lang);
                const RecordsWer w = records_wer_detail(corpora.at(lang)->test, it->second);
                report.entries.push_back({method, lang, report_setting, w.value});
                report.empty_reference_flagged |= w.empty_reference;
                wers.push_back(w.value);
            }
            if (method_covers_new_languages(method)) {
                EvalReport::AwerEntry a;
                a.method = method;
                a.setting = report_setting;
                a.awer = awer(wers);
                report.awers.push_back(a);
            }
            if (setting != "aware") {
                std::vector<std::pair<std::string, std::string>> pairs;
                for (const auto& r : records) pairs.emplace_back(r.true_language, r.predicted_language);
                report.confusions.emplace_back(method, lid_confusion(pairs, all_languages));
            }
        }
    }

    // relative change against plain fine-tuning, per setting
    for (auto& a : report.awers) {
        if (a.method == "ft") continue;
        const EvalReport::AwerEntry* base = report.find_awer("ft", a.setting);
        if (base && base->awer > 0.0) {
            a.has_relative = true;
            a.relative_pct = relative_change(a.awer, base->awer);
            a.baseline = "ft";
        }
    }

    emit_report(report, cfg.out_dir);
    return report;
}

namespace {

void print_summary(const ExperimentConfig& cfg, const EvalReport& report) {
    std::vector<std::string> langs = cfg.old_languages;
    langs.insert(langs.end(), cfg.new_languages.begin(), cfg.new_languages.end());
    auto cell = [&](const std::string& method, const std::string& lang,
                    const std::string& setting) -> std::string {
        for (const auto& e : report.entries) {
            if (e.method == method && e.language == lang && e.setting == setting)
                return format_one_decimal(e.wer * 100.0);
        }
        return "n/a";
    };
    for (const std::string& setting : {"aware", "agnostic"}) {
        std::printf("\n%s WER (%%)\n", setting == std::string("aware") ? "language-aware"
                                                                       : "language-agnostic");
        std::printf("%-10s", "method");
        for (const auto& l : langs) std::printf(" %8s", l.c_str());
        std::printf(" %8s %9s\n", "avg", "vs ft");
        for (const std::string& method : report_methods(cfg)) {
            bool present = false;
            for (const auto& e : report.entries) present |= e.method == method;
            if (!present) continue;
            std::printf("%-10s", method.c_str());
            for (const auto& l : langs) std::printf(" %8s", cell(method, l, setting).c_str());
            const EvalReport::AwerEntry* a = report.find_awer(method, setting);
            if (a) {
                std::printf(" %8s", format_one_decimal(a->awer * 100.0).c_str());
                if (a->has_relative)
                    std::printf(" %8s%%", format_one_decimal(a->relative_pct).c_str());
            }
            std::printf("\n");
        }
    }
    std::printf("\nreport written to %s/report.json\n", cfg.out_dir.c_str());
}

}  // namespace

ReproduceResult run_reproduce(const ExperimentConfig& cfg) {
    run_gen_data(cfg);
    run_pretrain(cfg);
    for (Strategy s : kReproduceStrategies) run_adapt(cfg, s);
    run_decode(cfg, kUnadapted);
    for (Strategy s : kReproduceStrategies) run_decode(cfg, strategy_to_string(s));
    run_decode(cfg, "er-e-b");
    ReproduceResult result;
    result.report = run_eval(cfg);
    print_summary(cfg, result.report);
    return result;
}

}  // namespace lingo
