#include "lingo/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "lingo/errors.hpp"
#include "lingo/rng.hpp"

namespace lingo {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

}  // namespace

KvConfig KvConfig::parse_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("config: cannot open " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_string(buf.str());
}

KvConfig KvConfig::parse_string(const std::string& text) {
    KvConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config: line " + std::to_string(lineno) + " has no '='");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError("config: empty key at line " + std::to_string(lineno));
        cfg.kv_[key] = value;
    }
    return cfg;
}

std::string KvConfig::get_str(const std::string& key, const std::string& fallback) const {
    auto it = kv_.find(key);
    return it == kv_.end() ? fallback : it->second;
}

long long KvConfig::get_int(const std::string& key, long long fallback) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    try {
        return std::stoll(it->second);
    } catch (const std::exception&) {
        throw ConfigError("config: key " + key + " is not an integer: " + it->second);
    }
}

std::uint64_t KvConfig::get_u64(const std::string& key, std::uint64_t fallback) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    try {
        return std::stoull(it->second);
    } catch (const std::exception&) {
        throw ConfigError("config: key " + key + " is not an unsigned integer: " + it->second);
    }
}

double KvConfig::get_double(const std::string& key, double fallback) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    try {
        return std::stod(it->second);
    } catch (const std::exception&) {
        throw ConfigError("config: key " + key + " is not a number: " + it->second);
    }
}

bool KvConfig::get_bool(const std::string& key, bool fallback) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw ConfigError("config: key " + key + " is not a boolean: " + it->second);
}

std::vector<std::string> KvConfig::get_list(const std::string& key,
                                            const std::vector<std::string>& fallback) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    std::vector<std::string> out;
    std::string cur;
    for (char c : it->second) {
        if (c == ',') {
            const std::string t = trim(cur);
            if (!t.empty()) out.push_back(t);
            cur.clear();
        } else {
            cur += c;
        }
    }
    const std::string t = trim(cur);
    if (!t.empty()) out.push_back(t);
    return out;
}

std::string KvConfig::dump() const {
    std::string out;
    for (const auto& [k, v] : kv_) out += k + " = " + v + "\n";
    return out;
}

namespace {

std::string join(const std::vector<std::string>& items) {
    std::string out;
    for (const std::string& s : items) {
        if (!out.empty()) out += ", ";
        out += s;
    }
    return out;
}

std::string fmt_double(double v) {
    std::ostringstream ss;
    ss.precision(17);
    ss << v;
    return ss.str();
}

}  // namespace

ExperimentConfig ExperimentConfig::from_kv(const KvConfig& kv) {
    ExperimentConfig cfg;
    cfg.seed = kv.get_u64("seed", cfg.seed);
    cfg.old_languages = kv.get_list("languages.old", cfg.old_languages);
    cfg.new_languages = kv.get_list("languages.new", cfg.new_languages);

    cfg.vocab_tokens = static_cast<int>(kv.get_int("data.vocab_tokens", cfg.vocab_tokens));
    cfg.tokens_per_language =
        static_cast<int>(kv.get_int("data.tokens_per_language", cfg.tokens_per_language));
    cfg.overlap = kv.get_double("data.overlap", cfg.overlap);
    cfg.mean_words = static_cast<int>(kv.get_int("data.mean_words", cfg.mean_words));
    cfg.word_len_min = static_cast<int>(kv.get_int("data.word_len_min", cfg.word_len_min));
    cfg.word_len_max = static_cast<int>(kv.get_int("data.word_len_max", cfg.word_len_max));
    cfg.feature_noise = kv.get_double("data.feature_noise", cfg.feature_noise);
    cfg.bias_scale = kv.get_double("data.bias_scale", cfg.bias_scale);
    cfg.frames_per_token = static_cast<int>(kv.get_int("data.frames_per_token", cfg.frames_per_token));
    cfg.sizes.train = static_cast<int>(kv.get_int("data.train", cfg.sizes.train));
    cfg.sizes.dev = static_cast<int>(kv.get_int("data.dev", cfg.sizes.dev));
    cfg.sizes.test = static_cast<int>(kv.get_int("data.test", cfg.sizes.test));

    cfg.model.feature_dim = static_cast<std::size_t>(kv.get_int("model.feature_dim", 24));
    cfg.model.model_dim = static_cast<std::size_t>(kv.get_int("model.dim", 64));
    cfg.model.encoder_layers = static_cast<std::size_t>(kv.get_int("model.encoder_layers", 2));
    cfg.model.decoder_layers = static_cast<std::size_t>(kv.get_int("model.decoder_layers", 2));
    cfg.model.heads = static_cast<std::size_t>(kv.get_int("model.heads", 4));
    cfg.model.ffn_dim = static_cast<std::size_t>(kv.get_int("model.ffn_dim", 128));
    cfg.model.max_decode_len = static_cast<std::size_t>(kv.get_int("model.max_decode_len", 48));

    cfg.pretrain.epochs = static_cast<int>(kv.get_int("pretrain.epochs", cfg.pretrain.epochs));
    cfg.pretrain.batch_size = static_cast<int>(kv.get_int("pretrain.batch", cfg.pretrain.batch_size));
    cfg.pretrain.opt.lr = kv.get_double("pretrain.lr", cfg.pretrain.opt.lr);
    cfg.pretrain.opt.weight_decay = kv.get_double("pretrain.weight_decay", 0.01);
    cfg.pretrain.val_interval = kv.get_double("pretrain.val_interval", cfg.pretrain.val_interval);
    cfg.pretrain.anneal = kv.get_bool("pretrain.anneal", cfg.pretrain.anneal);
    cfg.pretrain.gate_wer = kv.get_double("pretrain.gate_wer", cfg.pretrain.gate_wer);

    cfg.adapt.epochs = static_cast<int>(kv.get_int("adapt.epochs", cfg.adapt.epochs));
    cfg.adapt.batch_size = static_cast<int>(kv.get_int("adapt.batch", cfg.adapt.batch_size));
    cfg.adapt.val_interval = kv.get_double("adapt.val_interval", cfg.adapt.val_interval);
    cfg.adapt.opt.lr = kv.get_double("adapt.lr", cfg.adapt.opt.lr);
    cfg.adapt.opt.weight_decay = kv.get_double("adapt.weight_decay", cfg.adapt.opt.weight_decay);
    cfg.adapt.newbob_threshold = kv.get_double("adapt.newbob_threshold", cfg.adapt.newbob_threshold);
    cfg.adapt.newbob_factor = kv.get_double("adapt.newbob_factor", cfg.adapt.newbob_factor);
    cfg.adapt.newbob_patience =
        static_cast<int>(kv.get_int("adapt.newbob_patience", cfg.adapt.newbob_patience));
    cfg.adapt.surgery_enabled = kv.get_bool("adapt.surgery_enabled", cfg.adapt.surgery_enabled);
    cfg.adapt.freeze_st = kv.get_bool("adapt.freeze_st", cfg.adapt.freeze_st);
    cfg.beta = kv.get_double("adapt.beta", cfg.beta);
    cfg.replay_fraction = kv.get_double("adapt.replay_fraction", cfg.replay_fraction);

    cfg.decode.beam_width = static_cast<int>(kv.get_int("decode.beam_width", cfg.decode.beam_width));
    cfg.decode.top_n = static_cast<int>(kv.get_int("decode.top_n", cfg.decode.top_n));
    cfg.decode.min_words = static_cast<int>(kv.get_int("decode.min_words", cfg.decode.min_words));
    cfg.decode.max_overlap = static_cast<int>(kv.get_int("decode.max_overlap", cfg.decode.max_overlap));
    cfg.decode.lid_renormalize = kv.get_bool("decode.lid_renormalize", cfg.decode.lid_renormalize);
    cfg.decode.asr_score_include_lid =
        kv.get_bool("decode.asr_score_include_lid", cfg.decode.asr_score_include_lid);

    cfg.out_dir = kv.get_str("out", cfg.out_dir);
    if (kv.get_bool("quick", false)) cfg.apply_quick();
    cfg.validate();
    return cfg;
}

KvConfig ExperimentConfig::to_kv() const {
    KvConfig kv;
    kv.set("seed", std::to_string(seed));
    kv.set("languages.old", join(old_languages));
    kv.set("languages.new", join(new_languages));
    kv.set("data.vocab_tokens", std::to_string(vocab_tokens));
    kv.set("data.tokens_per_language", std::to_string(tokens_per_language));
    kv.set("data.overlap", fmt_double(overlap));
    kv.set("data.mean_words", std::to_string(mean_words));
    kv.set("data.word_len_min", std::to_string(word_len_min));
    kv.set("data.word_len_max", std::to_string(word_len_max));
    kv.set("data.feature_noise", fmt_double(feature_noise));
    kv.set("data.bias_scale", fmt_double(bias_scale));
    kv.set("data.frames_per_token", std::to_string(frames_per_token));
    kv.set("data.train", std::to_string(sizes.train));
    kv.set("data.dev", std::to_string(sizes.dev));
    kv.set("data.test", std::to_string(sizes.test));
    kv.set("model.feature_dim", std::to_string(model.feature_dim));
    kv.set("model.dim", std::to_string(model.model_dim));
    kv.set("model.encoder_layers", std::to_string(model.encoder_layers));
    kv.set("model.decoder_layers", std::to_string(model.decoder_layers));
    kv.set("model.heads", std::to_string(model.heads));
    kv.set("model.ffn_dim", std::to_string(model.ffn_dim));
    kv.set("model.max_decode_len", std::to_string(model.max_decode_len));
    kv.set("pretrain.epochs", std::to_string(pretrain.epochs));
    kv.set("pretrain.batch", std::to_string(pretrain.batch_size));
    kv.set("pretrain.lr", fmt_double(pretrain.opt.lr));
    kv.set("pretrain.weight_decay", fmt_double(pretrain.opt.weight_decay));
    kv.set("pretrain.val_interval", fmt_double(pretrain.val_interval));
    kv.set("pretrain.anneal", pretrain.anneal ? "true" : "false");
    kv.set("pretrain.gate_wer", fmt_double(pretrain.gate_wer));
    kv.set("adapt.epochs", std::to_string(adapt.epochs));
    kv.set("adapt.batch", std::to_string(adapt.batch_size));
    kv.set("adapt.val_interval", fmt_double(adapt.val_interval));
    kv.set("adapt.lr", fmt_double(adapt.opt.lr));
    kv.set("adapt.weight_decay", fmt_double(adapt.opt.weight_decay));
    kv.set("adapt.newbob_threshold", fmt_double(adapt.newbob_threshold));
    kv.set("adapt.newbob_factor", fmt_double(adapt.newbob_factor));
    kv.set("adapt.newbob_patience", std::to_string(adapt.newbob_patience));
    kv.set("adapt.surgery_enabled", adapt.surgery_enabled ? "true" : "false");
    kv.set("adapt.freeze_st", adapt.freeze_st ? "true" : "false");
    kv.set("adapt.beta", fmt_double(beta));
    kv.set("adapt.replay_fraction", fmt_double(replay_fraction));
    kv.set("decode.beam_width", std::to_string(decode.beam_width));
    kv.set("decode.top_n", std::to_string(decode.top_n));
    kv.set("decode.min_words", std::to_string(decode.min_words));
    kv.set("decode.max_overlap", std::to_string(decode.max_overlap));
    kv.set("decode.lid_renormalize", decode.lid_renormalize ? "true" : "false");
    kv.set("decode.asr_score_include_lid", decode.asr_score_include_lid ? "true" : "false");
    kv.set("out", out_dir);
    return kv;
}

void ExperimentConfig::apply_quick() {
    sizes = SplitSizes{200, 32, 48};
    model.model_dim = 48;
    model.ffn_dim = 96;
    model.encoder_layers = 1;
    model.max_decode_len = 40;
    pretrain.epochs = 18;
    adapt.val_interval = 1.0 / 8.0;
}

void ExperimentConfig::validate() const {
    if (old_languages.size() < 2)
        throw ConfigError("config: need at least 2 pretraining languages");
    if (new_languages.empty()) throw ConfigError("config: need at least 1 new language");
    for (const std::string& n : new_languages) {
        for (const std::string& o : old_languages) {
            if (n == o) throw ConfigError("config: language " + n + " is both old and new");
        }
    }
    if (vocab_tokens < 2 || vocab_tokens > 75)
        throw ConfigError("config: data.vocab_tokens must be in [2, 75]");
    const int needed_old = tokens_per_language * static_cast<int>(old_languages.size());
    if (needed_old > vocab_tokens)
        throw ConfigError("config: old languages need " + std::to_string(needed_old) +
                          " tokens but only " + std::to_string(vocab_tokens) + " exist");
    if (overlap < 0.0 || overlap > 1.0) throw ConfigError("config: data.overlap must be in [0, 1]");
    const int fresh_per_new =
        tokens_per_language - static_cast<int>(std::lround(overlap * tokens_per_language));
    if (needed_old + fresh_per_new * static_cast<int>(new_languages.size()) > vocab_tokens)
        throw ConfigError("config: not enough unused tokens for the new languages");
    if (mean_words < 1 || word_len_min < 1 || word_len_max < word_len_min)
        throw ConfigError("config: bad utterance geometry");
    if (sizes.train < 1 || sizes.dev < 1 || sizes.test < 1)
        throw ConfigError("config: split sizes must be positive");
    if (beta < 0.0) throw ConfigError("config: adapt.beta must be >= 0");
    if (replay_fraction <= 0.0 || replay_fraction > 1.0)
        throw ConfigError("config: adapt.replay_fraction must be in (0, 1]");
    model.validate();
    decode.validate();
}

std::vector<std::string> make_vocab_tokens(const ExperimentConfig& cfg) {
    // fixed-length consonant-vowel syllables: equal lengths keep greedy
    // tokenization exact on concatenations
    static const std::string consonants = "bcdfgklmnprstvz";
    static const std::string vowels = "aeiou";
    std::vector<std::string> tokens;
    for (char c : consonants) {
        for (char v : vowels) {
            if (static_cast<int>(tokens.size()) >= cfg.vocab_tokens) break;
            tokens.push_back(std::string{c, v});
        }
    }
    if (static_cast<int>(tokens.size()) < cfg.vocab_tokens)
        throw ConfigError("config: vocab_tokens exceeds the syllable inventory");
    tokens.push_back(" ");
    return tokens;
}

SpecMap build_language_specs(const ExperimentConfig& cfg, const Vocabulary& vocab) {
    // global pool of syllable ids (the space token is excluded from subsets)
    std::vector<int> pool;
    for (int j = 0; j < vocab.vocab_size(); ++j) {
        const int id = vocab.vocab_id_at(j);
        if (vocab.token(id) != " ") pool.push_back(id);
    }
    Rng pool_rng(derive_seed(cfg.seed, "subsets"));
    pool_rng.shuffle(pool);

    SpecMap specs;
    std::size_t cursor = 0;
    std::vector<std::vector<int>> old_subsets;
    auto take = [&](std::size_t n) {
        std::vector<int> out;
        for (std::size_t i = 0; i < n; ++i) out.push_back(pool[cursor++]);
        return out;
    };

    const std::size_t per_lang = static_cast<std::size_t>(cfg.tokens_per_language);
    for (const std::string& name : cfg.old_languages) old_subsets.push_back(take(per_lang));

    auto finish_spec = [&](const std::string& name, std::vector<int> subset) {
        LanguageSpec spec;
        spec.name = name;
        spec.seed = derive_seed(cfg.seed, "lang/" + name);
        std::sort(subset.begin(), subset.end());
        spec.token_subset = std::move(subset);
        const std::size_t n = spec.token_subset.size();
        Rng grammar(derive_seed(spec.seed, "grammar"));
        spec.bigram_weights = Matrix<double>(n, n);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                const double u = grammar.uniform();
                spec.bigram_weights(i, j) = 0.02 + u * u * u;  // skewed, strictly positive
            }
        }
        spec.start_weights.resize(n);
        for (double& w : spec.start_weights) w = 0.02 + grammar.uniform();
        spec.mean_len = cfg.mean_words;
        spec.word_len_min = cfg.word_len_min;
        spec.word_len_max = cfg.word_len_max;
        spec.feature_noise = cfg.feature_noise;
        spec.bias_scale = cfg.bias_scale;
        spec.frames_per_token = cfg.frames_per_token;
        spec.feature_dim = static_cast<int>(cfg.model.feature_dim);
        spec.validate();
        specs.emplace(name, std::move(spec));
    };

    for (std::size_t i = 0; i < cfg.old_languages.size(); ++i)
        finish_spec(cfg.old_languages[i], old_subsets[i]);

    const std::size_t shared =
        static_cast<std::size_t>(std::lround(cfg.overlap * static_cast<double>(per_lang)));
    for (std::size_t k = 0; k < cfg.new_languages.size(); ++k) {
        const std::vector<int>& paired = old_subsets[k % old_subsets.size()];
        std::vector<int> shuffled = paired;
        Rng rng(derive_seed(cfg.seed, "share/" + cfg.new_languages[k]));
        rng.shuffle(shuffled);
        std::vector<int> subset(shuffled.begin(),
                                shuffled.begin() + static_cast<std::ptrdiff_t>(
                                                       std::min(shared, shuffled.size())));
        for (std::size_t i = subset.size(); i < per_lang; ++i) subset.push_back(pool[cursor++]);
        finish_spec(cfg.new_languages[k], std::move(subset));
    }
    return specs;
}

}  // namespace lingo
