#include "lingo/langgen.hpp"

#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "lingo/rng.hpp"

namespace lingo {

void LanguageSpec::validate() const {
    if (name.empty()) throw std::invalid_argument("LanguageSpec: empty name");
    if (token_subset.empty()) throw std::invalid_argument(name + ": empty token_subset");
    const std::size_t n = token_subset.size();
    if (bigram_weights.rows != n || bigram_weights.cols != n)
        shape_error(name + " bigram_weights", bigram_weights.shape_str(),
                    std::to_string(n) + "x" + std::to_string(n));
    if (start_weights.size() != n)
        throw std::invalid_argument(name + ": start_weights size mismatch");
    double start_total = 0.0;
    for (double w : start_weights) {
        if (w < 0.0) throw std::invalid_argument(name + ": negative start weight");
        start_total += w;
    }
    if (start_total <= 0.0) throw std::invalid_argument(name + ": start weights sum to zero");
    for (std::size_t i = 0; i < n; ++i) {
        double row_total = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double w = bigram_weights(i, j);
            if (w < 0.0) throw std::invalid_argument(name + ": negative transition weight");
            row_total += w;
        }
        if (row_total <= 0.0)
            throw std::invalid_argument(name + ": absorbing grammar state at subset index " +
                                        std::to_string(i));
    }
    if (mean_len < 1) throw std::invalid_argument(name + ": mean_len must be >= 1");
    if (word_len_min < 1 || word_len_max < word_len_min)
        throw std::invalid_argument(name + ": bad word length range");
    if (feature_noise < 0.0) throw std::invalid_argument(name + ": negative feature_noise");
    if (frames_per_token < 1 || feature_dim < 1)
        throw std::invalid_argument(name + ": bad feature geometry");
}

namespace {

std::string sample_text(const LanguageSpec& spec, const Vocabulary& vocab, Rng& rng) {
    const std::size_t n = spec.token_subset.size();
    std::vector<double> row(n);
    const int words = spec.mean_len;
    std::string text;
    for (int w = 0; w < words; ++w) {
        if (w > 0) text += ' ';
        const int len =
            spec.word_len_min + static_cast<int>(rng.below(
                                    static_cast<std::uint64_t>(spec.word_len_max - spec.word_len_min + 1)));
        std::size_t state = rng.weighted_choice(spec.start_weights);
        text += vocab.token(spec.token_subset[state]);
        for (int t = 1; t < len; ++t) {
            for (std::size_t j = 0; j < n; ++j) row[j] = spec.bigram_weights(state, j);
            state = rng.weighted_choice(row);
            text += vocab.token(spec.token_subset[state]);
        }
    }
    return text;
}

std::vector<Utterance> sample_split(const LanguageSpec& spec, const Vocabulary& vocab,
                                    const std::string& split, int count) {
    Rng rng(derive_seed(spec.seed, "text/" + split));
    std::vector<Utterance> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        Utterance u;
        u.id = spec.name + "-" + split + "-" + std::to_string(i);
        u.language = spec.name;
        u.text = sample_text(spec, vocab, rng);
        u.feature_seed = derive_seed(spec.seed, "features/" + u.id);
        out.push_back(std::move(u));
    }
    return out;
}

// Fixed per-token acoustic embedding, shared by every language: seeded by the
// token string so identical tokens sound identical everywhere.
void token_acoustics(const std::string& token, int dim, std::vector<double>& out) {
    Rng rng(derive_seed(0x61636f7573746963ULL, token));
    out.resize(static_cast<std::size_t>(dim));
    for (double& v : out) v = rng.gaussian();
}

void language_bias(const std::string& language, int dim, double scale, std::vector<double>& out) {
    Rng rng(derive_seed(0x6c616e6762696173ULL, language));
    out.resize(static_cast<std::size_t>(dim));
    for (double& v : out) v = rng.gaussian() * scale;
}

}  // namespace

const std::vector<Utterance>& Corpus::split(const std::string& name) const {
    if (name == "train") return train;
    if (name == "dev") return dev;
    if (name == "test") return test;
    throw std::invalid_argument("Corpus: unknown split " + name);
}

Corpus generate_language(const LanguageSpec& spec, const Vocabulary& vocab,
                         const SplitSizes& sizes) {
    spec.validate();
    for (int id : spec.token_subset) {
        if (!vocab.is_vocab(id))
            throw std::invalid_argument(spec.name + ": token_subset id " + std::to_string(id) +
                                        " is not a vocabulary token");
    }
    Corpus c;
    c.language = spec.name;
    c.train = sample_split(spec, vocab, "train", sizes.train);
    c.dev = sample_split(spec, vocab, "dev", sizes.dev);
    c.test = sample_split(spec, vocab, "test", sizes.test);
    return c;
}

Matrix<double> synthesize_features(const std::string& text, const LanguageSpec& spec,
                                   const Vocabulary& vocab, std::uint64_t utt_seed) {
    const TokenSeq tokens = vocab.tokenize(text);
    const int k = spec.frames_per_token;
    const int dim = spec.feature_dim;
    Matrix<double> features(tokens.size() * static_cast<std::size_t>(k),
                            static_cast<std::size_t>(dim));
    std::vector<double> acoustic, bias;
    language_bias(spec.name, dim, spec.bias_scale, bias);
    Rng noise(derive_seed(utt_seed, "noise"));
    std::size_t row = 0;
    for (int id : tokens) {
        token_acoustics(vocab.token(id), dim, acoustic);
        for (int f = 0; f < k; ++f, ++row) {
            double* r = features.row(row);
            for (int j = 0; j < dim; ++j)
                r[static_cast<std::size_t>(j)] =
                    acoustic[static_cast<std::size_t>(j)] + bias[static_cast<std::size_t>(j)] +
                    spec.feature_noise * noise.gaussian();
        }
    }
    return features;
}

void save_corpus_split(const std::vector<Utterance>& utts, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_corpus_split: cannot open " + path);
    for (const Utterance& u : utts) {
        nlohmann::ordered_json j;
        j["id"] = u.id;
        j["language"] = u.language;
        j["text"] = u.text;
        j["feature_seed"] = u.feature_seed;
        out << j.dump() << '\n';
    }
    if (!out) throw std::runtime_error("save_corpus_split: write failed for " + path);
}

std::vector<Utterance> load_corpus_split(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_corpus_split: cannot open " + path);
    std::vector<Utterance> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const nlohmann::json j = nlohmann::json::parse(line);
        Utterance u;
        u.id = j.at("id").get<std::string>();
        u.language = j.at("language").get<std::string>();
        u.text = j.at("text").get<std::string>();
        u.feature_seed = j.at("feature_seed").get<std::uint64_t>();
        out.push_back(std::move(u));
    }
    return out;
}

void save_corpus(const Corpus& corpus, const std::string& dir) {
    std::filesystem::create_directories(dir);
    save_corpus_split(corpus.train, dir + "/" + corpus.language + ".train.jsonl");
    save_corpus_split(corpus.dev, dir + "/" + corpus.language + ".dev.jsonl");
    save_corpus_split(corpus.test, dir + "/" + corpus.language + ".test.jsonl");
}

Corpus load_corpus(const std::string& language, const std::string& dir) {
    Corpus c;
    c.language = language;
    c.train = load_corpus_split(dir + "/" + language + ".train.jsonl");
    c.dev = load_corpus_split(dir + "/" + language + ".dev.jsonl");
    c.test = load_corpus_split(dir + "/" + language + ".test.jsonl");
    return c;
}

}  // namespace lingo
