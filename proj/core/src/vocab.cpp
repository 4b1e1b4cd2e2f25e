#include "lingo/vocab.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>
#include <unordered_set>

namespace lingo {

namespace {

bool looks_special(const std::string& s) {
    return s.size() >= 4 && s.rfind("<|", 0) == 0 && s.compare(s.size() - 2, 2, "|>") == 0;
}

std::string lid_token_string(const std::string& language) { return "<|lid:" + language + "|>"; }

}  // namespace

Vocabulary::Vocabulary(const std::vector<std::string>& vocab_tokens,
                       const std::vector<std::string>& initial_languages) {
    auto push_special = [&](const std::string& s) {
        const int id = static_cast<int>(tokens_.size());
        tokens_.push_back(s);
        special_.push_back(true);
        special_index_[id] = static_cast<int>(special_ids_.size());
        special_ids_.push_back(id);
        return id;
    };
    sot_ = push_special(kSot);
    eot_ = push_special(kEot);
    pad_ = push_special(kPad);
    for (const std::string& lang : initial_languages) {
        if (lid_by_name_.count(lang))
            throw std::invalid_argument("Vocabulary: duplicate language " + lang);
        const int id = push_special(lid_token_string(lang));
        lid_.emplace_back(lang, id);
        lid_by_name_[lang] = id;
    }
    first_vocab_id_ = static_cast<int>(tokens_.size());
    std::unordered_set<std::string> seen;
    for (const std::string& tok : vocab_tokens) {
        if (tok.empty()) throw std::invalid_argument("Vocabulary: empty vocab token");
        if (looks_special(tok))
            throw std::invalid_argument("Vocabulary: vocab token uses special marker: " + tok);
        if (!seen.insert(tok).second)
            throw std::invalid_argument("Vocabulary: duplicate vocab token: " + tok);
        const int id = static_cast<int>(tokens_.size());
        tokens_.push_back(tok);
        special_.push_back(false);
        index_token(id);
    }
    vocab_count_ = static_cast<int>(tokens_.size()) - first_vocab_id_;
}

void Vocabulary::index_token(int id) {
    auto& bucket = by_first_char_[tokens_[static_cast<std::size_t>(id)][0]];
    bucket.push_back(id);
    std::stable_sort(bucket.begin(), bucket.end(), [&](int a, int b) {
        return tokens_[static_cast<std::size_t>(a)].size() > tokens_[static_cast<std::size_t>(b)].size();
    });
}

const std::string& Vocabulary::token(int id) const {
    if (id < 0 || id >= size()) throw std::out_of_range("Vocabulary: unknown id " + std::to_string(id));
    return tokens_[static_cast<std::size_t>(id)];
}

bool Vocabulary::is_special(int id) const {
    if (id < 0 || id >= size()) throw std::out_of_range("Vocabulary: unknown id " + std::to_string(id));
    return special_[static_cast<std::size_t>(id)];
}

int Vocabulary::special_index(int id) const {
    auto it = special_index_.find(id);
    if (it == special_index_.end())
        throw std::out_of_range("Vocabulary: id " + std::to_string(id) + " is not a special token");
    return it->second;
}

int Vocabulary::vocab_index(int id) const {
    if (!is_vocab(id))
        throw std::out_of_range("Vocabulary: id " + std::to_string(id) + " is not a vocab token");
    return id - first_vocab_id_;
}

int Vocabulary::add_language(const std::string& language) {
    if (lid_by_name_.count(language))
        throw std::invalid_argument("Vocabulary: language already registered: " + language);
    const int id = static_cast<int>(tokens_.size());
    tokens_.push_back(lid_token_string(language));
    special_.push_back(true);
    special_index_[id] = static_cast<int>(special_ids_.size());
    special_ids_.push_back(id);
    lid_.emplace_back(language, id);
    lid_by_name_[language] = id;
    return id;
}

bool Vocabulary::has_language(const std::string& language) const {
    return lid_by_name_.count(language) > 0;
}

int Vocabulary::lid_id(const std::string& language) const {
    auto it = lid_by_name_.find(language);
    if (it == lid_by_name_.end())
        throw std::out_of_range("Vocabulary: unknown language " + language);
    return it->second;
}

const std::string& Vocabulary::language_of_lid(int id) const {
    for (const auto& [name, lid] : lid_) {
        if (lid == id) return name;
    }
    throw std::out_of_range("Vocabulary: id " + std::to_string(id) + " is not a language token");
}

TokenSeq Vocabulary::tokenize(const std::string& text) const {
    TokenSeq out;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto it = by_first_char_.find(text[pos]);
        int match = -1;
        if (it != by_first_char_.end()) {
            for (int id : it->second) {
                const std::string& tok = tokens_[static_cast<std::size_t>(id)];
                if (text.compare(pos, tok.size(), tok) == 0) {
                    match = id;  // longest first
                    break;
                }
            }
        }
        if (match < 0)
            throw std::invalid_argument("tokenize: no vocabulary token matches text at byte " +
                                        std::to_string(pos) + " ('" + text.substr(pos, 1) + "')");
        out.push_back(match);
        pos += tokens_[static_cast<std::size_t>(match)].size();
    }
    return out;
}

std::string Vocabulary::detokenize(const TokenSeq& seq) const {
    std::string out;
    for (int id : seq) {
        if (is_special(id)) continue;  // token() validates the id range
        out += tokens_[static_cast<std::size_t>(id)];
    }
    return out;
}

double Vocabulary::token_coverage(const std::vector<TokenSeq>& corpus) const {
    if (vocab_count_ == 0) return 0.0;
    std::unordered_set<int> distinct;
    for (const TokenSeq& seq : corpus) {
        for (int id : seq) {
            if (is_vocab(id)) distinct.insert(id);
        }
    }
    return static_cast<double>(distinct.size()) / static_cast<double>(vocab_count_);
}

void Vocabulary::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("Vocabulary::save: cannot open " + path);
    for (const std::string& tok : tokens_) out << tok << '\n';
    if (!out) throw std::runtime_error("Vocabulary::save: write failed for " + path);
}

Vocabulary Vocabulary::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("Vocabulary::load: cannot open " + path);
    Vocabulary v;
    std::string line;
    while (std::getline(in, line)) {
        const int id = static_cast<int>(v.tokens_.size());
        if (looks_special(line)) {
            v.tokens_.push_back(line);
            v.special_.push_back(true);
            v.special_index_[id] = static_cast<int>(v.special_ids_.size());
            v.special_ids_.push_back(id);
            if (line == kSot) v.sot_ = id;
            else if (line == kEot) v.eot_ = id;
            else if (line == kPad) v.pad_ = id;
            else if (line.rfind("<|lid:", 0) == 0) {
                const std::string lang = line.substr(6, line.size() - 8);
                v.lid_.emplace_back(lang, id);
                v.lid_by_name_[lang] = id;
            } else {
                throw std::runtime_error("Vocabulary::load: unknown special token " + line);
            }
        } else {
            if (line.empty())
                throw std::runtime_error("Vocabulary::load: empty token line " + std::to_string(id));
            if (v.vocab_count_ == 0) v.first_vocab_id_ = id;
            // appended language tokens come after the vocab block; a plain token
            // after that point would corrupt the dense vocab range
            if (id != v.first_vocab_id_ + v.vocab_count_)
                throw std::runtime_error("Vocabulary::load: non-contiguous vocab block at line " +
                                         std::to_string(id));
            v.tokens_.push_back(line);
            v.special_.push_back(false);
            v.index_token(id);
            ++v.vocab_count_;
        }
    }
    if (v.sot_ < 0 || v.eot_ < 0 || v.pad_ < 0)
        throw std::runtime_error("Vocabulary::load: missing control tokens in " + path);
    return v;
}

}  // namespace lingo
