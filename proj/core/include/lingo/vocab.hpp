#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace lingo {

using TokenSeq = std::vector<int>;

// Token inventory shared by every language: special tokens (start/end of
// transcript, padding, one language-id token per registered language) plus
// ordinary vocabulary tokens. Ids are dense and stable: construction lays out
// [sot, eot, pad, lid(old)..., vocab...]; language-id tokens registered later
// are appended at the end so existing ids never move.
class Vocabulary {
public:
    Vocabulary() = default;

    // vocab_tokens must be unique, non-empty strings without newlines; the
    // space token " " is an ordinary vocabulary token and should be included.
    Vocabulary(const std::vector<std::string>& vocab_tokens,
               const std::vector<std::string>& initial_languages);

    static constexpr const char* kSot = "<|sot|>";
    static constexpr const char* kEot = "<|eot|>";
    static constexpr const char* kPad = "<|pad|>";

    int sot() const { return sot_; }
    int eot() const { return eot_; }
    int pad() const { return pad_; }

    int size() const { return static_cast<int>(tokens_.size()); }
    int num_specials() const { return static_cast<int>(special_ids_.size()); }
    int vocab_size() const { return vocab_count_; }          // U_vocab
    int first_vocab_id() const { return first_vocab_id_; }

    const std::string& token(int id) const;
    bool is_special(int id) const;
    bool is_vocab(int id) const { return id >= 0 && id < size() && !is_special(id); }

    // 0-based position of a special token inside the special-token table.
    int special_index(int id) const;
    const std::vector<int>& special_ids() const { return special_ids_; }

    // vocab-token id -> 0-based column in the vocabulary part
    int vocab_index(int id) const;
    int vocab_id_at(int index) const { return first_vocab_id_ + index; }

    // Registers a language-id token; returns its global id. Appending never
    // renumbers existing ids. Registering twice is an error.
    int add_language(const std::string& language);
    bool has_language(const std::string& language) const;
    int lid_id(const std::string& language) const;
    const std::string& language_of_lid(int id) const;
    // registration order
    const std::vector<std::pair<std::string, int>>& languages() const { return lid_; }

    // Greedy longest-match tokenization over vocabulary tokens. Unknown
    // characters are a hard error.
    TokenSeq tokenize(const std::string& text) const;
    // Concatenates vocabulary-token strings; special tokens are dropped.
    std::string detokenize(const TokenSeq& seq) const;

    // Fraction of vocabulary tokens (specials excluded) that appear at least
    // once. An empty corpus covers nothing.
    double token_coverage(const std::vector<TokenSeq>& corpus) const;

    // One token per line, line number = id.
    void save(const std::string& path) const;
    static Vocabulary load(const std::string& path);

private:
    void index_token(int id);

    std::vector<std::string> tokens_;
    std::vector<bool> special_;
    std::vector<int> special_ids_;                       // ids in special-table order
    std::unordered_map<int, int> special_index_;         // id -> position in special_ids_
    std::vector<std::pair<std::string, int>> lid_;       // language -> id
    std::unordered_map<std::string, int> lid_by_name_;
    int sot_ = -1, eot_ = -1, pad_ = -1;
    int first_vocab_id_ = 0;
    int vocab_count_ = 0;
    // greedy matcher: first byte -> vocab ids sorted by length desc
    std::unordered_map<char, std::vector<int>> by_first_char_;
};

}  // namespace lingo
