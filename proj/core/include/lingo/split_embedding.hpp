#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "lingo/langgen.hpp"
#include "lingo/matrix.hpp"
#include "lingo/optim.hpp"
#include "lingo/rng.hpp"
#include "lingo/vocab.hpp"

namespace lingo {

template <typename T>
struct SplitEmbedding;

// Read/write handle over the shared special-token table plus exactly one
// vocabulary table (the base table for pretrained languages, a spawned table
// for adapted ones). Local token space: [0, S) specials, [S, S+J) vocabulary.
template <typename T>
struct EmbeddingView {
    const Vocabulary* vocab = nullptr;
    ParamTensor<T>* st = nullptr;
    ParamTensor<T>* table = nullptr;
    const std::vector<int>* local_to_global = nullptr;         // vocab part only
    const std::unordered_map<int, int>* global_to_local = nullptr;
    std::string language;  // empty for the base view

    int num_specials() const { return static_cast<int>(st->value.rows); }
    int vocab_rows() const { return static_cast<int>(table->value.rows); }
    int size() const { return num_specials() + vocab_rows(); }

    bool is_base() const { return language.empty(); }

    // global id -> local index; hard error when the view cannot represent it
    int to_local(int global_id) const {
        if (vocab->is_special(global_id)) return vocab->special_index(global_id);
        if (local_to_global == nullptr) return num_specials() + vocab->vocab_index(global_id);
        auto it = global_to_local->find(global_id);
        if (it == global_to_local->end())
            throw std::out_of_range("EmbeddingView(" + (language.empty() ? "base" : language) +
                                    "): token id " + std::to_string(global_id) +
                                    " not representable in this view");
        return num_specials() + it->second;
    }

    int to_global(int local) const {
        if (local < 0 || local >= size())
            throw std::out_of_range("EmbeddingView: local index " + std::to_string(local) +
                                    " out of range");
        if (local < num_specials()) return vocab->special_ids()[static_cast<std::size_t>(local)];
        const int j = local - num_specials();
        if (local_to_global == nullptr) return vocab->vocab_id_at(j);
        return (*local_to_global)[static_cast<std::size_t>(j)];
    }

    // embedding row of a local index (length E)
    const T* embedding_row(int local) const {
        if (local < num_specials()) return st->value.row(static_cast<std::size_t>(local));
        return table->value.row(static_cast<std::size_t>(local - num_specials()));
    }

    T* grad_row(int local) const {
        if (local < num_specials()) return st->grad.row(static_cast<std::size_t>(local));
        return table->grad.row(static_cast<std::size_t>(local - num_specials()));
    }

    // nullptr when the owning tensor is frozen, so backward passes leave
    // non-trainable gradients at exactly zero
    T* grad_row_if_trainable(int local) const {
        if (local < num_specials())
            return st->trainable ? st->grad.row(static_cast<std::size_t>(local)) : nullptr;
        return table->trainable ? table->grad.row(static_cast<std::size_t>(local - num_specials()))
                                : nullptr;
    }
};

// Split token-embedding store: a shared special-token table, the original
// vocabulary table kept for pretrained languages, and one spawned vocabulary
// table per adapted language covering only the tokens that language uses.
// Tables are stored row-per-token; the embedding dimension is the column
// count.
template <typename T>
struct SplitEmbedding {
    struct LangTable {
        std::string language;
        ParamTensor<T> table;                      // J x E
        std::vector<int> local_to_global;          // sorted global vocab ids
        std::unordered_map<int, int> global_to_local;
    };

    struct RegistryEntry {
        std::string language;
        int lid_global = -1;
        bool pretrained = false;
        int table_index = -1;  // -1: routed to the base table
    };

    std::size_t dim = 0;
    ParamTensor<T> st;    // S x E, shared across languages
    ParamTensor<T> base;  // U_vocab x E, original table
    std::vector<LangTable> lang_tables;
    std::vector<RegistryEntry> registry;

    SplitEmbedding() = default;

    // init_std 0.1 keeps tied-projection logits at a useful scale from the
    // first step (the rows also serve as the output weights)
    SplitEmbedding(const Vocabulary& vocab, std::size_t model_dim, std::uint64_t init_seed,
                   T init_std = T(0.1))
        : dim(model_dim) {
        st = ParamTensor<T>("emb.st", Matrix<T>(static_cast<std::size_t>(vocab.num_specials()), dim));
        base = ParamTensor<T>("emb.base", Matrix<T>(static_cast<std::size_t>(vocab.vocab_size()), dim));
        Rng st_rng(derive_seed(init_seed, "emb.st"));
        for (T& v : st.value.data) v = static_cast<T>(st_rng.gaussian()) * init_std;
        Rng base_rng(derive_seed(init_seed, "emb.base"));
        for (T& v : base.value.data) v = static_cast<T>(base_rng.gaussian()) * init_std;
        for (const auto& [name, lid] : vocab.languages()) {
            registry.push_back(RegistryEntry{name, lid, true, -1});
        }
    }

    const RegistryEntry* find(const std::string& language) const {
        for (const auto& e : registry) {
            if (e.language == language) return &e;
        }
        return nullptr;
    }

    // Registers an adapted language: appends its freshly initialized
    // special-token row (std 0.02 normal) and routes it to the base table
    // until a dedicated table is spawned.
    void register_language(const std::string& language, int lid_global, std::uint64_t seed) {
        if (find(language))
            throw std::invalid_argument("SplitEmbedding: language already registered: " + language);
        Matrix<T> grown(st.value.rows + 1, dim);
        std::copy(st.value.data.begin(), st.value.data.end(), grown.data.begin());
        Rng rng(derive_seed(seed, "emb.lid/" + language));
        T* row = grown.row(grown.rows - 1);
        for (std::size_t j = 0; j < dim; ++j) row[j] = static_cast<T>(rng.gaussian()) * T(0.02);
        st.value = std::move(grown);
        st.ensure_grad_shape();
        registry.push_back(RegistryEntry{language, lid_global, false, -1});
    }

    // Spawns the language's vocabulary table: one row per distinct vocabulary
    // token in its train split, each initialized as a copy of the matching
    // base-table row. The base table is left untouched.
    void spawn_language_table(const std::string& language, const std::vector<Utterance>& train,
                              const Vocabulary& vocab) {
        RegistryEntry* entry = nullptr;
        for (auto& e : registry) {
            if (e.language == language) entry = &e;
        }
        if (!entry) throw std::invalid_argument("spawn_language_table: unknown language " + language);
        if (entry->table_index >= 0)
            throw std::invalid_argument("spawn_language_table: table already spawned for " + language);
        if (train.empty()) throw std::invalid_argument("spawn_language_table: empty corpus for " + language);
        std::vector<bool> used(static_cast<std::size_t>(vocab.vocab_size()), false);
        for (const Utterance& u : train) {
            for (int id : vocab.tokenize(u.text)) {
                if (vocab.is_vocab(id)) used[static_cast<std::size_t>(vocab.vocab_index(id))] = true;
            }
        }
        LangTable lt;
        lt.language = language;
        for (std::size_t j = 0; j < used.size(); ++j) {
            if (!used[j]) continue;
            lt.global_to_local[vocab.vocab_id_at(static_cast<int>(j))] =
                static_cast<int>(lt.local_to_global.size());
            lt.local_to_global.push_back(vocab.vocab_id_at(static_cast<int>(j)));
        }
        Matrix<T> table(lt.local_to_global.size(), dim);
        for (std::size_t r = 0; r < lt.local_to_global.size(); ++r) {
            const int vj = vocab.vocab_index(lt.local_to_global[r]);
            const T* src = base.value.row(static_cast<std::size_t>(vj));
            std::copy(src, src + dim, table.row(r));
        }
        lt.table = ParamTensor<T>("emb.lang." + language, std::move(table));
        entry->table_index = static_cast<int>(lang_tables.size());
        lang_tables.push_back(std::move(lt));
    }

    // View for decoding/training one language. Pretrained languages (and
    // adapted languages without a spawned table) use the base table.
    EmbeddingView<T> select_view(const std::string& language, const Vocabulary& vocab) {
        const RegistryEntry* entry = find(language);
        if (!entry) throw std::out_of_range("select_view: unknown language " + language);
        EmbeddingView<T> view;
        view.vocab = &vocab;
        view.st = &st;
        if (entry->table_index < 0) {
            view.table = &base;
        } else {
            LangTable& lt = lang_tables[static_cast<std::size_t>(entry->table_index)];
            view.table = &lt.table;
            view.local_to_global = &lt.local_to_global;
            view.global_to_local = &lt.global_to_local;
            view.language = language;
        }
        return view;
    }

    EmbeddingView<T> base_view(const Vocabulary& vocab) {
        EmbeddingView<T> view;
        view.vocab = &vocab;
        view.st = &st;
        view.table = &base;
        return view;
    }
};

// Token embeddings as one column per token (E x K), matching the product of
// the table with one-hot indicator columns.
template <typename T>
Matrix<T> embed(const EmbeddingView<T>& view, const TokenSeq& seq) {
    const std::size_t dim = view.st->value.cols;
    Matrix<T> z(dim, seq.size());
    for (std::size_t k = 0; k < seq.size(); ++k) {
        const T* row = view.embedding_row(view.to_local(seq[k]));
        for (std::size_t e = 0; e < dim; ++e) z(e, k) = row[e];
    }
    return z;
}

// Freeze mask over the base vocabulary table: rows for tokens that appear in
// the corpus are trainable (1), every other row is frozen (0).
template <typename T>
Matrix<T> partial_freeze_mask(const Vocabulary& vocab, const std::vector<Utterance>& train,
                              std::size_t dim) {
    Matrix<T> mask(static_cast<std::size_t>(vocab.vocab_size()), dim, T(0));
    for (const Utterance& u : train) {
        for (int id : vocab.tokenize(u.text)) {
            if (!vocab.is_vocab(id)) continue;
            T* row = mask.row(static_cast<std::size_t>(vocab.vocab_index(id)));
            for (std::size_t j = 0; j < dim; ++j) row[j] = T(1);
        }
    }
    return mask;
}

}  // namespace lingo
