#include "lingo/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "lingo/hash.hpp"

namespace lingo {

namespace {

constexpr char kMagic[4] = {'L', 'C', 'K', 'P'};

void write_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ostream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t read_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw std::runtime_error("checkpoint: truncated file");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

std::uint64_t read_u64(std::istream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    if (!in) throw std::runtime_error("checkpoint: truncated file");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

void write_string(std::ostream& out, const std::string& s) {
    write_u32(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in) {
    const std::uint32_t len = read_u32(in);
    std::string s(len, '\0');
    in.read(s.data(), static_cast<std::streamsize>(len));
    if (!in) throw std::runtime_error("checkpoint: truncated string");
    return s;
}

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

// floats serialize through their bit pattern so the round trip is exact
static_assert(sizeof(float) == 4);

}  // namespace

const std::string* Checkpoint::find_meta(const std::string& key) const {
    for (const auto& [k, v] : meta) {
        if (k == key) return &v;
    }
    return nullptr;
}

const Checkpoint::Array* Checkpoint::find(const std::string& name) const {
    for (const auto& a : arrays) {
        if (a.name == name) return &a;
    }
    return nullptr;
}

void Checkpoint::set_meta(const std::string& key, const std::string& value) {
    for (auto& [k, v] : meta) {
        if (k == key) {
            v = value;
            return;
        }
    }
    meta.emplace_back(key, value);
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
    out.write(kMagic, 4);
    write_u32(out, ckpt.version);
    write_u32(out, static_cast<std::uint32_t>(ckpt.meta.size()));
    for (const auto& [k, v] : ckpt.meta) {
        write_string(out, k);
        write_string(out, v);
    }
    write_u32(out, static_cast<std::uint32_t>(ckpt.arrays.size()));
    for (const auto& a : ckpt.arrays) {
        write_string(out, a.name);
        write_u32(out, a.rows);
        write_u32(out, a.cols);
        write_u64(out, static_cast<std::uint64_t>(a.data.size()) * 4);
        out.write(reinterpret_cast<const char*>(a.data.data()),
                  static_cast<std::streamsize>(a.data.size() * 4));
    }
    if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("load_checkpoint: bad magic in " + path);
    Checkpoint ckpt;
    ckpt.version = read_u32(in);
    if (ckpt.version != Checkpoint::kVersion)
        throw std::runtime_error("load_checkpoint: unsupported version " +
                                 std::to_string(ckpt.version));
    const std::uint32_t n_meta = read_u32(in);
    for (std::uint32_t i = 0; i < n_meta; ++i) {
        std::string k = read_string(in);
        std::string v = read_string(in);
        ckpt.meta.emplace_back(std::move(k), std::move(v));
    }
    const std::uint32_t n_arrays = read_u32(in);
    for (std::uint32_t i = 0; i < n_arrays; ++i) {
        Checkpoint::Array a;
        a.name = read_string(in);
        a.rows = read_u32(in);
        a.cols = read_u32(in);
        const std::uint64_t bytes = read_u64(in);
        if (bytes != static_cast<std::uint64_t>(a.rows) * a.cols * 4)
            throw std::runtime_error("load_checkpoint: array size mismatch for " + a.name);
        a.data.resize(static_cast<std::size_t>(bytes / 4));
        in.read(reinterpret_cast<char*>(a.data.data()), static_cast<std::streamsize>(bytes));
        if (!in) throw std::runtime_error("load_checkpoint: truncated array " + a.name);
        ckpt.arrays.push_back(std::move(a));
    }
    return ckpt;
}

Checkpoint checkpoint_from_model(Model<float>& model, const Vocabulary& vocab) {
    Checkpoint ckpt;
    const ModelConfig& cfg = model.config();
    ckpt.set_meta("model.feature_dim", std::to_string(cfg.feature_dim));
    ckpt.set_meta("model.model_dim", std::to_string(cfg.model_dim));
    ckpt.set_meta("model.encoder_layers", std::to_string(cfg.encoder_layers));
    ckpt.set_meta("model.decoder_layers", std::to_string(cfg.decoder_layers));
    ckpt.set_meta("model.heads", std::to_string(cfg.heads));
    ckpt.set_meta("model.ffn_dim", std::to_string(cfg.ffn_dim));
    ckpt.set_meta("model.max_decode_len", std::to_string(cfg.max_decode_len));
    ckpt.set_meta("vocab.size", std::to_string(vocab.size()));
    std::string registry;
    for (const auto& e : model.emb.registry) {
        if (!registry.empty()) registry += ',';
        registry += e.language + ":" + std::to_string(e.lid_global) + ":" +
                    (e.pretrained ? "1" : "0") + ":" + std::to_string(e.table_index);
    }
    ckpt.set_meta("registry", registry);
    for (const auto& lt : model.emb.lang_tables) {
        std::string ids;
        for (int g : lt.local_to_global) {
            if (!ids.empty()) ids += ',';
            ids += std::to_string(g);
        }
        ckpt.set_meta("idmap." + lt.language, ids);
    }
    ckpt.set_meta("encoder_hash", hash_hex(encoder_hash(model)));
    for (ParamTensor<float>* p : model.parameters()) {
        Checkpoint::Array a;
        a.name = p->name;
        a.rows = static_cast<std::uint32_t>(p->value.rows);
        a.cols = static_cast<std::uint32_t>(p->value.cols);
        a.data = p->value.data;
        ckpt.arrays.push_back(std::move(a));
    }
    return ckpt;
}

namespace {

std::size_t meta_size_t(const Checkpoint& ckpt, const std::string& key) {
    const std::string* v = ckpt.find_meta(key);
    if (!v) throw std::runtime_error("checkpoint: missing meta key " + key);
    return static_cast<std::size_t>(std::stoull(*v));
}

}  // namespace

Model<float> model_from_checkpoint(const Checkpoint& ckpt, Vocabulary& vocab) {
    ModelConfig cfg;
    cfg.feature_dim = meta_size_t(ckpt, "model.feature_dim");
    cfg.model_dim = meta_size_t(ckpt, "model.model_dim");
    cfg.encoder_layers = meta_size_t(ckpt, "model.encoder_layers");
    cfg.decoder_layers = meta_size_t(ckpt, "model.decoder_layers");
    cfg.heads = meta_size_t(ckpt, "model.heads");
    cfg.ffn_dim = meta_size_t(ckpt, "model.ffn_dim");
    cfg.max_decode_len = meta_size_t(ckpt, "model.max_decode_len");

    const std::string* registry = ckpt.find_meta("registry");
    if (!registry) throw std::runtime_error("checkpoint: missing registry");

    struct Entry {
        std::string language;
        int lid = -1;
        bool pretrained = false;
        int table_index = -1;
    };
    std::vector<Entry> entries;
    for (const std::string& item : split_csv(*registry)) {
        std::istringstream ss(item);
        Entry e;
        std::string lid, pre, tbl;
        std::getline(ss, e.language, ':');
        std::getline(ss, lid, ':');
        std::getline(ss, pre, ':');
        std::getline(ss, tbl, ':');
        e.lid = std::stoi(lid);
        e.pretrained = pre == "1";
        e.table_index = std::stoi(tbl);
        entries.push_back(std::move(e));
    }

    // append languages registered after the vocabulary file was written
    for (const Entry& e : entries) {
        if (!vocab.has_language(e.language)) {
            const int id = vocab.add_language(e.language);
            if (id != e.lid)
                throw std::runtime_error("checkpoint: language-id mismatch for " + e.language +
                                         ": vocab assigned " + std::to_string(id) +
                                         ", checkpoint has " + std::to_string(e.lid));
        } else if (vocab.lid_id(e.language) != e.lid) {
            throw std::runtime_error("checkpoint: language-id mismatch for " + e.language);
        }
    }
    if (static_cast<std::size_t>(vocab.size()) != meta_size_t(ckpt, "vocab.size"))
        throw std::runtime_error("checkpoint: vocabulary size mismatch");

    Model<float> model(cfg, vocab, /*init_seed=*/0);
    // rebuild the registry exactly as recorded
    model.emb.registry.clear();
    model.emb.lang_tables.clear();
    model.emb.st.value = Matrix<float>(static_cast<std::size_t>(vocab.num_specials()), cfg.model_dim);
    model.emb.st.ensure_grad_shape();
    for (const Entry& e : entries) {
        SplitEmbedding<float>::RegistryEntry re;
        re.language = e.language;
        re.lid_global = e.lid;
        re.pretrained = e.pretrained;
        re.table_index = e.table_index;
        model.emb.registry.push_back(re);
        if (e.table_index < 0) continue;
        const std::string* ids = ckpt.find_meta("idmap." + e.language);
        if (!ids) throw std::runtime_error("checkpoint: missing id map for " + e.language);
        SplitEmbedding<float>::LangTable lt;
        lt.language = e.language;
        for (const std::string& tok : split_csv(*ids)) {
            const int g = std::stoi(tok);
            lt.global_to_local[g] = static_cast<int>(lt.local_to_global.size());
            lt.local_to_global.push_back(g);
        }
        lt.table = ParamTensor<float>("emb.lang." + e.language,
                                      Matrix<float>(lt.local_to_global.size(), cfg.model_dim));
        if (static_cast<std::size_t>(e.table_index) != model.emb.lang_tables.size())
            throw std::runtime_error("checkpoint: non-sequential table index for " + e.language);
        model.emb.lang_tables.push_back(std::move(lt));
    }
    restore_parameters(model, ckpt);
    return model;
}

void restore_parameters(Model<float>& model, const Checkpoint& ckpt) {
    auto params = model.parameters();
    if (params.size() != ckpt.arrays.size())
        throw std::runtime_error("restore_parameters: array count mismatch (" +
                                 std::to_string(params.size()) + " params, " +
                                 std::to_string(ckpt.arrays.size()) + " arrays)");
    for (std::size_t i = 0; i < params.size(); ++i) {
        const Checkpoint::Array& a = ckpt.arrays[i];
        ParamTensor<float>* p = params[i];
        if (a.name != p->name)
            throw std::runtime_error("restore_parameters: name mismatch " + a.name + " vs " +
                                     p->name);
        if (a.rows != p->value.rows || a.cols != p->value.cols)
            shape_error("restore_parameters " + a.name,
                        std::to_string(a.rows) + "x" + std::to_string(a.cols),
                        p->value.shape_str());
        p->value.data = a.data;
        p->ensure_grad_shape();
    }
}

Checkpoint avg_merge(const Checkpoint& before, const Checkpoint& after) {
    Checkpoint merged;
    merged.meta = after.meta;
    for (const Checkpoint::Array& a : after.arrays) {
        const Checkpoint::Array* b = before.find(a.name);
        Checkpoint::Array out = a;
        if (b == nullptr) {
            // spawned in `after` (new language table): taken as-is
        } else if (b->rows == a.rows && b->cols == a.cols) {
            for (std::size_t i = 0; i < out.data.size(); ++i)
                out.data[i] = 0.5f * (b->data[i] + a.data[i]);
        } else if (b->cols == a.cols && b->rows < a.rows) {
            // grown table: average shared rows, keep appended rows from `after`
            for (std::size_t i = 0; i < b->data.size(); ++i)
                out.data[i] = 0.5f * (b->data[i] + a.data[i]);
        } else {
            shape_error("avg_merge " + a.name,
                        std::to_string(b->rows) + "x" + std::to_string(b->cols),
                        std::to_string(a.rows) + "x" + std::to_string(a.cols));
        }
        merged.arrays.push_back(std::move(out));
    }
    for (const Checkpoint::Array& b : before.arrays) {
        if (!after.find(b.name))
            throw std::runtime_error("avg_merge: parameter " + b.name + " missing from after");
    }
    return merged;
}

std::uint64_t encoder_hash(Model<float>& model) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (ParamTensor<float>* p : model.encoder_parameters()) h = hash_matrix(p->value, h);
    return h;
}

}  // namespace lingo
