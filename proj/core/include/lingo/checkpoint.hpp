#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "lingo/model.hpp"
#include "lingo/vocab.hpp"

namespace lingo {

// On-disk model snapshot: a small key-value text header (model geometry,
// language registry, table id maps, encoder hash) followed by named float32
// arrays. The binary layout is little-endian and round-trips bit-exactly.
struct Checkpoint {
    static constexpr std::uint32_t kVersion = 1;

    struct Array {
        std::string name;
        std::uint32_t rows = 0;
        std::uint32_t cols = 0;
        std::vector<float> data;
    };

    std::uint32_t version = kVersion;
    std::vector<std::pair<std::string, std::string>> meta;  // ordered
    std::vector<Array> arrays;

    const std::string* find_meta(const std::string& key) const;
    const Array* find(const std::string& name) const;
    void set_meta(const std::string& key, const std::string& value);
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Snapshot of the current model (all parameters, registry, id maps).
Checkpoint checkpoint_from_model(Model<float>& model, const Vocabulary& vocab);

// Rebuilds a model from a checkpoint. The vocabulary must contain at least
// the pretrained languages; languages registered after data generation are
// appended here (their ids are validated against the registry snapshot).
Model<float> model_from_checkpoint(const Checkpoint& ckpt, Vocabulary& vocab);

// Copies checkpoint arrays into an existing model with an identical registry.
void restore_parameters(Model<float>& model, const Checkpoint& ckpt);

// Element-wise mean of shared parameters. Arrays only present in `after`
// (spawned language tables) and rows grown in `after` (appended language-id
// embeddings) are taken from `after` unaveraged. Any other name or shape
// mismatch is an error.
Checkpoint avg_merge(const Checkpoint& before, const Checkpoint& after);

// FNV-1a over the encoder parameter bytes in declaration order.
std::uint64_t encoder_hash(Model<float>& model);

}  // namespace lingo
