#pragma once

#include <string>
#include <vector>

namespace lingo {

std::vector<std::string> split_words(const std::string& text);

// Word-level Levenshtein distance, unit costs.
int word_edit_distance(const std::vector<std::string>& ref, const std::vector<std::string>& hyp);

struct WerResult {
    double value = 0.0;
    bool empty_reference = false;  // flagged: nonempty hypothesis scored against empty reference
};

// Word error rate as a fraction (may exceed 1). An empty reference with a
// nonempty hypothesis scores hypothesis-word-count / 1 and is flagged.
WerResult wer_detail(const std::string& reference, const std::string& hypothesis);
double wer(const std::string& reference, const std::string& hypothesis);

// Test-set WER: summed edit distance over summed reference words.
struct CorpusWerAccumulator {
    long long edits = 0;
    long long ref_words = 0;
    bool empty_reference = false;

    void add(const std::string& reference, const std::string& hypothesis);
    double value() const;
};

// Unweighted mean over per-language WERs.
double awer(const std::vector<double>& per_language_wers);

// (method - baseline) / baseline * 100; baseline must be positive.
double relative_change(double method_awer, double baseline_awer);

// one decimal, for percent rendering
std::string format_one_decimal(double value);

struct ConfusionMatrix {
    std::vector<std::string> labels;
    std::vector<std::vector<long>> counts;  // [true][predicted]

    ConfusionMatrix() = default;
    explicit ConfusionMatrix(std::vector<std::string> label_order);

    void add(const std::string& true_label, const std::string& predicted_label);
    long at(const std::string& true_label, const std::string& predicted_label) const;
    long row_sum(const std::string& true_label) const;
    long total() const;

    bool operator==(const ConfusionMatrix& other) const = default;

private:
    std::size_t index(const std::string& label) const;
};

ConfusionMatrix lid_confusion(const std::vector<std::pair<std::string, std::string>>& true_pred,
                              const std::vector<std::string>& label_order);

}  // namespace lingo
