#include "lingo/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace lingo {

std::vector<std::string> split_words(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream ss(text);
    std::string w;
    while (ss >> w) out.push_back(std::move(w));
    return out;
}

int word_edit_distance(const std::vector<std::string>& ref, const std::vector<std::string>& hyp) {
    const std::size_t n = ref.size(), m = hyp.size();
    std::vector<int> prev(m + 1), cur(m + 1);
    for (std::size_t j = 0; j <= m; ++j) prev[j] = static_cast<int>(j);
    for (std::size_t i = 1; i <= n; ++i) {
        cur[0] = static_cast<int>(i);
        for (std::size_t j = 1; j <= m; ++j) {
            const int sub = prev[j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
            cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
        }
        std::swap(prev, cur);
    }
    return prev[m];
}

WerResult wer_detail(const std::string& reference, const std::string& hypothesis) {
    const std::vector<std::string> ref = split_words(reference);
    const std::vector<std::string> hyp = split_words(hypothesis);
    WerResult r;
    if (ref.empty()) {
        if (hyp.empty()) return r;
        r.value = static_cast<double>(hyp.size());
        r.empty_reference = true;
        return r;
    }
    r.value = static_cast<double>(word_edit_distance(ref, hyp)) / static_cast<double>(ref.size());
    return r;
}

double wer(const std::string& reference, const std::string& hypothesis) {
    return wer_detail(reference, hypothesis).value;
}

void CorpusWerAccumulator::add(const std::string& reference, const std::string& hypothesis) {
    const std::vector<std::string> ref = split_words(reference);
    const std::vector<std::string> hyp = split_words(hypothesis);
    if (ref.empty()) {
        if (!hyp.empty()) {
            empty_reference = true;
            edits += static_cast<long long>(hyp.size());
            ref_words += 1;
        }
        return;
    }
    edits += word_edit_distance(ref, hyp);
    ref_words += static_cast<long long>(ref.size());
}

double CorpusWerAccumulator::value() const {
    if (ref_words == 0) return 0.0;
    return static_cast<double>(edits) / static_cast<double>(ref_words);
}

double awer(const std::vector<double>& per_language_wers) {
    if (per_language_wers.empty()) throw std::invalid_argument("awer: no languages");
    double total = 0.0;
    for (double w : per_language_wers) total += w;
    return total / static_cast<double>(per_language_wers.size());
}

double relative_change(double method_awer, double baseline_awer) {
    if (baseline_awer == 0.0) throw std::invalid_argument("relative_change: baseline is zero");
    return (method_awer - baseline_awer) / baseline_awer * 100.0;
}

std::string format_one_decimal(double value) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.1f", value);
    return buf;
}

ConfusionMatrix::ConfusionMatrix(std::vector<std::string> label_order)
    : labels(std::move(label_order)),
      counts(labels.size(), std::vector<long>(labels.size(), 0)) {}

std::size_t ConfusionMatrix::index(const std::string& label) const {
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == label) return i;
    }
    throw std::out_of_range("ConfusionMatrix: unknown label " + label);
}

void ConfusionMatrix::add(const std::string& true_label, const std::string& predicted_label) {
    ++counts[index(true_label)][index(predicted_label)];
}

long ConfusionMatrix::at(const std::string& true_label, const std::string& predicted_label) const {
    return counts[index(true_label)][index(predicted_label)];
}

long ConfusionMatrix::row_sum(const std::string& true_label) const {
    long total = 0;
    for (long c : counts[index(true_label)]) total += c;
    return total;
}

long ConfusionMatrix::total() const {
    long t = 0;
    for (const auto& row : counts) {
        for (long c : row) t += c;
    }
    return t;
}

ConfusionMatrix lid_confusion(const std::vector<std::pair<std::string, std::string>>& true_pred,
                              const std::vector<std::string>& label_order) {
    ConfusionMatrix m(label_order);
    for (const auto& [t, p] : true_pred) m.add(t, p);
    return m;
}

}  // namespace lingo
