#pragma once

#include <string>
#include <utility>
#include <vector>

#include "lingo/metrics.hpp"

namespace lingo {

// Machine-readable evaluation results: per (method, language, setting) WER,
// per-setting averages with relative change against a named baseline, and the
// language-identification confusion matrices.
struct EvalReport {
    struct Entry {
        std::string method;
        std::string language;
        std::string setting;  // "aware" | "agnostic"
        double wer = 0.0;     // fraction

        bool operator==(const Entry&) const = default;
    };

    struct AwerEntry {
        std::string method;
        std::string setting;
        double awer = 0.0;  // fraction
        bool has_relative = false;
        double relative_pct = 0.0;
        std::string baseline;

        bool operator==(const AwerEntry&) const = default;
    };

    std::vector<Entry> entries;
    std::vector<AwerEntry> awers;
    std::vector<std::pair<std::string, ConfusionMatrix>> confusions;
    std::vector<std::pair<std::string, std::string>> info;
    bool empty_reference_flagged = false;

    bool operator==(const EvalReport&) const = default;

    double find_wer(const std::string& method, const std::string& language,
                    const std::string& setting) const;
    const AwerEntry* find_awer(const std::string& method, const std::string& setting) const;
    const ConfusionMatrix* find_confusion(const std::string& key) const;
};

// Writes report.json (full precision), report.csv (percent, one decimal) and
// confusion_<key>.csv files into the directory.
void emit_report(const EvalReport& report, const std::string& dir);

// Reads back report.json written by emit_report.
EvalReport load_report(const std::string& json_path);

}  // namespace lingo
