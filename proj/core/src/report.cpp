#include "lingo/report.hpp"

#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace lingo {

using nlohmann::json;
using nlohmann::ordered_json;

double EvalReport::find_wer(const std::string& method, const std::string& language,
                            const std::string& setting) const {
    for (const Entry& e : entries) {
        if (e.method == method && e.language == language && e.setting == setting) return e.wer;
    }
    throw std::out_of_range("EvalReport: no entry for " + method + "/" + language + "/" + setting);
}

const EvalReport::AwerEntry* EvalReport::find_awer(const std::string& method,
                                                   const std::string& setting) const {
    for (const AwerEntry& e : awers) {
        if (e.method == method && e.setting == setting) return &e;
    }
    return nullptr;
}

const ConfusionMatrix* EvalReport::find_confusion(const std::string& key) const {
    for (const auto& [k, m] : confusions) {
        if (k == key) return &m;
    }
    return nullptr;
}

void emit_report(const EvalReport& report, const std::string& dir) {
    std::filesystem::create_directories(dir);

    ordered_json j;
    j["entries"] = ordered_json::array();
    for (const auto& e : report.entries) {
        ordered_json je;
        je["method"] = e.method;
        je["language"] = e.language;
        je["setting"] = e.setting;
        je["wer"] = e.wer;
        j["entries"].push_back(je);
    }
    j["awer"] = ordered_json::array();
    for (const auto& a : report.awers) {
        ordered_json ja;
        ja["method"] = a.method;
        ja["setting"] = a.setting;
        ja["awer"] = a.awer;
        if (a.has_relative) {
            ja["relative_pct"] = a.relative_pct;
            ja["baseline"] = a.baseline;
        }
        j["awer"].push_back(ja);
    }
    j["confusion"] = ordered_json::object();
    for (const auto& [key, m] : report.confusions) {
        ordered_json jm;
        jm["labels"] = m.labels;
        jm["counts"] = m.counts;
        j["confusion"][key] = jm;
    }
    j["info"] = ordered_json::object();
    for (const auto& [k, v] : report.info) j["info"][k] = v;
    j["empty_reference_flagged"] = report.empty_reference_flagged;

    {
        std::ofstream out(dir + "/report.json", std::ios::binary);
        if (!out) throw std::runtime_error("emit_report: cannot open " + dir + "/report.json");
        out << j.dump(2) << '\n';
    }

    {
        std::ofstream out(dir + "/report.csv", std::ios::binary);
        if (!out) throw std::runtime_error("emit_report: cannot open " + dir + "/report.csv");
        out << "method,language,setting,wer\n";
        for (const auto& e : report.entries)
            out << e.method << ',' << e.language << ',' << e.setting << ','
                << format_one_decimal(e.wer * 100.0) << '\n';
    }

    for (const auto& [key, m] : report.confusions) {
        std::ofstream out(dir + "/confusion_" + key + ".csv", std::ios::binary);
        if (!out) throw std::runtime_error("emit_report: cannot open confusion_" + key + ".csv");
        out << "true";
        for (const auto& l : m.labels) out << ',' << l;
        out << '\n';
        for (std::size_t i = 0; i < m.labels.size(); ++i) {
            out << m.labels[i];
            for (long c : m.counts[i]) out << ',' << c;
            out << '\n';
        }
    }
}

EvalReport load_report(const std::string& json_path) {
    std::ifstream in(json_path, std::ios::binary);
    if (!in) throw std::runtime_error("load_report: cannot open " + json_path);
    ordered_json j;  // keeps confusion keys in document order for exact round trips
    in >> j;
    EvalReport r;
    for (const auto& je : j.at("entries")) {
        EvalReport::Entry e;
        e.method = je.at("method").get<std::string>();
        e.language = je.at("language").get<std::string>();
        e.setting = je.at("setting").get<std::string>();
        e.wer = je.at("wer").get<double>();
        r.entries.push_back(std::move(e));
    }
    for (const auto& ja : j.at("awer")) {
        EvalReport::AwerEntry a;
        a.method = ja.at("method").get<std::string>();
        a.setting = ja.at("setting").get<std::string>();
        a.awer = ja.at("awer").get<double>();
        if (ja.contains("relative_pct")) {
            a.has_relative = true;
            a.relative_pct = ja.at("relative_pct").get<double>();
            a.baseline = ja.at("baseline").get<std::string>();
        }
        r.awers.push_back(std::move(a));
    }
    for (const auto& [key, jm] : j.at("confusion").items()) {
        ConfusionMatrix m(jm.at("labels").get<std::vector<std::string>>());
        m.counts = jm.at("counts").get<std::vector<std::vector<long>>>();
        r.confusions.emplace_back(key, std::move(m));
    }
    for (const auto& [k, v] : j.at("info").items()) r.info.emplace_back(k, v.get<std::string>());
    r.empty_reference_flagged = j.at("empty_reference_flagged").get<bool>();
    return r;
}

}  // namespace lingo
