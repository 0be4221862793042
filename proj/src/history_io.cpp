#include "basil/history_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include <fmt/format.h>

#include "basil/errors.hpp"

namespace basil {

void TrainHistory::append(const TrainHistory& other) {
    records.insert(records.end(), other.records.begin(), other.records.end());
    events.insert(events.end(), other.events.begin(), other.events.end());
    audit.insert(audit.end(), other.audit.begin(), other.audit.end());
    for (const auto& [id, c] : other.costs) {
        auto& mine = costs[id];
        mine.activations += c.activations;
        mine.models_evaluated += c.models_evaluated;
        mine.models_sent += c.models_sent;
        mine.max_stored = std::max(mine.max_stored, c.max_stored);
    }
}

std::vector<std::pair<std::size_t, double>> accuracy_series(const TrainHistory& h, AccuracyAggregate how) {
    std::map<std::size_t, std::pair<double, std::size_t>> acc;
    for (const auto& r : h.records) {
        if (std::isnan(r.test_acc)) continue;
        auto it = acc.find(r.round);
        if (it == acc.end()) {
            acc[r.round] = {r.test_acc, 1};
        } else if (how == AccuracyAggregate::worst) {
            it->second.first = std::min(it->second.first, r.test_acc);
            ++it->second.second;
        } else {
            it->second.first += r.test_acc;
            ++it->second.second;
        }
    }
    std::vector<std::pair<std::size_t, double>> out;
    for (const auto& [round, v] : acc)
        out.emplace_back(round, how == AccuracyAggregate::worst ? v.first : v.first / static_cast<double>(v.second));
    return out;
}

double final_accuracy(const TrainHistory& h, AccuracyAggregate how) {
    auto s = accuracy_series(h, how);
    return s.empty() ? std::numeric_limits<double>::quiet_NaN() : s.back().second;
}

std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return fmt::format("{}", v);
}

void write_history_csv(std::ostream& out, const TrainHistory& h, HistoryLayout layout) {
    switch (layout) {
        case HistoryLayout::ring: out << "round,node,selected_sender,train_loss,test_acc\n"; break;
        case HistoryLayout::groups: out << "round,inner_round,group,node,selected_sender,train_loss,test_acc\n"; break;
        case HistoryLayout::graph: out << "round,node,train_loss,test_acc\n"; break;
    }
    for (const auto& r : h.records) {
        std::string acc = std::isnan(r.test_acc) ? "" : format_number(r.test_acc);
        switch (layout) {
            case HistoryLayout::ring:
                out << r.round << ',' << r.node << ',' << r.selected_sender << ',' << format_number(r.train_loss)
                    << ',' << acc << '\n';
                break;
            case HistoryLayout::groups:
                out << r.round << ',' << r.inner << ',' << r.group << ',' << r.node << ',' << r.selected_sender << ','
                    << format_number(r.train_loss) << ',' << acc << '\n';
                break;
            case HistoryLayout::graph:
                out << r.round << ',' << r.node << ',' << format_number(r.train_loss) << ',' << acc << '\n';
                break;
        }
    }
}

void write_series_csv(std::ostream& out, const std::vector<std::pair<std::size_t, double>>& series,
                      const std::string& metric) {
    out << "round," << metric << '\n';
    for (const auto& [round, v] : series) out << round << ',' << format_number(v) << '\n';
}

void write_audit_csv(std::ostream& out, const TrainHistory& h) {
    out << "round,stage,group,node,selected_sender,selected_malicious,selected_loss,min_loss\n";
    for (const auto& a : h.audit)
        out << a.round << ',' << a.stage << ',' << a.group << ',' << a.node << ',' << a.selected_sender << ','
            << (a.selected_malicious ? 1 : 0) << ',' << format_number(a.selected_loss) << ','
            << format_number(a.min_loss) << '\n';
}

nlohmann::json to_json(const TrainHistory& h) {
    nlohmann::json j;
    j["scheme"] = h.scheme;
    j["metadata"] = h.metadata;
    auto& recs = j["records"] = nlohmann::json::array();
    for (const auto& r : h.records) {
        nlohmann::json x{{"round", r.round}, {"node", r.node}, {"selected_sender", r.selected_sender},
                         {"train_loss", format_number(r.train_loss)}, {"losses", nlohmann::json::array()}};
        if (r.group >= 0) x["group"] = r.group;
        if (r.inner > 0) x["inner_round"] = r.inner;
        if (!std::isnan(r.test_acc)) x["test_acc"] = r.test_acc;
        for (double l : r.losses) x["losses"].push_back(format_number(l));
        recs.push_back(std::move(x));
    }
    auto& ev = j["events"] = nlohmann::json::array();
    for (const auto& e : h.events)
        ev.push_back({{"round", e.round}, {"node", e.node}, {"kind", e.kind}, {"detail", e.detail}});
    auto& costs = j["costs"] = nlohmann::json::object();
    for (const auto& [id, c] : h.costs)
        costs[std::to_string(id)] = {{"activations", c.activations},
                                     {"models_evaluated", c.models_evaluated},
                                     {"models_sent", c.models_sent},
                                     {"max_stored", c.max_stored}};
    return j;
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out << content;
    if (!out) throw Error("failed writing " + path.string());
}

}  // namespace basil
