#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "basil/history.hpp"

namespace basil {

enum class HistoryLayout { ring, groups, graph };

// Shortest round-trip decimal for a double; "nan"/"inf"/"-inf" otherwise.
std::string format_number(double v);

void write_history_csv(std::ostream& out, const TrainHistory& h, HistoryLayout layout);
void write_series_csv(std::ostream& out, const std::vector<std::pair<std::size_t, double>>& series,
                      const std::string& metric);
void write_audit_csv(std::ostream& out, const TrainHistory& h);

nlohmann::json to_json(const TrainHistory& h);

void write_text_file(const std::filesystem::path& path, const std::string& content);

}  // namespace basil
