#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "lvse/grid.hpp"

namespace lvse::io {

// Shortest decimal text that parses back to the same double.
std::string format_double(double value);
double parse_double(std::string_view text);

// Table whose first column is a string key (usually an ISO timestamp) and
// whose remaining columns are numeric.
struct CsvTable {
    std::string key_name;
    std::vector<std::string> keys;
    std::vector<std::string> columns;
    RealSeries values;

    Eigen::Index column(const std::string& name) const;
};

void write_csv(const std::filesystem::path& path, const CsvTable& table);
CsvTable read_csv(const std::filesystem::path& path);

// Line-oriented writer for mixed-type report files.
class CsvWriter {
public:
    explicit CsvWriter(const std::filesystem::path& path);
    void header(const std::vector<std::string>& names);

    CsvWriter& cell(std::string_view text);
    CsvWriter& cell(double value);
    CsvWriter& cell(long long value);
    CsvWriter& cell(int value) { return cell(static_cast<long long>(value)); }
    CsvWriter& cell(std::size_t value) { return cell(static_cast<long long>(value)); }
    void end_row();

private:
    std::ofstream out_;
    bool first_ = true;
};

void write_json(const std::filesystem::path& path, const nlohmann::json& doc);
nlohmann::json read_json(const std::filesystem::path& path);

// FNV-1a over the canonical JSON dump; stable across platforms.
std::string content_hash(const nlohmann::json& doc);

}  // namespace lvse::io
