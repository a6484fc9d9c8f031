#include "lvse/io.hpp"

#include <charconv>
#include <cstdio>
#include <sstream>

#include "lvse/errors.hpp"

namespace lvse::io {

std::string format_double(double value) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, res.ptr);
}

double parse_double(std::string_view text) {
    double value = 0.0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
    if (res.ec != std::errc{} || res.ptr != text.data() + text.size())
        throw Error("cannot parse number '" + std::string(text) + "'");
    return value;
}

Eigen::Index CsvTable::column(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
        if (columns[i] == name) return static_cast<Eigen::Index>(i);
    throw Error("missing CSV column '" + name + "'");
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
}

}  // namespace

void write_csv(const std::filesystem::path& path, const CsvTable& table) {
    if (static_cast<std::size_t>(table.values.rows()) != table.keys.size() ||
        static_cast<std::size_t>(table.values.cols()) != table.columns.size())
        throw Error("CSV table shape does not match its labels");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << table.key_name;
    for (const auto& c : table.columns) out << ',' << c;
    out << '\n';
    for (std::size_t r = 0; r < table.keys.size(); ++r) {
        out << table.keys[r];
        for (Eigen::Index c = 0; c < table.values.cols(); ++c)
            out << ',' << format_double(table.values(static_cast<Eigen::Index>(r), c));
        out << '\n';
    }
}

CsvTable read_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw Error("empty CSV " + path.string());
    CsvTable table;
    const auto head = split_fields(line);
    table.key_name = std::string(head.front());
    for (std::size_t i = 1; i < head.size(); ++i) table.columns.emplace_back(head[i]);

    std::vector<double> flat;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto fields = split_fields(line);
        if (fields.size() != head.size())
            throw Error("ragged row in " + path.string() + ": " + line.substr(0, 40));
        table.keys.emplace_back(fields.front());
        for (std::size_t i = 1; i < fields.size(); ++i) flat.push_back(parse_double(fields[i]));
    }
    const auto rows = static_cast<Eigen::Index>(table.keys.size());
    const auto cols = static_cast<Eigen::Index>(table.columns.size());
    table.values = Eigen::Map<RealSeries>(flat.data(), rows, cols);
    return table;
}

CsvWriter::CsvWriter(const std::filesystem::path& path) : out_(path, std::ios::binary) {
    if (!out_) throw Error("cannot write " + path.string());
}

void CsvWriter::header(const std::vector<std::string>& names) {
    for (const auto& n : names) cell(n);
    end_row();
}

CsvWriter& CsvWriter::cell(std::string_view text) {
    if (!first_) out_ << ',';
    out_ << text;
    first_ = false;
    return *this;
}

CsvWriter& CsvWriter::cell(double value) { return cell(std::string_view(format_double(value))); }

CsvWriter& CsvWriter::cell(long long value) { return cell(std::string_view(std::to_string(value))); }

void CsvWriter::end_row() {
    out_ << '\n';
    first_ = true;
}

void write_json(const std::filesystem::path& path, const nlohmann::json& doc) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << doc.dump(2) << '\n';
}

nlohmann::json read_json(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read " + path.string());
    return nlohmann::json::parse(in);
}

std::string content_hash(const nlohmann::json& doc) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : doc.dump()) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace lvse::io
