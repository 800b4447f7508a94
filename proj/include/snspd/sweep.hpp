// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace snspd {

/// Tabular sweep output: named columns, one row per grid point. The CSV
/// rendering is the authoritative on-disk form.
struct SweepResult {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;

    void add_row(std::vector<double> row) {
        if (row.size() != columns.size())
            throw std::invalid_argument("sweep row width mismatch");
        rows.push_back(std::move(row));
    }

    std::size_t column_index(const std::string& name) const {
        for (std::size_t i = 0; i < columns.size(); ++i)
            if (columns[i] == name) return i;
        throw std::out_of_range("no sweep column named " + name);
    }

    std::string to_csv() const {
        std::ostringstream out;
        out << std::setprecision(12);
        for (std::size_t i = 0; i < columns.size(); ++i)
            out << (i ? "," : "") << columns[i];
        out << "\n";
        for (const auto& row : rows) {
            for (std::size_t i = 0; i < row.size(); ++i)
                out << (i ? "," : "") << row[i];
            out << "\n";
        }
        return out.str();
    }
};

/// Atomic file write: temp file in the same directory, then rename.
inline void write_file_atomic(const std::filesystem::path& path,
                              const std::string& content) {
    namespace fs = std::filesystem;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out << content;
    }
    fs::rename(tmp, path);
}

}  // namespace snspd
