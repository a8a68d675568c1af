#pragma once
// CSV output with atomic replace. Rows are buffered to "<path>.tmp" and the
// temp file is renamed into place on finalize, so readers never observe
// partial output. Line 1 is the header row; line 2 is a comment carrying the
// config hash and master seed. All numbers print with %.17g, which
// round-trips doubles and makes reruns byte-comparable.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <string>
#include <vector>

#include "errors.hpp"

namespace langevin {

inline std::string format_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

inline std::string format_hex64(std::uint64_t v) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

// Replace `path` atomically with `text` (temp file + rename).
inline void atomic_write_text(const std::filesystem::path& path, const std::string& text) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw numerical_error("cannot open for writing: " + tmp.string());
        out << text;
        out.flush();
        if (!out) throw numerical_error("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

class CsvWriter {
  public:
    CsvWriter(std::filesystem::path path, const std::vector<std::string>& columns,
              std::uint64_t config_hash, std::uint64_t seed)
        : path_(std::move(path)) {
        std::string header;
        for (std::size_t i = 0; i < columns.size(); ++i) {
            if (i) header += ',';
            header += columns[i];
        }
        buffer_ = header + "\n# config_hash=" + format_hex64(config_hash) +
                  " seed=" + std::to_string(seed) + "\n";
        n_cols_ = columns.size();
    }

    CsvWriter(const CsvWriter&) = delete;
    CsvWriter& operator=(const CsvWriter&) = delete;

    void row(std::initializer_list<double> vals) {
        row(std::vector<double>(vals.begin(), vals.end()));
    }

    void row(const std::vector<double>& vals) {
        if (vals.size() != n_cols_)
            throw std::invalid_argument("CsvWriter: row width " + std::to_string(vals.size()) +
                                        " != header width " + std::to_string(n_cols_));
        std::string line;
        for (std::size_t i = 0; i < vals.size(); ++i) {
            if (i) line += ',';
            line += format_double(vals[i]);
        }
        buffer_ += line;
        buffer_ += '\n';
    }

    // Raw string row for mixed-type tables (caller formats each cell).
    void row_strings(const std::vector<std::string>& cells) {
        if (cells.size() != n_cols_)
            throw std::invalid_argument("CsvWriter: row width mismatch");
        std::string line;
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) line += ',';
            line += cells[i];
        }
        buffer_ += line;
        buffer_ += '\n';
    }

    // Write everything out and rename into place. Must be called explicitly;
    // a destructor that silently writes could hide I/O errors.
    void finalize() {
        if (finalized_) return;
        atomic_write_text(path_, buffer_);
        finalized_ = true;
    }

    const std::filesystem::path& path() const { return path_; }

  private:
    std::filesystem::path path_;
    std::string buffer_;
    std::size_t n_cols_ = 0;
    bool finalized_ = false;
};

} // namespace langevin
