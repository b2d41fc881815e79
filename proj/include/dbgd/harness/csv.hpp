#pragma once

#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dbgd/core.hpp"
#include "dbgd/solver.hpp"

namespace dbgd::harness {

inline constexpr const char* kTraceHeader =
    "k,f,g,grad_f_sq,grad_g_sq,lambda,d_sq,cos_theta,f_perp_sq,f_par_sq,delta_f,delta_g,potential,degenerate";

/// %.17g, which round-trips every double.
inline std::string format_number(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string format_optional(const std::optional<double>& v) { return v ? format_number(*v) : "NA"; }

inline std::string trace_line(std::size_t k, const TraceRow& r) {
    std::string s = std::to_string(k);
    for (double v : {r.f, r.g, r.grad_f_sq, r.grad_g_sq, r.lambda, r.d_sq}) s += "," + format_number(v);
    s += "," + format_optional(r.cos_theta);
    for (double v : {r.f_perp_sq, r.f_par_sq, r.delta_f, r.delta_g, r.potential}) s += "," + format_number(v);
    s += r.degenerate ? ",1" : ",0";
    return s;
}

/// Quotes a field when it holds a comma, quote or newline.
inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

/// Line-oriented file writer that reports failures as dbgd::Error.
class CsvFile {
   public:
    explicit CsvFile(const std::filesystem::path& path) : path_(path) {
        file_ = std::fopen(path.string().c_str(), "wb");
        if (!file_) throw Error("cannot open '" + path.string() + "' for writing");
    }
    CsvFile(const CsvFile&) = delete;
    CsvFile& operator=(const CsvFile&) = delete;
    ~CsvFile() {
        if (file_) std::fclose(file_);
    }

    void line(const std::string& s) {
        if (std::fputs(s.c_str(), file_) < 0 || std::fputc('\n', file_) == EOF)
            throw Error("write failed on '" + path_.string() + "'");
    }
    void close() {
        if (file_ && std::fclose(file_) != 0) {
            file_ = nullptr;
            throw Error("close failed on '" + path_.string() + "'");
        }
        file_ = nullptr;
    }

   private:
    std::filesystem::path path_;
    std::FILE* file_ = nullptr;
};

/// Streams trace rows to a CSV, keeping every `stride`-th row. The last row
/// of the run is always written; call finish() once the run is over.
class TraceWriter {
   public:
    TraceWriter(const std::filesystem::path& path, std::size_t stride) : file_(path), stride_(stride ? stride : 1) {
        file_.line(kTraceHeader);
    }
    void add(std::size_t k, const TraceRow& row) {
        if (k % stride_ == 0) {
            file_.line(trace_line(k, row));
            pending_.reset();
        } else {
            pending_ = std::make_pair(k, row);
        }
    }
    void finish() {
        if (pending_) file_.line(trace_line(pending_->first, pending_->second));
        pending_.reset();
        file_.close();
    }

   private:
    CsvFile file_;
    std::size_t stride_;
    std::optional<std::pair<std::size_t, TraceRow>> pending_;
};

inline void write_trace(const std::filesystem::path& path, const TraceRecord& trace, std::size_t stride = 1) {
    TraceWriter w(path, stride);
    for (std::size_t k = 0; k < trace.rows.size(); ++k) w.add(k, trace.rows[k]);
    w.finish();
}

}  // namespace dbgd::harness
