#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "gemsim/errors.hpp"

namespace gemsim {

// CSV writer with a leading '#' header block recording the resolved run
// configuration. Doubles go through to_chars (shortest round-trip form) so
// repeated seeded runs are byte-identical.
class CsvWriter {
public:
    explicit CsvWriter(const std::string& path) : out_(path, std::ios::trunc) {
        if (!out_) throw io_error("cannot open output file: " + path);
    }

    void comment(const std::string& line) { out_ << "# " << line << "\n"; }

    void columns(const std::vector<std::string>& names) {
        for (std::size_t i = 0; i < names.size(); ++i) {
            if (i) out_ << ',';
            out_ << names[i];
        }
        out_ << '\n';
    }

    static std::string format(double v) {
        char buf[32];
        const auto res = std::to_chars(buf, buf + sizeof(buf), v);
        return std::string(buf, res.ptr);
    }
    static std::string format(std::int64_t v) {
        char buf[24];
        const auto res = std::to_chars(buf, buf + sizeof(buf), v);
        return std::string(buf, res.ptr);
    }

    template <typename... Ts>
    void row(Ts... values) {
        bool first = true;
        auto emit = [&](auto v) {
            if (!first) out_ << ',';
            first = false;
            using T = decltype(v);
            if constexpr (std::is_same_v<T, const char*> || std::is_same_v<T, std::string>) {
                out_ << v;
            } else if constexpr (std::is_integral_v<T>) {
                out_ << format(static_cast<std::int64_t>(v));
            } else {
                out_ << format(static_cast<double>(v));
            }
        };
        (emit(values), ...);
        out_ << '\n';
    }

    void close() {
        out_.flush();
        if (!out_) throw io_error("write failed while closing CSV");
        out_.close();
    }

private:
    std::ofstream out_;
};

} // namespace gemsim
