#pragma once

// Flat record model shared by the whole engine. A record is a vector of
// string fields; nested bags (produced by group/cogroup) travel as a single
// field holding their text form "{(f1,f2),(f1,f2)}". Tab and newline are
// reserved as record separators; comma/parens/braces are reserved inside bag
// fields.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace restore {

using Row = std::vector<std::string>;

inline std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    size_t start = 0;
    while (true) {
        size_t pos = s.find(sep, start);
        if (pos == std::string_view::npos) {
            out.emplace_back(s.substr(start));
            break;
        }
        out.emplace_back(s.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

inline std::string join(const std::vector<std::string>& v, char sep) {
    std::string out;
    size_t total = v.empty() ? 0 : v.size() - 1;
    for (const auto& f : v) total += f.size();
    out.reserve(total);
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) out.push_back(sep);
        out += v[i];
    }
    return out;
}

inline std::string to_line(const Row& r) { return join(r, '\t'); }

inline Row from_line(std::string_view line) { return split(line, '\t'); }

// Bag text codec. A bag is a list of flat tuples; tuples never nest.
inline std::string bag_to_text(const std::vector<Row>& tuples) {
    std::string out = "{";
    for (size_t i = 0; i < tuples.size(); ++i) {
        if (i) out.push_back(',');
        out.push_back('(');
        out += join(tuples[i], ',');
        out.push_back(')');
    }
    out.push_back('}');
    return out;
}

inline std::optional<std::vector<Row>> bag_from_text(std::string_view s) {
    if (s.size() < 2 || s.front() != '{' || s.back() != '}') return std::nullopt;
    std::vector<Row> tuples;
    size_t i = 1;
    const size_t end = s.size() - 1;
    while (i < end) {
        if (s[i] == ',') { ++i; continue; }
        if (s[i] != '(') return std::nullopt;
        size_t close = s.find(')', i);
        if (close == std::string_view::npos || close > end) return std::nullopt;
        tuples.push_back(split(s.substr(i + 1, close - i - 1), ','));
        i = close + 1;
    }
    return tuples;
}

// Number of tuples in a bag without materializing them.
inline std::optional<size_t> bag_text_count(std::string_view s) {
    if (s.size() < 2 || s.front() != '{' || s.back() != '}') return std::nullopt;
    size_t n = 0;
    for (char c : s)
        if (c == '(') ++n;
    return n;
}

// Composite keys joined with an unprintable separator so multi-field keys
// compare as a unit.
inline constexpr char kKeySep = '\x01';

inline std::string composite_key(const Row& fields, const std::vector<int>& idx) {
    std::string key;
    for (size_t i = 0; i < idx.size(); ++i) {
        if (i) key.push_back(kKeySep);
        key += fields[static_cast<size_t>(idx[i])];
    }
    return key;
}

// Display form of a group key: single field verbatim, composite as a tuple.
inline std::string key_display(const std::string& key) {
    if (key.find(kKeySep) == std::string::npos) return key;
    std::string out = "(";
    for (char c : key) out += (c == kKeySep) ? ',' : c;
    out.push_back(')');
    return out;
}

inline std::optional<double> parse_number(std::string_view s) {
    if (s.empty()) return std::nullopt;
    double v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

inline std::string format_number(double v) {
    if (std::isfinite(v) && v == std::floor(v) && std::fabs(v) < 9.007199254740992e15) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%lld", static_cast<long long>(v));
        return buf;
    }
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

inline uint64_t fnv1a(std::string_view s, uint64_t seed = 1469598103934665603ull) {
    uint64_t h = seed;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

} // namespace restore
