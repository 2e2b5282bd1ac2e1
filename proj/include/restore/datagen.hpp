#pragma once

// Deterministic dataset generators for the benchmark workloads. Every part
// file gets its own PRNG stream derived from (seed, part), so output bytes
// depend only on the spec, never on scheduling. Draws use explicit rejection
// sampling instead of std::uniform_int_distribution because the latter's
// algorithm is implementation-defined.

#include <cstdint>
#include <random>
#include <string>

#include "restore/dfs.hpp"
#include "restore/record.hpp"

namespace restore {

namespace detail {

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

class PartRng {
public:
    PartRng(uint64_t seed, uint64_t part)
        : gen_(splitmix64(seed * 0x9e3779b97f4a7c15ULL + part + 1)) {}

    uint64_t below(uint64_t n) {
        uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t v;
        do {
            v = gen_();
        } while (v >= limit);
        return v % n;
    }

    void lowercase(std::string& out, size_t len) {
        for (size_t i = 0; i < len; ++i)
            out.push_back(static_cast<char>('a' + below(26)));
    }

private:
    std::mt19937_64 gen_;
};

} // namespace detail

// ---------------------------------------------------------------------------
// Synthetic 12-field table: five random 20-char strings plus seven integer
// fields whose equality selectivity against value "1" spans 0.5% to 60%.

inline const int kSyntheticCardinalities[6] = {200, 100, 20, 10, 5, 2};

inline SchemaDef synthetic_schema() {
    SchemaDef s;
    for (int i = 1; i <= 12; ++i) s.push_back({"field" + std::to_string(i), false, {}});
    return s;
}

// Expected fraction of rows where fieldN == "1".
inline double synthetic_selectivity(int field) {
    if (field >= 6 && field <= 11) return 1.0 / kSyntheticCardinalities[field - 6];
    if (field == 12) return 0.6;
    throw std::invalid_argument("selectivity defined for fields 6..12");
}

struct SyntheticSpec {
    uint64_t rows = 2'000'000;
    uint64_t part_rows = 250'000;
    uint64_t seed = 42;
};

inline void generate_synthetic(Dfs& dfs, const std::string& path,
                               const SyntheticSpec& spec, bool overwrite = false) {
    if (spec.rows == 0 || spec.part_rows == 0)
        throw std::invalid_argument("row counts must be positive");
    uint64_t parts = (spec.rows + spec.part_rows - 1) / spec.part_rows;
    auto w = dfs.create(path, synthetic_schema(), static_cast<int>(parts), overwrite);
    for (uint64_t part = 0; part < parts; ++part) {
        detail::PartRng rng(spec.seed, part);
        uint64_t n = std::min(spec.part_rows, spec.rows - part * spec.part_rows);
        auto pw = w.open_part(static_cast<int>(part));
        std::string line;
        for (uint64_t i = 0; i < n; ++i) {
            line.clear();
            for (int f = 0; f < 5; ++f) {
                if (f) line.push_back('\t');
                rng.lowercase(line, 20);
            }
            for (int f = 0; f < 6; ++f) {
                line.push_back('\t');
                line += std::to_string(1 + rng.below(kSyntheticCardinalities[f]));
            }
            line.push_back('\t');
            line += (rng.below(10) < 6) ? "1" : "2";
            pw.append(line);
        }
    }
    w.commit();
}

// ---------------------------------------------------------------------------
// Page-view log plus a user directory whose names overlap half the log's
// user values, so joining them is never empty.

inline SchemaDef page_views_schema() {
    return schema_from_text("user,timestamp,est_revenue,page_info,page_links");
}

inline SchemaDef users_schema() { return schema_from_text("name,phone,address,city"); }

struct PageViewsSpec {
    uint64_t rows = 100'000;
    uint64_t users = 10'000;
    uint64_t part_rows = 100'000;
    uint64_t seed = 42;
};

inline void generate_page_views(Dfs& dfs, const std::string& path,
                                const PageViewsSpec& spec, bool overwrite = false) {
    if (spec.rows == 0 || spec.part_rows == 0 || spec.users == 0)
        throw std::invalid_argument("row counts must be positive");
    uint64_t parts = (spec.rows + spec.part_rows - 1) / spec.part_rows;
    auto w = dfs.create(path, page_views_schema(), static_cast<int>(parts), overwrite);
    for (uint64_t part = 0; part < parts; ++part) {
        detail::PartRng rng(spec.seed, part);
        uint64_t n = std::min(spec.part_rows, spec.rows - part * spec.part_rows);
        auto pw = w.open_part(static_cast<int>(part));
        std::string line;
        for (uint64_t i = 0; i < n; ++i) {
            line.clear();
            line += "u" + std::to_string(rng.below(2 * spec.users));
            line += "\t" + std::to_string(rng.below(1'000'000));
            uint64_t cents = rng.below(100'000);
            line += "\t" + std::to_string(cents / 100) + "." +
                    (cents % 100 < 10 ? "0" : "") + std::to_string(cents % 100);
            line += "\t";
            rng.lowercase(line, 8);
            line += "\t";
            rng.lowercase(line, 8);
            pw.append(line);
        }
    }
    w.commit();
}

inline void generate_users(Dfs& dfs, const std::string& path, uint64_t users,
                           bool overwrite = false, uint64_t part_rows = 100'000,
                           uint64_t seed = 42) {
    if (part_rows == 0) throw std::invalid_argument("part_rows must be positive");
    uint64_t parts = users == 0 ? 1 : (users + part_rows - 1) / part_rows;
    auto w = dfs.create(path, users_schema(), static_cast<int>(parts), overwrite);
    for (uint64_t part = 0; part < parts; ++part) {
        detail::PartRng rng(seed, part);
        uint64_t begin = part * part_rows;
        uint64_t end = std::min(users, begin + part_rows);
        auto pw = w.open_part(static_cast<int>(part));
        std::string line;
        for (uint64_t i = begin; i < end; ++i) {
            line = "u" + std::to_string(i);
            line += "\t555";
            for (int d = 0; d < 7; ++d)
                line.push_back(static_cast<char>('0' + rng.below(10)));
            line += "\t";
            rng.lowercase(line, 12);
            line += "\t";
            rng.lowercase(line, 8);
            pw.append(line);
        }
    }
    w.commit();
}

} // namespace restore
