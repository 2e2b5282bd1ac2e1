#pragma once

// Benchmark harness. Each workload template runs in three configurations:
// baseline (plain execution), instrumented (store injection on, matching
// off) and reused (matching on against the entries the instrumented runs
// stored). Overhead is instrumented/baseline, speedup is baseline/reused,
// both averaged over a fixed number of trials. Trend checks assert the
// shapes of the resulting curves rather than absolute numbers.

#include <cstdint>
#include <filesystem>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "restore/datagen.hpp"
#include "restore/engine.hpp"

namespace restore {

struct BenchConfig {
    uint64_t synth_rows = 2'000'000;
    uint64_t page_view_rows = 100'000;
    uint64_t users = 10'000;
    uint64_t seed = 42;
    int trials = 3;
    int reducers = 4;
    std::string store_heuristic = "conservative";
};

struct BenchPoint {
    std::string workload;
    double selectivity = 0; // QF only: expected fraction kept
    std::vector<double> baseline_trials, instrumented_trials, reused_trials;
    uint64_t stored_bytes = 0; // injected store output, first instrumented run

    static double avg(const std::vector<double>& v) {
        return v.empty() ? 0
                         : std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
    }
    double baseline() const { return avg(baseline_trials); }
    double instrumented() const { return avg(instrumented_trials); }
    double reused() const { return avg(reused_trials); }
    double overhead() const { return baseline() > 0 ? instrumented() / baseline() : 0; }
    double speedup() const { return reused() > 0 ? baseline() / reused() : 0; }
};

struct TrendCheck {
    std::string curve;
    bool ok = false;
    int inversions = 0;
    std::string detail;
};

// At most one adjacent step may move against the expected direction by more
// than the tolerance.
inline TrendCheck check_trend(const std::string& curve,
                              const std::vector<double>& values, bool non_decreasing,
                              double tol = 0.05, int allowed = 1) {
    TrendCheck t;
    t.curve = curve;
    std::ostringstream detail;
    for (size_t i = 0; i + 1 < values.size(); ++i) {
        double a = values[i], b = values[i + 1];
        bool violated = non_decreasing ? b < a * (1.0 - tol) : b > a * (1.0 + tol);
        if (violated) {
            ++t.inversions;
            detail << (detail.tellp() > 0 ? "; " : "") << "step " << i << ": " << a
                   << " -> " << b;
        }
    }
    t.ok = t.inversions <= allowed;
    t.detail = detail.str();
    return t;
}

struct HeuristicChain {
    std::string workload;
    std::vector<int> points_conservative, points_aggressive, points_all;
    uint64_t bytes_conservative = 0, bytes_aggressive = 0, bytes_all = 0;

    static bool subset(const std::vector<int>& a, const std::vector<int>& b) {
        for (int x : a)
            if (std::find(b.begin(), b.end(), x) == b.end()) return false;
        return true;
    }
    bool points_ok() const {
        return subset(points_conservative, points_aggressive) &&
               subset(points_aggressive, points_all);
    }
    bool bytes_ok() const {
        return bytes_conservative <= bytes_aggressive && bytes_aggressive <= bytes_all;
    }
};

struct Q1Q2Result {
    std::vector<double> cold_trials, warm_trials;
    int warm_jobs = 0;
    bool whole_job_match = false;
    double cold() const { return BenchPoint::avg(cold_trials); }
    double warm() const { return BenchPoint::avg(warm_trials); }
    double speedup() const { return warm() > 0 ? cold() / warm() : 0; }
};

struct BenchReport {
    std::vector<BenchPoint> points;
    std::vector<TrendCheck> trends;
    std::vector<HeuristicChain> chains;
    Q1Q2Result q1q2;
    bool has_q1q2 = false;

    bool ok() const {
        for (const auto& t : trends)
            if (!t.ok) return false;
        for (const auto& c : chains)
            if (!c.points_ok() || !c.bytes_ok()) return false;
        if (has_q1q2 && q1q2.speedup() <= 1.0) return false;
        return true;
    }
};

// ---------------------------------------------------------------------------

namespace detail {

inline std::string field_list(int upto) {
    std::string out;
    for (int i = 1; i <= upto; ++i) {
        if (i > 1) out += ", ";
        out += "field" + std::to_string(i);
    }
    return out;
}

} // namespace detail

inline std::string qp_script(int k, const std::string& data,
                             const std::string& out) {
    std::string s;
    s += "A = load '" + data + "' as (" + detail::field_list(12) + ");\n";
    s += "B = foreach A generate " + detail::field_list(k) + ";\n";
    s += "C = group B by (" + detail::field_list(k) + ");\n";
    s += "D = foreach C generate COUNT($1);\n";
    s += "store D into '" + out + "';\n";
    return s;
}

inline std::string qf_script(int field, const std::string& data,
                             const std::string& out) {
    std::string s;
    s += "A = load '" + data + "' as (" + detail::field_list(12) + ");\n";
    s += "B = filter A by field" + std::to_string(field) + " == 1;\n";
    s += "C = group B by field1;\n";
    s += "D = foreach C generate COUNT($1);\n";
    s += "store D into '" + out + "';\n";
    return s;
}

class BenchRunner {
public:
    BenchRunner(Dfs& dfs, std::filesystem::path work_dir, BenchConfig cfg = {})
        : dfs_(dfs), work_(std::move(work_dir)), cfg_(cfg) {
        std::filesystem::create_directories(work_);
    }

    void ensure_synthetic(const std::string& path = "bench/synth") {
        synth_path_ = path;
        if (!dfs_.exists(path))
            generate_synthetic(dfs_, path,
                               {.rows = cfg_.synth_rows, .seed = cfg_.seed});
    }

    void ensure_page_views(const std::string& pv = "data/page_views",
                           const std::string& users = "data/users") {
        pv_path_ = pv;
        users_path_ = users;
        if (!dfs_.exists(pv))
            generate_page_views(dfs_, pv,
                                {.rows = cfg_.page_view_rows, .users = cfg_.users,
                                 .seed = cfg_.seed});
        if (!dfs_.exists(users)) generate_users(dfs_, users, cfg_.users);
    }

    // One template through baseline, instrumented and reused runs. An
    // uncounted warm-up run first, so every measured run sees the same cache
    // state.
    BenchPoint run_point(const std::string& label, const std::string& script) {
        BenchPoint point;
        point.workload = label;
        wipe_engine_data();
        auto repo_dir = fresh_repo_dir(label);

        {
            Repository repo(dfs_, repo_dir);
            Engine eng(dfs_, repo, phase_config("off", false, false));
            run_once(eng, script, label);
            for (int t = 0; t < cfg_.trials; ++t)
                point.baseline_trials.push_back(run_once(eng, script, label));

            Engine instr(dfs_, repo, phase_config(cfg_.store_heuristic, false, true));
            for (int t = 0; t < cfg_.trials; ++t) {
                auto r = submit_checked(instr, script, label);
                point.instrumented_trials.push_back(r.stats.wall_seconds);
                if (t == 0) point.stored_bytes = injected_bytes(r);
            }

            Engine reuse(dfs_, repo, phase_config("off", true, true));
            for (int t = 0; t < cfg_.trials; ++t)
                point.reused_trials.push_back(run_once(reuse, script, label));
        }
        return point;
    }

    std::vector<BenchPoint> run_qp() {
        ensure_synthetic();
        std::vector<BenchPoint> out;
        for (int k = 1; k <= 5; ++k)
            out.push_back(run_point("qp" + std::to_string(k),
                                    qp_script(k, synth_path_,
                                              "bench/out/qp" + std::to_string(k))));
        return out;
    }

    std::vector<BenchPoint> run_qf() {
        ensure_synthetic();
        std::vector<BenchPoint> out;
        for (int f = 6; f <= 12; ++f) {
            auto p = run_point("qf" + std::to_string(f),
                               qf_script(f, synth_path_,
                                         "bench/out/qf" + std::to_string(f)));
            p.selectivity = synthetic_selectivity(f);
            out.push_back(p);
        }
        return out;
    }

    Q1Q2Result run_q1q2(const std::string& q1, const std::string& q2) {
        ensure_page_views();
        Q1Q2Result res;
        wipe_engine_data();
        {
            Repository repo(dfs_, fresh_repo_dir("q2cold"));
            Engine eng(dfs_, repo, phase_config("off", false, false));
            for (int t = 0; t < cfg_.trials; ++t)
                res.cold_trials.push_back(run_once(eng, q2, "q2 cold"));
        }
        wipe_engine_data();
        {
            Repository repo(dfs_, fresh_repo_dir("q2warm"));
            Engine warm(dfs_, repo, phase_config("aggressive", true, true));
            submit_checked(warm, q1, "q1 warm-up");
            for (int t = 0; t < cfg_.trials; ++t) {
                auto r = submit_checked(warm, q2, "q2 warm");
                res.warm_trials.push_back(r.stats.wall_seconds);
                if (t == 0) {
                    res.warm_jobs = r.jobs_executed;
                    res.whole_job_match = !r.rewrite.entries_used.empty() &&
                                          r.jobs_executed < r.jobs_compiled;
                }
            }
        }
        return res;
    }

    // Point sets and stored bytes for the three storage policies.
    HeuristicChain run_chain(const std::string& label, const std::string& script) {
        HeuristicChain chain;
        chain.workload = label;
        struct Policy {
            const char* name;
            std::vector<int>* points;
            uint64_t* bytes;
        };
        Policy policies[] = {
            {"conservative", &chain.points_conservative, &chain.bytes_conservative},
            {"aggressive", &chain.points_aggressive, &chain.bytes_aggressive},
            {"none", &chain.points_all, &chain.bytes_all},
        };
        for (const auto& pol : policies) {
            wipe_engine_data();
            Repository repo(dfs_, fresh_repo_dir(label + "_" + pol.name));
            Engine eng(dfs_, repo, phase_config(pol.name, false, true));

            std::vector<Diagnostic> diags;
            auto wf = compile_script(script, "probe", diags);
            if (wf) {
                Heuristic h = Heuristic::from_name(pol.name);
                for (const auto& job : wf->jobs)
                    for (int id : enumerate_candidates(job.plan, h))
                        pol.points->push_back(id);
            }
            auto r = submit_checked(eng, script, label + " " + pol.name);
            *pol.bytes = injected_bytes(r);
        }
        return chain;
    }

    // Removes everything a previous configuration left in the engine-owned
    // namespaces so phases cannot see each other's data.
    void wipe_engine_data() {
        for (const auto& path : dfs_.list()) {
            if (path.rfind("restore/", 0) == 0 || path.rfind("tmp/", 0) == 0 ||
                path.rfind("bench/out/", 0) == 0)
                dfs_.remove(path);
        }
    }

private:
    EngineConfig phase_config(const std::string& heuristic, bool reuse, bool admit) {
        EngineConfig cfg;
        cfg.heuristic = heuristic;
        cfg.reuse = reuse;
        cfg.admit = admit;
        cfg.reducers = cfg_.reducers;
        cfg.overwrite = true;
        cfg.evict_after = false;
        return cfg;
    }

    double run_once(Engine& eng, const std::string& script, const std::string& what) {
        return submit_checked(eng, script, what).stats.wall_seconds;
    }

    SubmitReport submit_checked(Engine& eng, const std::string& script,
                                const std::string& what) {
        auto r = eng.submit(script);
        if (!r.ok) {
            std::string msg = "benchmark run failed (" + what + "): " + r.error;
            for (const auto& d : r.diagnostics) msg += "; " + d.to_text();
            throw std::runtime_error(msg);
        }
        return r;
    }

    static uint64_t injected_bytes(const SubmitReport& r) {
        uint64_t total = 0;
        for (const auto& [job_id, rec] : r.injected) {
            for (size_t i = 0; i < r.stats.jobs.size(); ++i) {
                const auto& stats = r.stats.jobs[i].stats;
                if (stats.job_id != job_id) continue;
                auto it = stats.store_bytes.find(rec.store_id);
                if (it != stats.store_bytes.end()) total += it->second;
            }
        }
        return total;
    }

    std::filesystem::path fresh_repo_dir(const std::string& label) {
        auto dir = work_ / ("repo_" + label);
        std::filesystem::remove_all(dir);
        return dir;
    }

    Dfs& dfs_;
    std::filesystem::path work_;
    BenchConfig cfg_;
    std::string synth_path_ = "bench/synth";
    std::string pv_path_ = "data/page_views";
    std::string users_path_ = "data/users";
};

// ---------------------------------------------------------------------------
// Trend evaluation over finished point sets.

inline std::vector<TrendCheck> qp_trends(const std::vector<BenchPoint>& points) {
    std::vector<double> overheads, speedups;
    for (const auto& p : points) {
        overheads.push_back(p.overhead());
        speedups.push_back(p.speedup());
    }
    return {check_trend("qp overhead non-decreasing", overheads, true),
            check_trend("qp speedup non-increasing", speedups, false)};
}

inline std::vector<TrendCheck> qf_trends(std::vector<BenchPoint> points) {
    std::sort(points.begin(), points.end(),
              [](const BenchPoint& a, const BenchPoint& b) {
                  return a.selectivity < b.selectivity;
              });
    std::vector<double> speedups;
    for (const auto& p : points) speedups.push_back(p.speedup());
    return {check_trend("qf speedup non-increasing in selectivity", speedups, false)};
}

// ---------------------------------------------------------------------------
// Rendering

inline std::string render_points_text(const std::vector<BenchPoint>& points) {
    std::ostringstream os;
    os << "workload     baseline  instrumented  reused    overhead  speedup   stored_mb\n";
    char buf[160];
    for (const auto& p : points) {
        std::snprintf(buf, sizeof(buf), "%-12s %-9.3f %-13.3f %-9.3f %-9.3f %-9.3f %.2f\n",
                      p.workload.c_str(), p.baseline(), p.instrumented(), p.reused(),
                      p.overhead(), p.speedup(),
                      double(p.stored_bytes) / (1024.0 * 1024.0));
        os << buf;
    }
    return os.str();
}

inline std::string render_points_csv(const std::vector<BenchPoint>& points) {
    std::ostringstream os;
    os << "workload,trial,baseline,instrumented,reused\n";
    for (const auto& p : points)
        for (size_t t = 0; t < p.baseline_trials.size(); ++t) {
            os << p.workload << "," << t << "," << p.baseline_trials[t] << ",";
            os << (t < p.instrumented_trials.size() ? p.instrumented_trials[t] : 0.0);
            os << "," << (t < p.reused_trials.size() ? p.reused_trials[t] : 0.0) << "\n";
        }
    return os.str();
}

} // namespace restore
