// Acceptance gate. Each criterion runs as its own invocation and prints one
// line: "criterion N: PASS" or "criterion N: FAIL (reason)". Criteria cover
// end-to-end answer stability under reuse, matcher soundness against an
// exhaustive oracle, measured reuse payoff, heuristic behaviour, repository
// policy semantics, statistics identities and benchmark curve shapes.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "restore/bench.hpp"
#include "restore/engine.hpp"
#include "support/env.hpp"
#include "support/gen.hpp"
#include "support/oracle.hpp"

using namespace restore;

namespace {

struct Fail : std::runtime_error {
    explicit Fail(const std::string& msg) : std::runtime_error(msg) {}
};

void require(bool cond, const std::string& msg) {
    if (!cond) throw Fail(msg);
}

template <typename T>
std::string str(const T& v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

EngineConfig engine_config(const std::string& heuristic, bool reuse, bool admit) {
    EngineConfig cfg;
    cfg.heuristic = heuristic;
    cfg.reuse = reuse;
    cfg.admit = admit;
    cfg.reducers = 2;
    cfg.overwrite = true;
    return cfg;
}

SubmitReport submit_ok(Engine& eng, const std::string& script, const std::string& what) {
    auto r = eng.submit(script);
    if (!r.ok) {
        std::string msg = what + " failed: " + r.error;
        for (const auto& d : r.diagnostics) msg += "; " + d.to_text();
        throw Fail(msg);
    }
    return r;
}

std::vector<std::string> oracle_sink(const std::string& script, Dfs& dfs,
                                     const std::string& sink) {
    auto out = testsup::eval_script_text(script, dfs);
    auto lines = out.at(sink);
    std::sort(lines.begin(), lines.end());
    return lines;
}

const char* kQ1 =
    "A = load 'data/page_views' as (user, timestamp, est_revenue, page_info, page_links);\n"
    "B = foreach A generate user, est_revenue;\n"
    "alpha = load 'data/users' using (name, phone, address, city);\n"
    "beta = foreach alpha generate name;\n"
    "C = join beta by name, B by user;\n"
    "store C into 'out/q1';\n";

const char* kQ2 =
    "A = load 'data/page_views' as (user, timestamp, est_revenue, page_info, page_links);\n"
    "B = foreach A generate user, est_revenue;\n"
    "alpha = load 'data/users' using (name, phone, address, city);\n"
    "beta = foreach alpha generate name;\n"
    "C = join beta by name, B by user;\n"
    "D = group C by name;\n"
    "E = foreach D generate group, SUM(C.est_revenue);\n"
    "store E into 'out/q2';\n";

// --------------------------------------------------------------------------
// 1. Answers are identical with reuse off, with a cold repository and on a
//    warm resubmission, across 50 random scripts sharing one repository.

void criterion1() {
    Dfs dfs(testsup::scratch_dir("acc1"));
    testsup::write_script_tables(dfs, 10'000, 4'000);
    Repository repo(dfs, dfs.root() / "_repo");
    Engine plain(dfs, repo, engine_config("off", false, false));
    Engine reusing(dfs, repo, engine_config("aggressive", true, true));

    int produced = 0;
    for (unsigned seed = 1; produced < 50 && seed < 200; ++seed) {
        std::mt19937 rng(31000u + seed);
        std::string sink = "acc/out/s" + std::to_string(seed);
        testsup::GeneratedScript script;
        try {
            script = testsup::random_script(rng, sink);
        } catch (const testsup::OracleError&) {
            continue;
        }
        ++produced;

        std::string base_text = script.text;
        auto pos = base_text.find("'" + sink + "'");
        require(pos != std::string::npos, "sink literal not found in script");
        base_text.replace(pos, sink.size() + 2, "'" + sink + "_base'");

        auto expected = oracle_sink(script.text, dfs, sink);
        submit_ok(plain, base_text, "baseline for seed " + str(seed));
        auto base = dfs.read_lines_sorted(sink + "_base");
        require(base == expected,
                "baseline output disagrees with the interpreter on seed " + str(seed) +
                    "\nscript:\n" + script.text);

        submit_ok(reusing, script.text, "cold run for seed " + str(seed));
        require(dfs.read_lines_sorted(sink) == expected,
                "cold reuse run changed the answer on seed " + str(seed) +
                    "\nscript:\n" + script.text);

        submit_ok(reusing, script.text, "warm run for seed " + str(seed));
        require(dfs.read_lines_sorted(sink) == expected,
                "warm resubmission changed the answer on seed " + str(seed) +
                    "\nscript:\n" + script.text);
    }
    require(produced == 50, "only generated " + str(produced) + " scripts");
}

// --------------------------------------------------------------------------
// 2. The greedy traversal agrees with an exhaustive containment search on
//    derived, mutated and independent plan pairs, and every match it reports
//    survives structural verification.

void criterion2() {
    int tried = 0, matched = 0, derived_pairs = 0;
    for (unsigned seed = 0; tried < 200 && seed < 600; ++seed) {
        std::mt19937 rng(52000u + seed);
        PhysicalPlan input, stored;
        bool derived_unmutated = false;
        try {
            input = testsup::random_plan(rng);
            auto ops = testsup::matchable_ops(input);
            if (ops.empty()) continue;
            int target = ops[testsup::below(rng, ops.size())];
            stored = testsup::ancestor_subplan(input, target, "repo/acc2");
            switch (seed % 3) {
            case 0:
                derived_unmutated = true;
                break;
            case 1:
                testsup::mutate_plan(stored, rng);
                break;
            default: {
                std::mt19937 other(90000u + seed);
                PhysicalPlan q = testsup::random_plan(other);
                auto qops = testsup::matchable_ops(q);
                if (qops.empty()) continue;
                stored = testsup::ancestor_subplan(
                    q, qops[testsup::below(other, qops.size())], "repo/acc2");
                break;
            }
            }
        } catch (const testsup::OracleError&) {
            continue;
        }
        ++tried;
        if (derived_unmutated) ++derived_pairs;

        auto m = pairwise_plan_traversal(input, stored);
        auto bf = testsup::brute_force_match(input, stored);
        if (m.has_value() != bf.has_value())
            throw Fail("traversal and exhaustive search disagree on seed " + str(seed) +
                       " (traversal=" + (m ? "match" : "miss") +
                       ", exhaustive=" + (bf ? "match" : "miss") + ")\ninput:\n" +
                       plan_to_text(input) + "stored:\n" + plan_to_text(stored));
        if (m) {
            ++matched;
            auto violation = testsup::validate_match(input, stored, m->mapping);
            if (violation)
                throw Fail("false positive on seed " + str(seed) + ": " + *violation);
        }
        if (derived_unmutated && !m)
            throw Fail("derived sub-plan failed to match on seed " + str(seed) +
                       "\ninput:\n" + plan_to_text(input) + "stored:\n" +
                       plan_to_text(stored));
    }
    require(tried == 200, "only assembled " + str(tried) + " plan pairs");
    require(derived_pairs >= 50, "too few derived pairs: " + str(derived_pairs));
    require(matched >= derived_pairs, "match count lost derived pairs");
}

// --------------------------------------------------------------------------
// 3. After one query stored its join, a second query over the same data skips
//    that whole job and finishes measurably faster, with identical answers.

void criterion3() {
    Dfs dfs(testsup::scratch_dir("acc3"));
    generate_page_views(dfs, "data/page_views", {.rows = 100'000, .users = 10'000});
    generate_users(dfs, "data/users", 10'000);

    std::vector<double> cold_times, warm_times;
    std::vector<std::string> cold_lines;
    {
        Repository repo(dfs, dfs.root() / "_repo_cold");
        Engine cold(dfs, repo, engine_config("off", false, false));
        submit_ok(cold, kQ2, "cold warm-up");
        for (int t = 0; t < 3; ++t)
            cold_times.push_back(submit_ok(cold, kQ2, "cold trial").stats.wall_seconds);
        cold_lines = dfs.read_lines_sorted("out/q2");
    }
    {
        Repository repo(dfs, dfs.root() / "_repo_warm");
        Engine warm(dfs, repo, engine_config("aggressive", true, true));
        submit_ok(warm, kQ1, "q1 stocking run");
        for (int t = 0; t < 3; ++t) {
            auto r = submit_ok(warm, kQ2, "warm trial");
            warm_times.push_back(r.stats.wall_seconds);
            require(r.jobs_compiled == 2,
                    "expected 2 compiled jobs, got " + str(r.jobs_compiled));
            require(r.jobs_executed == 1,
                    "warm trial " + str(t) + " executed " + str(r.jobs_executed) +
                        " jobs instead of 1");
            require(!r.rewrite.entries_used.empty(), "warm trial reused no entries");
            int elided = 0;
            for (const auto& jr : r.rewrite.jobs) elided += jr.elided ? 1 : 0;
            require(elided == 1,
                    "expected exactly one elided job, saw " + str(elided));
        }
        require(dfs.read_lines_sorted("out/q2") == cold_lines,
                "warm answer differs from cold answer");
    }
    double cold_avg = BenchPoint::avg(cold_times);
    double warm_avg = BenchPoint::avg(warm_times);
    std::cout << "  cold avg " << cold_avg << "s, warm avg " << warm_avg << "s\n";
    require(warm_avg < cold_avg,
            "no speedup: cold " + str(cold_avg) + "s vs warm " + str(warm_avg) + "s");
}

// --------------------------------------------------------------------------
// 4. With the conservative policy the join query stores exactly its two
//    row-shrinking projections, both are admitted, and resubmission executes
//    just load-load-join-store.

void criterion4() {
    Dfs dfs(testsup::scratch_dir("acc4"));
    generate_page_views(dfs, "data/page_views", {.rows = 20'000, .users = 2'000});
    generate_users(dfs, "data/users", 2'000);
    Repository repo(dfs, dfs.root() / "_repo");
    Engine eng(dfs, repo, engine_config("conservative", true, true));

    auto first = submit_ok(eng, kQ1, "first q1");
    require(first.injected.size() == 2,
            "expected 2 injected stores, got " + str(first.injected.size()));
    for (const auto& [job_id, rec] : first.injected) {
        bool accepted = false;
        for (const auto& a : first.admitted)
            if (a.path == rec.path) accepted = a.accepted;
        require(accepted, "injected store " + rec.path + " was not admitted");
    }

    auto second = submit_ok(eng, kQ1, "resubmitted q1");
    require(!second.rewrite.entries_used.empty(), "resubmission reused nothing");
    require(second.jobs_executed == 1, "q1 is a single job");
    std::multiset<std::string> kinds;
    for (const auto& jr : second.rewrite.jobs) {
        require(jr.ops_after == 4, "rewritten job has " + str(jr.ops_after) +
                                       " operators, expected 4");
    }
    // Inspect the executed plan through a fresh compile + rewrite to see the
    // exact operator kinds the engine ran.
    std::vector<Diagnostic> diags;
    auto wf = compile_script(kQ1, "probe", diags);
    require(wf.has_value(), "probe compile failed");
    auto snap = repo.match_snapshot();
    rewrite_workflow(*wf, snap.views);
    require(wf->jobs.size() == 1, "probe workflow should stay one job");
    for (const auto& op : wf->jobs[0].plan.ops) kinds.insert(op_kind_name(op.kind));
    std::multiset<std::string> want{"load", "load", "join", "store"};
    if (kinds != want) {
        std::string got;
        for (const auto& k : kinds) got += k + " ";
        throw Fail("rewritten plan is [" + got + "], expected load load join store");
    }
}

// --------------------------------------------------------------------------
// 5. Across every workload template, the three storage policies pick nested
//    point sets and store monotonically growing bytes.

void criterion5() {
    Dfs dfs(testsup::scratch_dir("acc5"));
    BenchConfig cfg;
    cfg.synth_rows = 200'000;
    cfg.page_view_rows = 20'000;
    cfg.users = 2'000;
    cfg.trials = 1;
    cfg.reducers = 2;
    BenchRunner runner(dfs, dfs.root() / "_bench", cfg);
    runner.ensure_synthetic();
    runner.ensure_page_views();

    std::vector<std::pair<std::string, std::string>> workloads;
    for (int k = 1; k <= 5; ++k)
        workloads.emplace_back("qp" + std::to_string(k),
                               qp_script(k, "bench/synth", "bench/out/qp"));
    for (int f = 6; f <= 12; ++f)
        workloads.emplace_back("qf" + std::to_string(f),
                               qf_script(f, "bench/synth", "bench/out/qf"));
    workloads.emplace_back("q1", kQ1);
    workloads.emplace_back("q2", kQ2);

    for (const auto& [label, script] : workloads) {
        HeuristicChain chain = runner.run_chain(label, script);
        require(chain.points_ok(),
                label + ": heuristic point sets are not nested subsets");
        require(chain.bytes_ok(),
                label + ": stored bytes not monotone (" +
                    str(chain.bytes_conservative) + ", " + str(chain.bytes_aggressive) +
                    ", " + str(chain.bytes_all) + ")");
        require(!chain.points_all.empty(), label + ": no candidates at all");
        std::cout << "  " << label << ": points " << chain.points_conservative.size()
                  << "/" << chain.points_aggressive.size() << "/"
                  << chain.points_all.size() << ", bytes " << chain.bytes_conservative
                  << "/" << chain.bytes_aggressive << "/" << chain.bytes_all << "\n";
    }
}

// --------------------------------------------------------------------------
// 6. Full-size benchmark curves keep their shapes: storing more fields costs
//    monotonically more, reuse pays off less as reuse gets less selective.

void criterion6() {
    Dfs dfs(testsup::scratch_dir("acc6"));
    BenchConfig cfg; // 2M synthetic rows, 3 trials
    BenchRunner runner(dfs, dfs.root() / "_bench", cfg);

    auto qp = runner.run_qp();
    auto qf = runner.run_qf();
    std::cout << render_points_text(qp) << render_points_text(qf);

    std::vector<TrendCheck> trends = qp_trends(qp);
    for (auto& t : qf_trends(qf)) trends.push_back(t);
    for (const auto& t : trends) {
        std::cout << "  " << t.curve << ": " << (t.ok ? "ok" : "violated") << " ("
                  << t.inversions << " inversions" << (t.detail.empty() ? "" : "; ")
                  << t.detail << ")\n";
    }
    for (const auto& t : trends)
        require(t.ok, t.curve + " violated: " + t.detail);
    for (const auto& p : qp) {
        require(p.baseline() > 0 && p.instrumented() > 0 && p.reused() > 0,
                p.workload + " has an empty timing");
        require(p.stored_bytes > 0, p.workload + " stored nothing when instrumented");
    }
}

// --------------------------------------------------------------------------
// 7. At full size, the synthetic table's field selectivities stay within
//    three binomial standard deviations of their nominal values.

void criterion7() {
    Dfs dfs(testsup::scratch_dir("acc7"));
    const uint64_t n = 2'000'000;
    generate_synthetic(dfs, "bench/synth", {.rows = n});

    uint64_t hits[13] = {0};
    for (const auto& [part, bytes] : dfs.part_files("bench/synth")) {
        std::ifstream in(part);
        std::string line;
        while (std::getline(in, line)) {
            auto f = from_line(line);
            require(f.size() == 12, "row with " + str(f.size()) + " fields");
            for (int field = 6; field <= 12; ++field)
                if (f[static_cast<size_t>(field - 1)] == "1") ++hits[field];
        }
    }
    for (int field = 6; field <= 12; ++field) {
        double p = synthetic_selectivity(field);
        double mean = double(n) * p;
        double sigma = std::sqrt(double(n) * p * (1 - p));
        double got = double(hits[field]);
        std::cout << "  field" << field << ": " << got / double(n) << " vs nominal "
                  << p << "\n";
        require(std::abs(got - mean) <= 3 * sigma,
                "field" + str(field) + " selectivity " + str(got / double(n)) +
                    " deviates more than 3 sigma from " + str(p));
    }
}

// --------------------------------------------------------------------------
// 8. Repository policy semantics: shrink-only admission, idle-window and
//    stale-input eviction, and a scan order that is a linear extension of
//    plan containment on randomly stocked repositories.

void criterion8() {
    Dfs dfs(testsup::scratch_dir("acc8"));
    {
        auto w = dfs.create("d/in", schema_from_text("a,b"), 1);
        auto p = w.open_part(0);
        p.append("1\tx");
        p.append("2\ty");
        w.commit();
    }
    auto make_plan = [](const std::string& in, const std::string& pred,
                        const std::string& out) {
        PhysicalPlan p;
        OpParams lp;
        lp.path = in;
        lp.schema = schema_from_text("a,b");
        int l = p.add(OpKind::Load, lp);
        OpParams fp;
        fp.predicate = predicate_from_text(pred);
        int f = p.add(OpKind::Filter, fp);
        p.add_edge(l, f, 0);
        OpParams sp;
        sp.path = out;
        int s = p.add(OpKind::Store, sp);
        p.add_edge(f, s, 0);
        return p;
    };
    auto make_candidate = [](const PhysicalPlan& plan, const std::string& out,
                             uint64_t in_bytes, uint64_t out_bytes) {
        AdmitCandidate c;
        c.plan = plan;
        c.output_path = out;
        auto schemas = infer_schemas(plan);
        if (!schemas.ok()) throw Fail("candidate schema inference failed");
        int store = plan.ids_of(OpKind::Store)[0];
        c.stored_schema = schemas.by_op.at(plan.inputs(store)[0]);
        c.t_load = 0.5;
        c.t_ops = 5.0;
        c.t_sort = 0.1;
        c.t_store = 0.2;
        c.t_elapsed = 5.8;
        c.input_bytes = in_bytes;
        c.output_bytes = out_bytes;
        return c;
    };
    auto make_ds = [&dfs](const std::string& path) {
        auto w = dfs.create(path, schema_from_text("a,b"), 1);
        auto p = w.open_part(0);
        p.append("1\tx");
        w.commit();
    };

    { // Rule: only shrinking datasets whose read-back beats recompute stay.
        Repository repo(dfs, dfs.root() / "_repo_rule1");
        make_ds("restore/r1/a");
        auto rej = repo.admit(make_candidate(make_plan("d/in", "a<2", "restore/r1/a"),
                                             "restore/r1/a", 100, 100));
        require(!rej.accepted && !dfs.exists("restore/r1/a"),
                "non-shrinking dataset was admitted or kept");
        repo.note_load_throughput(1000, 1.0);
        make_ds("restore/r1/b");
        auto slow = repo.admit(make_candidate(make_plan("d/in", "a<2", "restore/r1/b"),
                                              "restore/r1/b", 1'000'000, 100'000));
        require(!slow.accepted, "uneconomical read-back was admitted");
        make_ds("restore/r1/c");
        auto ok = repo.admit(make_candidate(make_plan("d/in", "a<2", "restore/r1/c"),
                                            "restore/r1/c", 1'000'000, 1'000));
        require(ok.accepted, "profitable dataset was rejected: " + ok.reason);
    }

    { // Rule: idle entries age out; a zero window disables aging.
        int64_t now = 0;
        Repository repo(dfs, dfs.root() / "_repo_rule3", [&now] { return now; });
        make_ds("restore/r3/a");
        auto a = repo.admit(make_candidate(make_plan("d/in", "a<2", "restore/r3/a"),
                                           "restore/r3/a", 1'000'000, 1'000));
        make_ds("restore/r3/b");
        auto b = repo.admit(make_candidate(make_plan("d/in", "a<3", "restore/r3/b"),
                                           "restore/r3/b", 1'000'000, 1'000));
        require(a.accepted && b.accepted, "setup admission failed");
        now = 10'000'000;
        repo.record_reuse(b.id);
        now = 70'000'000;
        require(repo.evict(0).empty(), "window 0 must disable idle eviction");
        auto ev = repo.evict(60'000'000);
        require(ev.size() == 1 && ev[0].id == a.id,
                "idle eviction should drop exactly the unused entry");
        require(repo.find(b.id) != nullptr, "active entry evicted");
    }

    { // Rule: entries over vanished or changed inputs go, cascading.
        Repository repo(dfs, dfs.root() / "_repo_rule4");
        make_ds("d/in4");
        make_ds("restore/r4/base");
        auto base = repo.admit(make_candidate(make_plan("d/in4", "a<2", "restore/r4/base"),
                                              "restore/r4/base", 1'000'000, 1'000));
        make_ds("restore/r4/derived");
        auto derived = repo.admit(
            make_candidate(make_plan("restore/r4/base", "a<1", "restore/r4/derived"),
                           "restore/r4/derived", 500'000, 500));
        require(base.accepted && derived.accepted, "setup admission failed");
        dfs.remove("d/in4");
        auto ev = repo.evict(0);
        require(ev.size() == 2 && repo.size() == 0,
                "cascading input eviction dropped " + str(ev.size()) +
                    " entries instead of 2");
    }

    // Scan order: on randomly stocked repositories of up to 20 entries, no
    // later entry may strictly contain an earlier one.
    {
        auto wa = dfs.create("rnd/a", schema_from_text("x,y,z"), 1);
        wa.open_part(0).append("1\t2\t3");
        wa.commit();
        auto wb = dfs.create("rnd/b", schema_from_text("k,v"), 1);
        wb.open_part(0).append("k1\t1");
        wb.commit();
        auto wc = dfs.create("rnd/c", schema_from_text("p,q,r,s"), 1);
        wc.open_part(0).append("1\t2\t3\t4");
        wc.commit();
    }
    for (unsigned trial = 0; trial < 6; ++trial) {
        Repository repo(dfs, dfs.root() / ("_repo_ord" + std::to_string(trial)));
        std::mt19937 rng(7700 + trial);
        int stored = 0;
        for (int k = 0; k < 40 && stored < 20; ++k) {
            try {
                PhysicalPlan p = testsup::random_plan(rng);
                auto ops = testsup::matchable_ops(p);
                if (ops.empty()) continue;
                std::string path = "restore/ord" + std::to_string(trial) + "/e" +
                                   std::to_string(k);
                PhysicalPlan sub = testsup::ancestor_subplan(
                    p, ops[testsup::below(rng, ops.size())], path);
                make_ds(path);
                AdmitCandidate c;
                c.plan = sub;
                c.output_path = path;
                auto schemas = infer_schemas(sub);
                if (!schemas.ok()) continue;
                int store = sub.ids_of(OpKind::Store)[0];
                c.stored_schema = schemas.by_op.at(sub.inputs(store)[0]);
                c.t_ops = 5.0 + 0.25 * k;
                c.t_elapsed = c.recompute_cost();
                c.input_bytes = 1'000'000;
                c.output_bytes = 1000 + 13u * static_cast<unsigned>(k);
                if (repo.admit(c).accepted) ++stored;
            } catch (const testsup::OracleError&) {
                continue;
            }
        }
        auto scan = repo.ordered_scan();
        require(scan.size() >= 8, "trial " + str(trial) + " stocked only " +
                                      str(scan.size()) + " entries");
        for (size_t i = 0; i < scan.size(); ++i) {
            for (size_t j = i + 1; j < scan.size(); ++j) {
                bool later = testsup::brute_force_match(scan[j]->plan, scan[i]->plan)
                                 .has_value();
                bool earlier = testsup::brute_force_match(scan[i]->plan, scan[j]->plan)
                                   .has_value();
                require(!(later && !earlier),
                        "trial " + str(trial) + ": entry at position " + str(j) +
                            " strictly contains the entry at position " + str(i));
            }
        }
    }
}

// --------------------------------------------------------------------------
// 9. Statistics identities: the reported chain totals equal an independent
//    recomputation from per-job elapsed times, and per-job phase sums never
//    exceed elapsed time by more than 25%.

void criterion9() {
    Dfs dfs(testsup::scratch_dir("acc9"));
    testsup::write_script_tables(dfs, 20'000, 8'000);

    const char* script =
        "A = load 'rnd/t1' as (a, b, c, d);\n"
        "G = group A by a;\n"
        "H = foreach G generate group, COUNT(A);\n"
        "I = group H by count;\n"
        "J = foreach I generate group, COUNT(H);\n"
        "store J into 'out/chain';\n"
        "T = load 'rnd/t2' as (k, v, w);\n"
        "U = distinct T;\n"
        "store U into 'out/flat';\n";
    std::vector<Diagnostic> diags;
    auto wf = compile_script(script, "acc9wf", diags);
    require(wf.has_value(), "compile failed");
    require(wf->jobs.size() == 3, "expected 3 jobs, got " + str(wf->jobs.size()));

    Executor ex(dfs, {.reducers = 2, .task_threads = 1});
    auto ws = ex.execute_workflow(*wf);
    require(ws.ok(), "workflow failed");

    // Independent recomputation of the chain totals.
    std::map<std::string, double> expect;
    std::function<double(int)> total = [&](int idx) -> double {
        const std::string& id = wf->jobs[static_cast<size_t>(idx)].id;
        auto it = expect.find(id);
        if (it != expect.end()) return it->second;
        double dep_max = 0;
        for (int p : wf->deps_of(idx)) dep_max = std::max(dep_max, total(p));
        double v = ws.jobs[static_cast<size_t>(idx)].stats.t_elapsed + dep_max;
        expect[id] = v;
        return v;
    };
    for (size_t i = 0; i < wf->jobs.size(); ++i) total(static_cast<int>(i));

    require(expect.size() == ws.t_total.size(), "job total maps differ in size");
    for (const auto& [id, v] : expect) {
        auto it = ws.t_total.find(id);
        require(it != ws.t_total.end(), "missing total for job " + id);
        require(it->second == v, "total for " + id + " is " + str(it->second) +
                                     ", recomputed " + str(v));
    }
    double max_total = 0;
    for (const auto& [id, v] : ws.t_total) max_total = std::max(max_total, v);
    require(ws.critical_path == max_total, "critical path is not the max total");

    for (size_t i = 0; i < ws.jobs.size(); ++i) {
        const auto& stats = ws.jobs[i].stats;
        require(stats.t_elapsed > 0, "job " + stats.job_id + " has no elapsed time");
        double phases = stats.et();
        std::cout << "  " << stats.job_id << ": phases " << phases << "s, elapsed "
                  << stats.t_elapsed << "s\n";
        require(phases <= 1.25 * stats.t_elapsed,
                "job " + stats.job_id + " phase sum " + str(phases) +
                    " exceeds 1.25x elapsed " + str(stats.t_elapsed));
        require(phases > 0, "job " + stats.job_id + " recorded no phase time");
    }
}

// --------------------------------------------------------------------------
// 10. Storing every intermediate output does not change any benchmark
//     answer: instrumented and plain runs produce identical sinks.

void criterion10() {
    Dfs dfs(testsup::scratch_dir("acc10"));
    generate_synthetic(dfs, "bench/synth", {.rows = 120'000});
    generate_page_views(dfs, "data/page_views", {.rows = 20'000, .users = 2'000});
    generate_users(dfs, "data/users", 2'000);

    std::vector<std::pair<std::string, std::string>> workloads{
        {"qp2", qp_script(2, "bench/synth", "out/acc10_qp2")},
        {"qf8", qf_script(8, "bench/synth", "out/acc10_qf8")},
        {"q1", kQ1},
        {"q2", kQ2},
    };
    std::map<std::string, std::string> sink_of{{"qp2", "out/acc10_qp2"},
                                               {"qf8", "out/acc10_qf8"},
                                               {"q1", "out/q1"},
                                               {"q2", "out/q2"}};

    for (const auto& [label, script] : workloads) {
        Repository plain_repo(dfs, dfs.root() / ("_plain_" + label));
        Engine plain(dfs, plain_repo, engine_config("off", false, false));
        submit_ok(plain, script, label + " plain");
        auto baseline = dfs.read_lines_sorted(sink_of[label]);
        require(!baseline.empty(), label + " produced an empty sink");

        Repository inst_repo(dfs, dfs.root() / ("_inst_" + label));
        Engine inst(dfs, inst_repo, engine_config("none", false, true));
        auto r = submit_ok(inst, script, label + " instrumented");
        require(!r.injected.empty(), label + " instrumented run injected nothing");
        require(dfs.read_lines_sorted(sink_of[label]) == baseline,
                label + ": instrumented run changed the answer");

        // Clear stored state so the next workload starts clean.
        for (const auto& path : dfs.list())
            if (path.rfind("restore/", 0) == 0 || path.rfind("tmp/", 0) == 0)
                dfs.remove(path);
    }
}

} // namespace

int main(int argc, char** argv) {
    if (argc != 2) {
        std::cerr << "usage: " << argv[0] << " <criterion 1-10>\n";
        return 2;
    }
    int n = std::atoi(argv[1]);
    std::function<void()> checks[] = {criterion1, criterion2, criterion3, criterion4,
                                      criterion5, criterion6, criterion7, criterion8,
                                      criterion9, criterion10};
    if (n < 1 || n > 10) {
        std::cerr << "criterion must be 1..10\n";
        return 2;
    }
    try {
        checks[n - 1]();
    } catch (const std::exception& e) {
        std::cout << "criterion " << n << ": FAIL (" << e.what() << ")" << std::endl;
        return 1;
    }
    std::cout << "criterion " << n << ": PASS" << std::endl;
    return 0;
}
