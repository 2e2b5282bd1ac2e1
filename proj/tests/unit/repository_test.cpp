#include "doctest.h"
#include "restore/repository.hpp"
#include "support/env.hpp"
#include "support/gen.hpp"
#include "support/oracle.hpp"

#include <algorithm>

using namespace restore;

namespace {

void make_ds(Dfs& dfs, const std::string& path, const std::vector<std::string>& lines,
             const std::string& schema = "a,b", bool overwrite = false) {
    auto w = dfs.create(path, schema_from_text(schema), 1, overwrite);
    auto p = w.open_part(0);
    for (const auto& l : lines) p.append(l);
    w.commit();
}

PhysicalPlan filter_plan(const std::string& in, const std::string& pred,
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
}

PhysicalPlan filter_project_plan(const std::string& in, const std::string& pred,
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
    OpParams pj;
    pj.columns = {"a"};
    int pr = p.add(OpKind::Project, pj);
    p.add_edge(f, pr, 0);
    OpParams sp;
    sp.path = out;
    int s = p.add(OpKind::Store, sp);
    p.add_edge(pr, s, 0);
    return p;
}

AdmitCandidate candidate(const PhysicalPlan& plan, const std::string& out,
                         uint64_t in_bytes = 1'000'000, uint64_t out_bytes = 1000,
                         double ops_cost = 5.0) {
    AdmitCandidate c;
    c.plan = plan;
    c.output_path = out;
    auto schemas = infer_schemas(plan);
    REQUIRE(schemas.ok());
    int store = plan.ids_of(OpKind::Store)[0];
    c.stored_schema = schemas.by_op.at(plan.inputs(store)[0]);
    c.t_load = 0.5;
    c.t_ops = ops_cost;
    c.t_sort = 0.1;
    c.t_store = 0.2;
    c.t_elapsed = c.t_load + c.t_ops + c.t_sort + c.t_store;
    c.input_bytes = in_bytes;
    c.output_bytes = out_bytes;
    return c;
}

struct FakeClock {
    int64_t now_us = 0;
    Repository::Clock fn() {
        return [this] { return now_us; };
    }
};

} // namespace

TEST_CASE("admission keeps only shrinking, cheap-to-read datasets") {
    Dfs dfs(testsup::scratch_dir("repo_admit"));
    make_ds(dfs, "d/in", {"1\tx", "2\ty", "3\tz"});
    Repository repo(dfs, dfs.root() / "_repo");

    SUBCASE("output at least as large as input is rejected and deleted") {
        make_ds(dfs, "restore/w/j/op3", {"1\tx"});
        auto res = repo.admit(candidate(filter_plan("d/in", "a<2", "restore/w/j/op3"),
                                        "restore/w/j/op3", 100, 100));
        CHECK(!res.accepted);
        CHECK(res.reason.find("not smaller") != std::string::npos);
        CHECK(!dfs.exists("restore/w/j/op3"));
        CHECK(repo.size() == 0);
    }

    SUBCASE("read-back that costs more than recomputing is rejected") {
        repo.note_load_throughput(1000, 1.0); // 1 KB/s disk
        make_ds(dfs, "restore/w/j/op4", {"1\tx"});
        auto res = repo.admit(candidate(filter_plan("d/in", "a<2", "restore/w/j/op4"),
                                        "restore/w/j/op4", 1'000'000, 100'000, 5.0));
        CHECK(!res.accepted);
        CHECK(res.reason.find("recomputing") != std::string::npos);
        CHECK(!dfs.exists("restore/w/j/op4"));
    }

    SUBCASE("rejected datasets outside engine paths are left alone") {
        make_ds(dfs, "out/user_owned", {"1\tx"});
        auto res = repo.admit(candidate(filter_plan("d/in", "a<2", "out/user_owned"),
                                        "out/user_owned", 100, 100));
        CHECK(!res.accepted);
        CHECK(dfs.exists("out/user_owned"));
    }

    SUBCASE("a shrinking dataset with a worthwhile read is admitted") {
        make_ds(dfs, "restore/w/j/op5", {"1\tx"});
        auto res = repo.admit(candidate(filter_plan("d/in", "a<2", "restore/w/j/op5"),
                                        "restore/w/j/op5"));
        CHECK(res.accepted);
        CHECK(res.id >= 1);
        CHECK(repo.size() == 1);
        auto e = repo.find(res.id);
        REQUIRE(e);
        CHECK(e->output_path == "restore/w/j/op5");
        CHECK(e->inputs.size() == 1);
        CHECK(e->inputs[0].path == "d/in");
        CHECK(e->recompute_cost() == doctest::Approx(5.8));
    }

    SUBCASE("missing input data blocks admission") {
        make_ds(dfs, "restore/w/j/op6", {"1\tx"});
        auto res = repo.admit(candidate(filter_plan("d/gone", "a<2", "restore/w/j/op6"),
                                        "restore/w/j/op6"));
        CHECK(!res.accepted);
        CHECK(res.reason.find("disappeared") != std::string::npos);
    }
}

TEST_CASE("equivalent plans over identical inputs are stored once") {
    Dfs dfs(testsup::scratch_dir("repo_dup"));
    make_ds(dfs, "d/in", {"1\tx", "2\ty"});
    Repository repo(dfs, dfs.root() / "_repo");

    make_ds(dfs, "restore/w/a/op1", {"1\tx"});
    auto first = repo.admit(
        candidate(filter_plan("d/in", "a<2", "restore/w/a/op1"), "restore/w/a/op1"));
    REQUIRE(first.accepted);

    make_ds(dfs, "restore/w/b/op1", {"1\tx"});
    auto second = repo.admit(
        candidate(filter_plan("d/in", "a<2", "restore/w/b/op1"), "restore/w/b/op1"));
    CHECK(!second.accepted);
    CHECK(second.id == first.id);
    CHECK(second.reason.find("already stored") != std::string::npos);
    CHECK(repo.size() == 1);
    CHECK(!dfs.exists("restore/w/b/op1"));
    CHECK(dfs.exists("restore/w/a/op1"));
}

TEST_CASE("the same plan over changed inputs replaces the stale entry") {
    Dfs dfs(testsup::scratch_dir("repo_stale"));
    make_ds(dfs, "d/in", {"1\tx", "2\ty"});
    Repository repo(dfs, dfs.root() / "_repo");

    make_ds(dfs, "restore/w/a/op1", {"1\tx"});
    auto first = repo.admit(
        candidate(filter_plan("d/in", "a<2", "restore/w/a/op1"), "restore/w/a/op1"));
    REQUIRE(first.accepted);

    make_ds(dfs, "d/in", {"5\tp", "6\tq", "7\tr"}, "a,b", true); // new contents
    make_ds(dfs, "restore/w/c/op1", {"5\tp"});
    auto second = repo.admit(
        candidate(filter_plan("d/in", "a<2", "restore/w/c/op1"), "restore/w/c/op1"));
    CHECK(second.accepted);
    CHECK(second.id != first.id);
    CHECK(repo.size() == 1);
    CHECK(!repo.find(first.id));
    CHECK(!dfs.exists("restore/w/a/op1"));
    CHECK(dfs.exists("restore/w/c/op1"));
}

TEST_CASE("scan order sees subsuming plans before their fragments") {
    Dfs dfs(testsup::scratch_dir("repo_order"));
    make_ds(dfs, "d/in", {"1\tx", "2\ty"});
    Repository repo(dfs, dfs.root() / "_repo");

    // Admit the smaller fragment first; the larger plan must still outrank it.
    make_ds(dfs, "restore/w/a/small", {"1\tx"});
    auto small = repo.admit(
        candidate(filter_plan("d/in", "a<2", "restore/w/a/small"), "restore/w/a/small"));
    REQUIRE(small.accepted);
    make_ds(dfs, "restore/w/a/big", {"1"});
    auto big = repo.admit(candidate(filter_project_plan("d/in", "a<2", "restore/w/a/big"),
                                    "restore/w/a/big"));
    REQUIRE(big.accepted);

    auto scan = repo.ordered_scan();
    REQUIRE(scan.size() == 2);
    CHECK(scan[0]->id == big.id);
    CHECK(scan[1]->id == small.id);
}

TEST_CASE("incomparable neighbours rank by how much they shrink the data") {
    Dfs dfs(testsup::scratch_dir("repo_rank"));
    make_ds(dfs, "d/one", {"1\tx"});
    make_ds(dfs, "d/two", {"1\tx"});
    Repository repo(dfs, dfs.root() / "_repo");

    make_ds(dfs, "restore/w/a/weak", {"1\tx"});
    auto weak = repo.admit(candidate(filter_plan("d/one", "a<2", "restore/w/a/weak"),
                                     "restore/w/a/weak", 1'000'000, 100'000));
    REQUIRE(weak.accepted);
    make_ds(dfs, "restore/w/a/strong", {"1\tx"});
    auto strong = repo.admit(candidate(filter_plan("d/two", "a<2", "restore/w/a/strong"),
                                       "restore/w/a/strong", 1'000'000, 1000));
    REQUIRE(strong.accepted);

    auto scan = repo.ordered_scan();
    REQUIRE(scan.size() == 2);
    CHECK(scan[0]->id == strong.id);
    CHECK(scan[1]->id == weak.id);
}

TEST_CASE("scan order is a linear extension of plan containment") {
    Dfs dfs(testsup::scratch_dir("repo_linext"));
    make_ds(dfs, "rnd/a", {"1\t2\t3", "4\t5\t6"}, "x,y,z");
    make_ds(dfs, "rnd/b", {"k1\t1", "k2\t2"}, "k,v");
    make_ds(dfs, "rnd/c", {"1\t2\t3\t4"}, "p,q,r,s");

    for (unsigned trial = 0; trial < 4; ++trial) {
        Repository repo(dfs, dfs.root() / ("_repo" + std::to_string(trial)));
        std::mt19937 rng(500 + trial);
        int stored = 0;
        for (int k = 0; k < 24 && stored < 12; ++k) {
            PhysicalPlan sub;
            try {
                PhysicalPlan p = testsup::random_plan(rng);
                auto ops = testsup::matchable_ops(p);
                if (ops.empty()) continue;
                std::string path = "restore/lin" + std::to_string(trial) + "/e" +
                                   std::to_string(k);
                sub = testsup::ancestor_subplan(p, ops[testsup::below(rng, ops.size())],
                                                path);
                make_ds(dfs, path, {"r"}, "c0");
                auto res = repo.admit(candidate(sub, path, 1'000'000,
                                                1000 + 17u * (unsigned)k,
                                                5.0 + 0.25 * k));
                if (res.accepted) ++stored;
            } catch (const testsup::OracleError&) {
                continue;
            }
        }
        auto scan = repo.ordered_scan();
        CAPTURE(trial);
        CHECK(scan.size() >= 6);
        for (size_t i = 0; i < scan.size(); ++i) {
            for (size_t j = i + 1; j < scan.size(); ++j) {
                bool later_subsumes =
                    testsup::brute_force_match(scan[j]->plan, scan[i]->plan).has_value();
                bool earlier_subsumes =
                    testsup::brute_force_match(scan[i]->plan, scan[j]->plan).has_value();
                CAPTURE(i);
                CAPTURE(j);
                // A later entry must never strictly contain an earlier one.
                CHECK(!(later_subsumes && !earlier_subsumes));
            }
        }
    }
}

TEST_CASE("idle entries age out of the repository") {
    Dfs dfs(testsup::scratch_dir("repo_idle"));
    make_ds(dfs, "d/in", {"1\tx", "2\ty"});
    FakeClock clock;
    Repository repo(dfs, dfs.root() / "_repo", clock.fn());

    make_ds(dfs, "restore/w/a/e1", {"1\tx"});
    auto e1 = repo.admit(
        candidate(filter_plan("d/in", "a<2", "restore/w/a/e1"), "restore/w/a/e1"));
    make_ds(dfs, "restore/w/a/e2", {"2\ty"});
    auto e2 = repo.admit(
        candidate(filter_plan("d/in", "a<3", "restore/w/a/e2"), "restore/w/a/e2"));
    REQUIRE(e1.accepted);
    REQUIRE(e2.accepted);

    clock.now_us = 10'000'000;
    repo.record_reuse(e2.id);

    clock.now_us = 70'000'000;
    SUBCASE("a window of zero disables idle eviction") {
        CHECK(repo.evict(0).empty());
        CHECK(repo.size() == 2);
    }
    SUBCASE("entries idle beyond the window are dropped, active ones stay") {
        auto evicted = repo.evict(60'000'000);
        REQUIRE(evicted.size() == 1);
        CHECK(evicted[0].id == e1.id);
        CHECK(evicted[0].reason.find("idle") != std::string::npos);
        CHECK(repo.size() == 1);
        CHECK(!dfs.exists("restore/w/a/e1"));
        CHECK(dfs.exists("restore/w/a/e2"));
        CHECK(repo.find(e2.id));
    }
    SUBCASE("reuse refreshes the activity clock") {
        repo.record_reuse(e1.id); // at 70s
        clock.now_us = 120'000'000;
        auto evicted = repo.evict(60'000'000); // e1 active at 70s, e2 at 10s
        REQUIRE(evicted.size() == 1);
        CHECK(evicted[0].id == e2.id);
    }
}

TEST_CASE("entries whose inputs vanish or change are evicted, cascading") {
    Dfs dfs(testsup::scratch_dir("repo_cascade"));
    make_ds(dfs, "d/in", {"1\tx", "2\ty"});
    Repository repo(dfs, dfs.root() / "_repo");

    make_ds(dfs, "restore/w/a/base", {"1\tx"});
    auto base = repo.admit(
        candidate(filter_plan("d/in", "a<2", "restore/w/a/base"), "restore/w/a/base"));
    REQUIRE(base.accepted);

    // A second entry computed from the first entry's stored dataset.
    make_ds(dfs, "restore/w/a/derived", {"1"});
    auto derived =
        repo.admit(candidate(filter_project_plan("restore/w/a/base", "b=='x'",
                                                 "restore/w/a/derived"),
                             "restore/w/a/derived", 500'000, 500));
    REQUIRE(derived.accepted);

    SUBCASE("deleting the source data evicts both layers in one pass") {
        dfs.remove("d/in");
        auto evicted = repo.evict(0);
        CHECK(evicted.size() == 2);
        CHECK(repo.size() == 0);
        CHECK(!dfs.exists("restore/w/a/base"));
        CHECK(!dfs.exists("restore/w/a/derived"));
        for (const auto& r : evicted)
            CHECK(r.reason.find("input data") != std::string::npos);
    }
    SUBCASE("rewriting the source data counts as a change") {
        make_ds(dfs, "d/in", {"9\tz"}, "a,b", true);
        auto evicted = repo.evict(0);
        CHECK(evicted.size() == 2);
        CHECK(repo.size() == 0);
    }
    SUBCASE("intact inputs evict nothing") {
        CHECK(repo.evict(0).empty());
        CHECK(repo.size() == 2);
    }
}

TEST_CASE("entries with a stale stored dataset stop matching and get reaped") {
    Dfs dfs(testsup::scratch_dir("repo_staleout"));
    make_ds(dfs, "d/in", {"1\tx", "2\ty"});
    Repository repo(dfs, dfs.root() / "_repo");

    make_ds(dfs, "restore/w/a/e1", {"1\tx"});
    auto res = repo.admit(
        candidate(filter_plan("d/in", "a<2", "restore/w/a/e1"), "restore/w/a/e1"));
    REQUIRE(res.accepted);
    CHECK(repo.match_snapshot().views.size() == 1);

    make_ds(dfs, "restore/w/a/e1", {"tampered\tq"}, "a,b", true);
    CHECK(repo.match_snapshot().views.empty());
    CHECK(repo.size() == 1);

    auto evicted = repo.evict(0);
    REQUIRE(evicted.size() == 1);
    CHECK(evicted[0].reason.find("stored dataset") != std::string::npos);
    CHECK(repo.size() == 0);
}

TEST_CASE("repository state survives a restart") {
    Dfs dfs(testsup::scratch_dir("repo_persist"));
    make_ds(dfs, "d/in", {"1\tx", "2\ty"});
    auto root = dfs.root() / "_repo";

    int64_t id_small = -1, id_big = -1;
    {
        Repository repo(dfs, root);
        make_ds(dfs, "restore/w/a/small", {"1\tx"});
        id_small = repo.admit(candidate(filter_plan("d/in", "a<2", "restore/w/a/small"),
                                        "restore/w/a/small"))
                       .id;
        make_ds(dfs, "restore/w/a/big", {"1"});
        id_big = repo.admit(candidate(filter_project_plan("d/in", "a<2",
                                                          "restore/w/a/big"),
                                      "restore/w/a/big"))
                     .id;
        repo.record_reuse(id_small);
        repo.note_load_throughput(1 << 20, 2.0);
    }

    Repository again(dfs, root);
    REQUIRE(again.size() == 2);
    auto scan = again.ordered_scan();
    CHECK(scan[0]->id == id_big);
    CHECK(scan[1]->id == id_small);
    CHECK(scan[1]->reuse_count == 1);
    CHECK(scan[0]->output_path == "restore/w/a/big");
    CHECK(plan_to_text(scan[1]->plan) ==
          plan_to_text(renumber_canonical(filter_plan("d/in", "a<2", "restore/w/a/small"))));
    CHECK(scan[1]->inputs.size() == 1);
    CHECK(scan[1]->inputs[0].path == "d/in");
    CHECK(scan[1]->inputs[0].bytes > 0);
    CHECK(again.load_throughput() == doctest::Approx(double(1 << 20) / 2.0));
    CHECK(again.match_snapshot().views.size() == 2);

    // Ids keep counting from where they left off.
    make_ds(dfs, "restore/w/a/third", {"2\ty"});
    auto res = again.admit(
        candidate(filter_plan("d/in", "a<3", "restore/w/a/third"), "restore/w/a/third"));
    REQUIRE(res.accepted);
    CHECK(res.id > std::max(id_small, id_big));
}

TEST_CASE("explicit removal and reuse bookkeeping") {
    Dfs dfs(testsup::scratch_dir("repo_misc"));
    make_ds(dfs, "d/in", {"1\tx"});
    Repository repo(dfs, dfs.root() / "_repo");
    make_ds(dfs, "restore/w/a/e1", {"1\tx"});
    auto res = repo.admit(
        candidate(filter_plan("d/in", "a<2", "restore/w/a/e1"), "restore/w/a/e1"));
    REQUIRE(res.accepted);

    CHECK_THROWS_AS(repo.record_reuse(res.id + 100), RepositoryError);
    repo.record_reuse(res.id);
    CHECK(repo.find(res.id)->reuse_count == 1);

    CHECK(repo.remove(res.id));
    CHECK(!repo.remove(res.id));
    CHECK(repo.size() == 0);
    CHECK(!dfs.exists("restore/w/a/e1"));
}
