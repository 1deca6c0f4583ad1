#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>
#include <thread>

#include "gatehouse/barrier.hpp"
#include "gatehouse/errors.hpp"
#include "support.hpp"

using namespace gatehouse;
using namespace gatehouse::testing;
using R = AgentRole;
using A = ArtifactKind;
using S = WorkflowState;

namespace {

struct Fixture {
    TempDir tmp{"gh-bar"};
    FakeGit git;
    GitJournal journal;
    LogicalClock clock;
    fs::path repo = tmp / "repo";
    RunDirectory run{tmp / "run"};

    Fixture() {
        fs::create_directories(repo);
        git.init(repo);
        run.create();
        for (auto k : {A::Request, A::Impact, A::Credentials, A::Comprehension, A::Spec, A::TestSpec, A::SimSpec})
            run.write(k, std::string(file_name(k)) + "\n");
    }

    SandboxOptions opts(R role) {
        SandboxOptions o;
        o.root = tmp / "sandboxes" / std::string(to_string(role));
        o.base_repo = repo;
        o.request_id = "2026-01-01-demo";
        o.git = &git;
        o.journal = &journal;
        o.run_dir = run;
        o.clock = &clock;
        return o;
    }
};

} // namespace

TEST_CASE("check_access examples") {
    auto m = AccessMatrix::canonical();
    AuditLog log;
    LogicalClock clock;
    CHECK(check_access(m, R::Builder, A::TestSpec, log, clock) == AccessDecision::Deny);
    CHECK(check_access(m, R::Tester, A::TestSpec, log, clock) == AccessDecision::Allow);
    CHECK(check_access(m, R::Simulator, A::Spec, log, clock) == AccessDecision::Deny);
    REQUIRE(log.size() == 3);
    CHECK(log.entries()[0].event == AuditEvent::Deny);
    CHECK(log.entries()[1].event == AuditEvent::Allow);
}

TEST_CASE("specification barriers") {
    auto m = AccessMatrix::canonical(S::PipelinesComplete);
    CHECK(m.grants(R::Builder, A::Spec));
    CHECK_FALSE(m.grants(R::Builder, A::SimSpec));
    CHECK(m.grants(R::Simulator, A::SimSpec));
    CHECK_FALSE(m.grants(R::Tester, A::Spec));
    CHECK_FALSE(m.grants(R::Tester, A::SimSpec));
    for (auto k : {A::Spec, A::TestSpec, A::SimSpec}) {
        CHECK(m.grants(R::Planner, k));
        CHECK(m.grants(R::Reviewer, k));
    }
    CHECK(AccessMatrix::deny_all().readable(R::Leader).empty());
}

TEST_CASE("audit log is complete under concurrent checks") {
    auto m = AccessMatrix::canonical();
    AuditLog log;
    SystemClock clock;
    std::vector<std::thread> threads;
    for (int t = 0; t < 8; ++t)
        threads.emplace_back([&, t] {
            for (int i = 0; i < 200; ++i)
                check_access(m, kAllRoles[t], kAllArtifacts[static_cast<std::size_t>(i) % kArtifactCount], log, clock);
        });
    for (auto& th : threads) th.join();
    CHECK(log.size() == 1600);
}

TEST_CASE("access log text round-trips") {
    AuditLog log;
    LogicalClock clock;
    auto m = AccessMatrix::canonical();
    check_access(m, R::Builder, A::Spec, log, clock);
    check_access(m, R::Builder, A::TestSpec, log, clock);
    CHECK(parse_access_log(log.render()) == log.entries());
}

TEST_CASE("builder sandbox holds spec.md but not test-spec.md") {
    Fixture f;
    auto box = create_sandbox(R::Builder, f.opts(R::Builder), AccessMatrix::canonical(S::SpecReady));
    CHECK(fs::exists(box.root() / "spec.md"));
    CHECK_FALSE(fs::exists(box.root() / "test-spec.md"));
    CHECK_FALSE(fs::exists(box.root() / "sim-spec.md"));
    REQUIRE(box.worktree_path());
    CHECK(box.branch() == "agent/builder/2026-01-01-demo");
    CHECK(f.git.repo(*box.worktree_path()).branch == "agent/builder/2026-01-01-demo");
}

TEST_CASE("tester sandbox gains implementation.md after PIPELINES_COMPLETE") {
    Fixture f;
    f.run.write(A::Implementation, "impl\n");
    auto early = create_sandbox(R::Tester, f.opts(R::Tester), AccessMatrix::canonical(S::SpecReady));
    CHECK_FALSE(fs::exists(early.root() / "implementation.md"));
    early.refresh(AccessMatrix::canonical(S::PipelinesComplete), f.run, f.clock);
    CHECK(fs::exists(early.root() / "implementation.md"));
    CHECK_FALSE(fs::exists(early.root() / "spec.md"));
}

TEST_CASE("scriber view for a docs-only workflow has no specifications") {
    Fixture f;
    auto box = create_sandbox(R::Scriber, f.opts(R::Scriber), AccessMatrix::canonical(S::PipelinesComplete));
    for (auto k : {A::Spec, A::TestSpec, A::SimSpec, A::Comprehension}) CHECK_FALSE(fs::exists(box.root() / std::string(file_name(k))));
}

TEST_CASE("materializing a non-granted artifact is a hard failure") {
    Fixture f;
    auto o = f.opts(R::Builder);
    o.materialize = std::vector<A>{A::TestSpec};
    CHECK_THROWS_AS(create_sandbox(R::Builder, o, AccessMatrix::canonical()), BarrierViolation);
}

TEST_CASE("worktree failure is an environment error") {
    Fixture f;
    f.git.fail_worktree_add = true;
    CHECK_THROWS_AS(create_sandbox(R::Builder, f.opts(R::Builder), AccessMatrix::canonical()), EnvironmentError);
}

TEST_CASE("planner gets an artifact-only view") {
    Fixture f;
    auto box = create_view(R::Planner, f.opts(R::Planner), AccessMatrix::canonical());
    CHECK_FALSE(box.worktree_path().has_value());
    CHECK(fs::exists(box.root() / "request.md"));
}

TEST_CASE("sandbox paths never leave the root") {
    Fixture f;
    auto box = create_view(R::Planner, f.opts(R::Planner), AccessMatrix::canonical());
    const auto root = fs::weakly_canonical(box.root());
    std::mt19937 rng(7);
    const std::vector<std::string> parts{"a", "b", "..", ".", "spec.md", "x.txt", "..", "nested"};
    int rejected = 0;
    for (int i = 0; i < 500; ++i) {
        std::string rel;
        int n = 1 + static_cast<int>(rng() % 5);
        for (int j = 0; j < n; ++j) rel += (j ? "/" : "") + parts[rng() % parts.size()];
        try {
            auto p = fs::weakly_canonical(box.resolve(rel));
            auto [end, _] = std::mismatch(root.begin(), root.end(), p.begin(), p.end());
            CHECK(end == root.end());
        } catch (const BarrierViolation&) {
            ++rejected;
        }
    }
    CHECK(rejected > 0);
    CHECK_THROWS_AS(box.resolve("../../etc/x"), BarrierViolation);
    CHECK_THROWS_AS(box.resolve("/etc/passwd"), BarrierViolation);
}

TEST_CASE("audit_isolation") {
    LogicalClock clock;
    auto entry = [&](R r, A a, AuditEvent e) { return AccessEntry{clock.now(), r, a, e}; };

    std::vector<AccessLog> clean{{R::Builder, {entry(R::Builder, A::Spec, AuditEvent::Allow)}},
                                 {R::Tester, {entry(R::Tester, A::TestSpec, AuditEvent::Allow)}}};
    CHECK(audit_isolation(clean, RoleSet{R::Builder, R::Tester}).clean());

    std::vector<AccessLog> leaked{{R::Builder, {entry(R::Builder, A::TestSpec, AuditEvent::Allow)}}};
    auto rep = audit_isolation(leaked, RoleSet{R::Builder});
    REQUIRE(rep.violations.size() == 1);
    CHECK(rep.violations[0].kind == ViolationKind::ForbiddenAllow);

    std::vector<AccessLog> attempted{{R::Builder, {entry(R::Builder, A::TestSpec, AuditEvent::Deny)}}};
    CHECK(audit_isolation(attempted, RoleSet{R::Builder}).violations.at(0).kind == ViolationKind::AttemptedRead);

    std::vector<AccessLog> partial{{R::Planner, {}}, {R::Builder, {}}, {R::Simulator, {}},
                                   {R::Scriber, {}}, {R::Reviewer, {}}};
    CHECK_THROWS_AS(audit_isolation(partial, workflow_by_id(1).roles()), IncompleteAuditError);
}

TEST_CASE("git_ops preconditions") {
    Fixture f;
    GitParams p;
    p.worktree = f.tmp / "wt";
    p.branch = agent_branch(R::Builder, "2026-01-01-demo");
    auto added = git_ops(f.git, f.repo, GitAction::WorktreeAdd, p, &f.journal);
    CHECK(added.ok());
    CHECK(p.branch == "agent/builder/2026-01-01-demo");

    GitParams gone;
    gone.worktree = f.tmp / "never-created";
    CHECK(git_ops(f.git, f.repo, GitAction::WorktreeRemove, gone, &f.journal).status == GitStatus::NoOp);

    FakeGit remote_git;
    remote_git.init(f.repo, std::string("https://example.org/r.git"));
    GitParams push;
    push.branch = "main";
    push.run_dir = f.tmp / "no-credentials";
    CHECK(git_ops(remote_git, f.repo, GitAction::Push, push, nullptr).status == GitStatus::Refused);
    push.run_dir = f.run.root();
    CHECK(git_ops(remote_git, f.repo, GitAction::Push, push, nullptr).ok());
    CHECK(f.journal.entries().size() == 2);
}
