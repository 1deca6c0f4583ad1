// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <chrono>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include "gatehouse/cli.hpp"
#include "gatehouse/errors.hpp"
#include "json.hpp"
#include "support.hpp"

using namespace gatehouse;
using namespace gatehouse::testing;

namespace {

struct Failure {
    std::string what;
};

void expect(bool cond, const std::string& what) {
    if (!cond) throw Failure{what};
}

template <typename T>
std::string str(const T& v) {
    std::ostringstream ss;
    ss << v;
    return ss.str();
}

std::string roles_of(const RunReport& r) {
    std::string out;
    for (const auto& [role, n] : r.dispatches) out += std::string(to_string(role)) + "x" + str(n) + " ";
    return out;
}

std::set<std::string> names(std::initializer_list<ArtifactKind> ks) {
    std::set<std::string> out;
    for (auto k : ks) out.emplace(file_name(k));
    return out;
}

std::set<std::string> present(const RunDirectory& dir) {
    std::set<std::string> out;
    for (auto k : kAllArtifacts)
        if (dir.exists(k)) out.emplace(file_name(k));
    return out;
}

std::string join_set(const std::set<std::string>& s) {
    std::string out;
    for (const auto& x : s) out += x + " ";
    return out;
}

using A = ArtifactKind;

// ---------------------------------------------------------------------------

void chain() {
    auto t0 = std::chrono::steady_clock::now();
    Harness h;
    Orchestrator o(h.options(1));
    auto r = o.run();
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    const std::vector<std::pair<std::string, std::string>> expected{
        {"CREDENTIALS_VERIFIED", "NEW"}, {"NEW", "PLANNED"},           {"PLANNED", "SPEC_READY"},
        {"SPEC_READY", "PIPELINES_COMPLETE"}, {"PIPELINES_COMPLETE", "DOCUMENTED"}, {"DOCUMENTED", "REVIEW_PASSED"}};
    std::vector<std::pair<std::string, std::string>> seen;
    for (const auto& h : o.state().history) {
        expect(h.is_transition(), "unexpected signal entry in history");
        seen.emplace_back(to_string(h.from), to_string(*h.to));
    }
    expect(seen == expected, "history does not follow the chain (" + str(seen.size()) + " transitions)");
    for (const auto& d : r.diagnostics) expect(d.kind != "gate-violation", "gate violation: " + d.message);
    expect(r.outcome == RunOutcome::Completed, "outcome " + std::string(to_string(r.outcome)));
    expect(secs < 5.0, "took " + str(secs) + " s");
}

void no_skip_fuzz() {
    TempDir tmp("gh-fuzz");
    std::mt19937 rng(20260101);
    LogicalClock clock;
    for (int trial = 0; trial < 1000; ++trial) {
        RunDirectory dir(tmp / ("t" + str(trial)));
        dir.create();
        RunState run(workflow_by_id(1 + static_cast<int>(rng() % 10)));
        for (int step = 0; step < 40; ++step) {
            auto k = kAllArtifacts[rng() % kArtifactCount];
            switch (rng() % 3) {
            case 0: {
                std::string body = "content\n";
                if (k == A::Review) body = (rng() % 2) ? "verdict: PASS\n" : "verdict: STOP\nroute: builder\n";
                if (k == A::Comprehension) body = "Self-test verdict: FULLY UNDERSTOOD\n";
                dir.write(k, body);
                break;
            }
            case 1: dir.remove(k); break;
            default:
                if (run.current == WorkflowState::Done) break;
                run = advance(run, dir, clock).run;
            }
            expect(history_is_contiguous(run), "non-contiguous history in trial " + str(trial));
            // Independent check: each transition moves exactly one step and picks up where the last ended.
            std::optional<WorkflowState> last;
            for (const auto& e : run.history) {
                if (!e.is_transition()) continue;
                auto from = static_cast<int>(e.from), to = static_cast<int>(*e.to);
                expect(to == from + 1, "skip in trial " + str(trial));
                if (last) expect(*last == e.from, "gap in trial " + str(trial));
                last = *e.to;
            }
        }
    }
}

void access_matrix() {
    // Columns: request impact status credentials comprehension spec test-spec sim-spec
    //          implementation audit simulation Architecture log-entry docs review shipper
    const std::map<AgentRole, std::string> oracle{
        {AgentRole::Leader, "1111111111111111"},    {AgentRole::Planner, "1100111100000000"},
        {AgentRole::Builder, "0100010010000000"},   {AgentRole::Tester, "0000001011100000"},
        {AgentRole::Simulator, "0000000100100000"}, {AgentRole::Scriber, "1100000011111100"},
        {AgentRole::Reviewer, "1110111111111110"},  {AgentRole::Shipper, "1111111111111111"},
    };
    auto m = AccessMatrix::canonical(WorkflowState::PipelinesComplete);
    AuditLog log;
    LogicalClock clock;
    int cases = 0;
    for (auto role : kAllRoles) {
        for (std::size_t i = 0; i < kArtifactCount; ++i) {
            bool want = oracle.at(role)[i] == '1';
            auto got = check_access(m, role, kAllArtifacts[i], log, clock);
            expect((got == AccessDecision::Allow) == want, std::string(to_string(role)) + " x " +
                                                               std::string(file_name(kAllArtifacts[i])));
            ++cases;
        }
    }
    expect(cases == 128 && log.size() == 128, "expected 128 audited cases");
    // Before pipelines complete the tester sees only its own specification and audit.
    auto early = AccessMatrix::canonical(WorkflowState::SpecReady);
    expect(!early.grants(AgentRole::Tester, A::Implementation) && !early.grants(AgentRole::Tester, A::Simulation),
           "tester reads pipeline outputs before PIPELINES_COMPLETE");
}

void isolation() {
    Harness h;
    auto wf = workflow_by_id(2);
    h.scripts[AgentRole::Builder] =
        with_leading_attempts(AgentRole::Builder, wf, {"read test-spec.md\n" + conforming_script(AgentRole::Builder, wf)});
    Orchestrator o(h.options(2));
    auto r = o.run();

    auto builder_log = parse_access_log(slurp(h.run_dir().access_log_dir() / "builder.log"));
    std::vector<AccessLog> logs{{AgentRole::Builder, builder_log}};
    auto iso = audit_isolation(logs, RoleSet{AgentRole::Builder});
    bool flagged = false;
    for (const auto& v : iso.violations) flagged |= v.role == AgentRole::Builder && v.artifact == A::TestSpec;
    expect(flagged, "audit_isolation did not flag the builder's test-spec.md read");

    expect(!r.signals.empty() && r.signals.front().kind == SignalKind::Stop &&
               r.signals.front().raiser == AgentRole::Reviewer,
           "mechanical review did not force a STOP");
    expect(r.signals.front().detail.find("builder") != std::string::npos, "forced STOP not routed to builder");
    expect(r.dispatch_count(AgentRole::Builder) == 2, "builder not re-dispatched after the STOP");
    expect(r.final_state == WorkflowState::ReadyToShip, "clean second attempt did not reach READY_TO_SHIP");
}

void signal_ownership() {
    int accepted = 0;
    std::set<std::pair<SignalKind, AgentRole>> ok;
    for (auto k : kAllSignalKinds)
        for (auto r : kAllRoles)
            if (signal_owner_check(k, r)) {
                ++accepted;
                ok.emplace(k, r);
            }
    const std::set<std::pair<SignalKind, AgentRole>> oracle{
        {SignalKind::Hold, AgentRole::Planner},   {SignalKind::Hold, AgentRole::Builder},
        {SignalKind::Hold, AgentRole::Scriber},   {SignalKind::Hold, AgentRole::Simulator},
        {SignalKind::Block, AgentRole::Tester},   {SignalKind::Stop, AgentRole::Reviewer}};
    expect(accepted == 6 && ok == oracle, "accepted " + str(accepted) + " pairs");
}

void retry_cap() {
    for (auto k : kAllSignalKinds) {
        AgentRole raiser = k == SignalKind::Hold    ? AgentRole::Builder
                           : k == SignalKind::Block ? AgentRole::Tester
                                                    : AgentRole::Reviewer;
        Signal s{k, raiser, k == SignalKind::Stop ? "route: builder" : "details"};
        RunState run(workflow_by_id(1));
        LogicalClock clock;
        for (int i = 1; i <= 3; ++i)
            expect(record_signal(run, s, clock) == RetryDecision::Retry,
                   std::string(to_string(k)) + " retry " + str(i) + " refused");
        expect(record_signal(run, s, clock) == RetryDecision::EscalateToUser,
               std::string(to_string(k)) + " 4th did not escalate");
        expect(run.retry_count(k) == 3, std::string(to_string(k)) + " retry count " + str(run.retry_count(k)));
    }
}

void block_loop() {
    Harness h(std::nullopt);
    auto wf = workflow_by_id(2);
    const std::string block = "signal BLOCK \"reference comparison failed: 0.31 vs 0.30\\npipeline: code\"";
    put(h.tmp / "tester.script", with_leading_attempts(AgentRole::Tester, wf, {block, block}));
    put(h.tmp / "backends.json", R"({"default": {"kind": "scripted", "conforming": true},
  "roles": {"tester": {"kind": "scripted", "script": "tester.script"}},
  "deadline_seconds": 20})");
    auto opts = h.options(2);
    opts.backends = load_backend_config(h.tmp / "backends.json");
    Orchestrator o(std::move(opts));
    auto r = o.run();
    expect(r.retry_count(SignalKind::Block) == 2, "retries[BLOCK]=" + str(r.retry_count(SignalKind::Block)));
    expect(r.dispatch_count(AgentRole::Builder) == 3, "builder dispatched " + str(r.dispatch_count(AgentRole::Builder)));
    expect(r.final_state == WorkflowState::ReadyToShip, "final state " + std::string(to_string(r.final_state)));

    auto replay = replay_run(h.workspace, "2026-01-01-test-run");
    std::string diffs;
    for (const auto& d : replay.differences) diffs += d + "; ";
    expect(replay.matched, "replay differs: " + diffs);
    expect(replay.replayed.to_json() == r.to_json(), "replayed report is not byte-identical");

    auto shipped = o.ship(true);
    expect(shipped.outcome == RunOutcome::Shipped, "ship after convergence: " + shipped.message);
}

void ship_gate_table() {
    int allowed = 0;
    std::vector<std::optional<ReviewVerdict>> verdicts{
        std::nullopt, ReviewVerdict{Verdict::Pass, ""}, ReviewVerdict{Verdict::PassWithNote, "minor"},
        ReviewVerdict{Verdict::Stop, "route: builder"}};
    for (const auto& v : verdicts)
        for (bool auth : {false, true}) {
            bool got = ship_gate(v, auth).allowed;
            bool want = auth && v && v->value != Verdict::Stop;
            expect(got == want, "case verdict=" + std::string(v ? to_string(v->value) : "none") +
                                    " auth=" + str(auth));
            allowed += got;
        }
    expect(allowed == 2, str(allowed) + " cases allowed");
}

void catalog() {
    const std::set<std::string> leader = names({A::Request, A::Impact, A::Status, A::Credentials});
    auto with = [&](std::initializer_list<ArtifactKind> ks) {
        auto s = leader;
        auto extra = names(ks);
        s.insert(extra.begin(), extra.end());
        return s;
    };
    const auto ship_set = with({A::Comprehension, A::Spec, A::TestSpec, A::Implementation, A::Audit,
                                A::Architecture, A::LogEntry, A::Docs, A::Review, A::Shipper});
    using R = AgentRole;
    struct Row {
        std::map<R, int> roles;
        std::set<std::string> artifacts;
    };
    const std::map<int, Row> oracle{
        {1, {{{R::Planner, 1}, {R::Builder, 1}, {R::Tester, 1}, {R::Simulator, 1}, {R::Scriber, 1}, {R::Reviewer, 1}},
             with({A::Comprehension, A::Spec, A::TestSpec, A::SimSpec, A::Implementation, A::Audit, A::Simulation,
                   A::Architecture, A::LogEntry, A::Docs, A::Review})}},
        {2, {{{R::Planner, 1}, {R::Builder, 1}, {R::Tester, 1}, {R::Scriber, 1}, {R::Reviewer, 1}, {R::Shipper, 1}},
             ship_set}},
        {3, {{{R::Planner, 1}, {R::Scriber, 1}, {R::Reviewer, 1}},
             with({A::Comprehension, A::Architecture, A::LogEntry, A::Docs, A::Review})}},
        {4, {{{R::Planner, 1}, {R::Builder, 1}, {R::Tester, 1}, {R::Scriber, 1}, {R::Reviewer, 1}, {R::Shipper, 1}},
             ship_set}},
        {5, {{{R::Planner, 1}, {R::Builder, 1}, {R::Tester, 1}, {R::Scriber, 1}, {R::Reviewer, 1}, {R::Shipper, 1}},
             ship_set}},
        {6, {{{R::Tester, 1}}, with({A::Audit})}},
        {7, {{{R::Reviewer, 1}}, with({A::Review})}},
        {8, {{{R::Tester, 1}}, with({A::Audit})}},
        {9, {{{R::Builder, 1}, {R::Tester, 1}}, with({A::Implementation, A::Audit})}},
        {10, {{{R::Planner, 1}, {R::Simulator, 1}, {R::Tester, 1}, {R::Scriber, 1}, {R::Reviewer, 1}},
              with({A::Comprehension, A::TestSpec, A::SimSpec, A::Audit, A::Simulation, A::Architecture,
                    A::LogEntry, A::Docs, A::Review})}},
    };
    expect(workflow_catalog().size() == 10, "catalog size");
    for (const auto& [id, row] : oracle) {
        Harness h;
        Orchestrator o(h.options(id));
        auto r = o.run();
        std::string run_id = "2026-01-01-test-run";
        RunReport final = r;
        if (id == 4 || id == 8) {
            expect(r.children.size() == 1, "workflow " + str(id) + " child count");
            run_id = r.children.front().request_id;
            final = r.children.front();
        }
        if (final.outcome == RunOutcome::AwaitingAuthorization) {
            EngineOptions base;
            base.workspace = h.workspace;
            base.git = &h.git;
            base.channel = &h.channel;
            auto again = Orchestrator::reopen(base, run_id);
            final = again->ship(true);
            expect(final.outcome == RunOutcome::Shipped, "workflow " + str(id) + " ship: " + final.message);
        }
        expect(exit_code_for(final.outcome) == 0,
               "workflow " + str(id) + " ended " + std::string(to_string(final.outcome)) + ": " + final.message);
        expect(final.dispatches == row.roles, "workflow " + str(id) + " dispatched " + roles_of(final));
        auto got = present(h.run_dir(run_id));
        expect(got == row.artifacts, "workflow " + str(id) + " artifacts " + join_set(got));
    }
}

void language_detection() {
    TempDir tmp("gh-lang");
    struct Fixture {
        std::vector<std::string> files;
        Language want;
        std::string command;
    };
    const std::vector<Fixture> fixtures{
        {{"DESCRIPTION"}, Language::R, "R CMD check --as-cran"},
        {{"pyproject.toml"}, Language::Python, "pytest"},
        {{"package.json"}, Language::TypeScript, "npm test"},
        {{"ado/estimate.ado"}, Language::Stata, ""},
        {{"go.mod"}, Language::Go, "go test ./..."},
        {{"Cargo.toml"}, Language::Rust, "cargo test"},
        {{"Makefile", "src/main.c"}, Language::C, "<unit test runner>"},
        {{"CMakeLists.txt", "src/main.cpp"}, Language::Cpp, "<unit test runner>"},
    };
    int i = 0;
    for (const auto& f : fixtures) {
        auto dir = tmp / ("f" + str(i++));
        for (const auto& file : f.files) put(dir / file, "x\n");
        auto p = detect_language(dir);
        expect(p.language == f.want, f.files.front() + " detected as " + std::string(to_string(p.language)));
        if (!f.command.empty()) {
            auto cmds = validation_commands(p);
            expect(std::find(cmds.begin(), cmds.end(), f.command) != cmds.end(), f.files.front() + " commands");
        }
    }
    auto mixed = tmp / "mixed";
    for (const auto* file : {"DESCRIPTION", "pyproject.toml", "package.json", "Cargo.toml"}) put(mixed / file, "x\n");
    expect(detect_language(mixed).language == Language::Rust, "mixed markers did not resolve to Rust");

    Harness h(std::nullopt, "");
    expect(detect_language(h.target).language == Language::Unknown, "empty repo not Unknown");
    Orchestrator o(h.options(2));
    auto r = o.run();
    expect(r.outcome == RunOutcome::AwaitingAnswer, "empty repo run did not HOLD");
    expect(h.channel.pending().has_value(), "no pending language question");
}

void sync_idempotence() {
    Harness h;
    h.git.init(h.workspace.root, std::string("https://example.org/workspace.git"));
    auto opts = h.options(2);
    opts.workspace_git = &h.git;
    Orchestrator o(std::move(opts));
    o.run();
    auto shipped = o.ship(true);
    expect(shipped.outcome == RunOutcome::Shipped, "ship: " + shipped.message);
    expect(shipped.ship && shipped.ship->sync && shipped.ship->sync->ok(), "first sync failed");

    auto before = snapshot(h.workspace.dir());
    auto again = sync_workspace(h.workspace, h.run_dir(), "2026-01-01-test-run", {&h.git, nullptr});
    expect(again.ok(), "second sync failed: " + again.message);
    auto after = snapshot(h.workspace.dir());
    expect(before == after, "second sync changed the workspace tree");

    auto ws = h.git.repo(h.workspace.root);
    std::set<std::string> pushed;
    for (const auto& [branch, tree] : ws.pushed) pushed.insert(tree.begin(), tree.end());
    expect(!pushed.empty(), "nothing pushed");
    for (const auto& p : pushed) {
        expect(p.find("/logs/") == std::string::npos && p.find("/tmp/") == std::string::npos &&
                   p.find("context.md") == std::string::npos,
               "local-only file pushed: " + p);
    }
    expect(pushed.count("pkg/runs/2026-01-01-test-run.md") == 1, "runs file not pushed");
}

void tolerance_integrity() {
    TempDir tmp("gh-tol");
    auto plan = DispatchPlan::compile(workflow_by_id(9));
    auto review_of = [&](const std::string& audit_tol) {
        RunDirectory dir(tmp / audit_tol);
        dir.create();
        dir.write(A::TestSpec, "# Test specification\n\nTolerance: 1e-6\n");
        dir.write(A::Audit, "# Audit\n\n| test | tolerance | result |\n|---|---|---|\n| reference comparison | " +
                                audit_tol + " | pass |\n");
        return mechanical_review(dir, {}, plan);
    };
    auto inflated = review_of("1e-4");
    auto c6 = inflated.check(6);
    expect(c6 && c6->status == CheckStatus::Fail, "1e-4 against 1e-6 not flagged");
    expect(c6->detail != "no inflation detected", "failing detail claims no inflation");
    expect(!inflated.passed(), "review passed despite inflation");
    auto exact = review_of("1e-6");
    expect(exact.check(6) && exact.check(6)->status == CheckStatus::Pass &&
               exact.check(6)->detail == "no inflation detected",
           "matching tolerance not accepted");
}

} // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<void()>>> criteria{
        {"state-machine chain (workflow 1, < 5 s)", chain},
        {"no-skip fuzz (1000 interleavings)", no_skip_fuzz},
        {"access matrix (8 x 16)", access_matrix},
        {"isolation audit end-to-end", isolation},
        {"signal ownership (24 pairs)", signal_ownership},
        {"retry cap per signal kind", retry_cap},
        {"BLOCK loop convergence and replay", block_loop},
        {"ship gate truth table (8 cases)", ship_gate_table},
        {"workflow catalog (10 workflows)", catalog},
        {"language detection", language_detection},
        {"workspace sync idempotence and push policy", sync_idempotence},
        {"tolerance integrity", tolerance_integrity},
    };
    int failed = 0;
    for (const auto& [name, fn] : criteria) {
        std::string detail;
        bool ok = false;
        try {
            fn();
            ok = true;
        } catch (const Failure& f) {
            detail = f.what;
        } catch (const std::exception& e) {
            detail = std::string("exception: ") + e.what();
        }
        std::cout << (ok ? "PASS " : "FAIL ") << name << (ok ? "" : ": " + detail) << "\n";
        failed += !ok;
    }
    std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed\n";
    return failed == 0 ? 0 : 1;
}
