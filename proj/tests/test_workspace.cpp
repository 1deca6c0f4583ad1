#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "gatehouse/errors.hpp"
#include "gatehouse/workspace.hpp"
#include "support.hpp"

using namespace gatehouse;
using namespace gatehouse::testing;
using A = ArtifactKind;

namespace {

const std::string kLogEntry = R"(# Log entry

## What changed

Added a bootstrap option to the variance estimator.

## Handoff notes

### Prior decisions

Bootstrap draws default to 500.

### Known issues

Clustered bootstrap is not supported yet.

### Technical insights

Reuse the QR decomposition across draws.
)";

RunDirectory completed_run(const TempDir& tmp, const std::string& id, const std::string& log_entry = kLogEntry) {
    RunDirectory dir(tmp / "runs-src" / id);
    dir.create();
    dir.write(A::LogEntry, log_entry);
    dir.write(A::Docs, "# Docs\n\nbootstrap = TRUE enables resampling.\n");
    dir.write(A::Review, "verdict: PASS\n");
    dir.write(A::Credentials, "access: verified\n");
    return dir;
}

int count(const std::string& hay, const std::string& needle) {
    int n = 0;
    for (auto p = hay.find(needle); p != std::string::npos; p = hay.find(needle, p + 1)) ++n;
    return n;
}

} // namespace

TEST_CASE("language detection by marker") {
    TempDir tmp("gh-ws");
    put(tmp / "r/DESCRIPTION", "Package: x\n");
    CHECK(detect_language(tmp / "r").language == Language::R);
    put(tmp / "rust/Cargo.toml", "[package]\n");
    auto rust = detect_language(tmp / "rust");
    CHECK(rust.language == Language::Rust);
    CHECK(std::find(rust.validation.begin(), rust.validation.end(), "cargo test") != rust.validation.end());
    fs::create_directories(tmp / "empty");
    CHECK(detect_language(tmp / "empty").language == Language::Unknown);
    put(tmp / "deep/a/b/c/module.ado", "program x\n");
    CHECK(detect_language(tmp / "deep").language == Language::Stata);
    put(tmp / "vendored/node_modules/lib/x.c", "int x;\n");
    put(tmp / "vendored/Makefile", "all:\n");
    CHECK(detect_language(tmp / "vendored").language == Language::Unknown);
    CHECK_THROWS_AS(detect_language(tmp / "missing"), IoError);
}

TEST_CASE("validation commands per profile") {
    CHECK(validation_commands(profile_for(Language::Go)) == std::vector<std::string>{"go test ./..."});
    CHECK(validation_commands(profile_for(Language::Python)) == std::vector<std::string>{"pytest", "tox"});
    CHECK(validation_commands(profile_for(Language::C)) == std::vector<std::string>{"<unit test runner>"});
    CHECK(needs_validation_override(profile_for(Language::C)));
    CHECK(needs_validation_override(profile_for(Language::Cpp)));
    CHECK_FALSE(needs_validation_override(profile_for(Language::R)));
    CHECK_THROWS_AS(validation_commands(profile_for(Language::Unknown)), ConfigError);
    CHECK(language_profiles().size() == 8);
    CHECK(language_profiles().front().language == Language::Rust);
    CHECK(parse_language("c++") == Language::Cpp);
    CHECK(parse_language("python") == Language::Python);
}

TEST_CASE("request ids") {
    auto id = RequestId::parse("2026-03-02-fix-typo");
    REQUIRE(id);
    CHECK(id->date == "2026-03-02");
    CHECK(id->slug == "fix-typo");
    CHECK_FALSE(RequestId::parse("fix-typo"));
    CHECK_FALSE(RequestId::parse("2026-03-02-Fix Typo"));
    CHECK(make_request_id("2026-03-02", "Fix the failing tests!") == "2026-03-02-fix-the-failing-tests");
}

TEST_CASE("push policy") {
    CHECK(push_class("context.md") == PushClass::Local);
    CHECK(push_class("logs/cli.log") == PushClass::Local);
    CHECK(push_class("tmp/sandboxes/x") == PushClass::Local);
    CHECK(push_class("runs/2026-01-01-x/logs/builder.log") == PushClass::Local);
    CHECK(push_class("runs/2026-01-01-x.md") == PushClass::Pushed);
    CHECK(push_class("CHANGELOG.md") == PushClass::Pushed);

    TempDir tmp("gh-ws");
    WorkspaceLayout ws{tmp.path(), "pkg"};
    put(ws.context_md(), "c\n");
    put(ws.logs_dir() / "a.log", "l\n");
    put(ws.tmp_dir() / "scratch", "t\n");
    put(ws.changelog(), "# Changelog\n");
    put(ws.runs_dir() / "2026-01-01-x.md", "r\n");
    CHECK(pushed_files(ws) == std::vector<std::string>{"pkg/CHANGELOG.md", "pkg/runs/2026-01-01-x.md"});
}

TEST_CASE("sync archives a completed run") {
    TempDir tmp("gh-ws");
    WorkspaceLayout ws{tmp / "workspace", "pkg"};
    ws.ensure();
    auto run = completed_run(tmp, "2026-01-01-add-bootstrap");
    auto r = sync_workspace(ws, run, "2026-01-01-add-bootstrap");
    REQUIRE(r.ok());
    CHECK(r.changelog_added);
    CHECK(fs::exists(ws.runs_dir() / "2026-01-01-add-bootstrap.md"));
    auto changelog = slurp(ws.changelog());
    CHECK(count(changelog, "## 2026-01-01") == 1);
    CHECK(changelog.find("Added a bootstrap option") != std::string::npos);
    CHECK(slurp(ws.docs()).find("bootstrap = TRUE") != std::string::npos);

    auto before = snapshot(ws.dir());
    auto again = sync_workspace(ws, run, "2026-01-01-add-bootstrap");
    CHECK(again.ok());
    CHECK_FALSE(again.changelog_added);
    CHECK(snapshot(ws.dir()) == before);
}

TEST_CASE("HANDOFF holds only the latest run") {
    TempDir tmp("gh-ws");
    WorkspaceLayout ws{tmp / "workspace", "pkg"};
    ws.ensure();
    sync_workspace(ws, completed_run(tmp, "2026-01-01-first"), "2026-01-01-first");
    auto second = kLogEntry;
    second.replace(second.find("Bootstrap draws default to 500."), 31, "Switched to 1000 draws.");
    sync_workspace(ws, completed_run(tmp, "2026-01-02-second", second), "2026-01-02-second");
    auto handoff = slurp(ws.handoff());
    CHECK(handoff.find("2026-01-02-second") != std::string::npos);
    CHECK(handoff.find("2026-01-01-first") == std::string::npos);
    CHECK(handoff.find("Switched to 1000 draws.") != std::string::npos);
    CHECK(handoff.find("default to 500") == std::string::npos);
    CHECK(count(slurp(ws.changelog()), "## 2026-") == 2);
}

TEST_CASE("empty handoff section gets an explicit stanza") {
    TempDir tmp("gh-ws");
    WorkspaceLayout ws{tmp / "workspace", "pkg"};
    ws.ensure();
    auto run = completed_run(tmp, "2026-01-01-quiet", "# Log\n\n## What changed\n\nNothing much.\n\n## Handoff notes\n\n");
    REQUIRE(sync_workspace(ws, run, "2026-01-01-quiet").ok());
    CHECK(slurp(ws.handoff()).find("No handoff items.") != std::string::npos);
}

TEST_CASE("sync preconditions") {
    TempDir tmp("gh-ws");
    WorkspaceLayout ws{tmp / "workspace", "pkg"};
    ws.ensure();
    auto run = completed_run(tmp, "2026-01-01-x");
    CHECK(sync_workspace(ws, run, "not-an-id").status == SyncStatus::PreconditionFailed);
    run.write(A::Review, "verdict: STOP\nroute: builder\n");
    CHECK(sync_workspace(ws, run, "2026-01-01-x").status == SyncStatus::PreconditionFailed);
    CHECK_FALSE(fs::exists(ws.runs_dir() / "2026-01-01-x.md"));
}

TEST_CASE("failed push restores the workspace") {
    TempDir tmp("gh-ws");
    WorkspaceLayout ws{tmp / "workspace", "pkg"};
    ws.ensure();
    FakeGit git;
    git.init(ws.root, std::string("https://example.org/ws.git"));
    REQUIRE(sync_workspace(ws, completed_run(tmp, "2026-01-01-first"), "2026-01-01-first", {&git}).ok());
    auto before = snapshot(ws.dir());
    git.fail_push = true;
    auto r = sync_workspace(ws, completed_run(tmp, "2026-01-02-second"), "2026-01-02-second", {&git});
    CHECK(r.status == SyncStatus::PushFailed);
    CHECK(r.rolled_back);
    CHECK(snapshot(ws.dir()) == before);
}

TEST_CASE("sync pushes only shared files") {
    TempDir tmp("gh-ws");
    WorkspaceLayout ws{tmp / "workspace", "pkg"};
    ws.ensure();
    put(ws.logs_dir() / "session.log", "x\n");
    put(ws.tmp_dir() / "scratch.txt", "x\n");
    put(ws.context_md(), "ctx\n");
    FakeGit git;
    git.init(ws.root, std::string("https://example.org/ws.git"));
    auto r = sync_workspace(ws, completed_run(tmp, "2026-01-01-x"), "2026-01-01-x", {&git});
    REQUIRE(r.ok());
    CHECK(r.pushed);
    for (const auto& f : git.tracked_files(ws.root)) CHECK(push_class(fs::relative(fs::path(f), "pkg")) == PushClass::Pushed);
}

TEST_CASE("handoff reading") {
    TempDir tmp("gh-ws");
    WorkspaceLayout ws{tmp / "workspace", "pkg"};
    CHECK(read_handoff(ws).empty());

    auto ctx = handoff_from_log_entry(kLogEntry);
    auto md = render_handoff(ctx, "2026-01-01-x");
    auto back = parse_handoff(md);
    CHECK(back.prior_decisions == ctx.prior_decisions);
    CHECK(back.known_issues == ctx.known_issues);
    CHECK(back.technical_insights == ctx.technical_insights);
    CHECK(back.warnings.empty());

    auto extra = parse_handoff(md + "\n## Reviewer wishes\n\nMore plots.\n");
    CHECK(extra.other.find("## Reviewer wishes\nMore plots.") != std::string::npos);
    CHECK(extra.prior_decisions == ctx.prior_decisions);

    auto with_unknown = handoff_from_log_entry(kLogEntry + "\n### Open threads\n\nAsk about weights.\n");
    CHECK(with_unknown.other.find("### Open threads") != std::string::npos);
    CHECK(what_changed(kLogEntry) == "Added a bootstrap option to the variance estimator.");
}

TEST_CASE("workspace lint") {
    TempDir tmp("gh-ws");
    WorkspaceLayout ws{tmp / "workspace", "pkg"};
    ws.ensure();
    REQUIRE(sync_workspace(ws, completed_run(tmp, "2026-01-01-x"), "2026-01-01-x").ok());
    CHECK(validate_workspace(ws.root).clean());

    put(ws.runs_dir() / "fix-typo.md", "x\n");
    auto named = validate_workspace(ws.root);
    REQUIRE(named.violations.size() == 1);
    CHECK(named.violations[0].kind == "naming");
    fs::remove(ws.runs_dir() / "fix-typo.md");

    FakeGit git;
    git.init(ws.root);
    put(ws.tmp_dir() / "scratch.txt", "x\n");
    git.stage(ws.root, {"pkg/tmp/scratch.txt"});
    auto pushed = validate_workspace(ws.root, &git);
    REQUIRE(pushed.violations.size() == 1);
    CHECK(pushed.violations[0].kind == "push-policy");

    put(ws.dir() / "stray.txt", "x\n");
    CHECK(validate_workspace(ws.root).violations.at(0).kind == "layout");
}
