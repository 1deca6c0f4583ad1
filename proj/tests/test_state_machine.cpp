#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "gatehouse/errors.hpp"
#include "gatehouse/state_machine.hpp"
#include "support.hpp"

using namespace gatehouse;
using namespace gatehouse::testing;
using S = WorkflowState;
using A = ArtifactKind;

namespace {

struct Run {
    TempDir tmp{"gh-sm"};
    RunDirectory dir{tmp / "run"};
    LogicalClock clock;
    Run() { dir.create(); }
};

} // namespace

TEST_CASE("SPEC_READY preconditions") {
    Run r;
    auto wf = workflow_by_id(2);
    CHECK(check_preconditions(S::SpecReady, wf, r.dir).missing.size() == 3);
    r.dir.write(A::Comprehension, "Self-test verdict: FULLY UNDERSTOOD\n");
    r.dir.write(A::Spec, "spec\n");
    r.dir.write(A::TestSpec, "test spec\n");
    CHECK(check_preconditions(S::SpecReady, wf, r.dir).satisfied());
}

TEST_CASE("REVIEW_PASSED needs a PASS-variant verdict") {
    Run r;
    auto wf = workflow_by_id(7);
    r.dir.write(A::Review, "verdict: STOP\nroute: builder\n");
    auto g = check_preconditions(S::ReviewPassed, wf, r.dir);
    REQUIRE(g.missing.size() == 1);
    CHECK(g.missing[0] == Requirement{A::Review, Predicate::HasVerdict});
    r.dir.write(A::Review, "verdict: PASS_WITH_NOTE\n");
    CHECK(check_preconditions(S::ReviewPassed, wf, r.dir).satisfied());
}

TEST_CASE("preconditions skip artifacts of absent producers") {
    for (const auto& req : preconditions(S::PipelinesComplete, workflow_by_id(3)).required)
        CHECK(req.artifact != A::Implementation);
}

TEST_CASE("advance walks one step at a time") {
    Run r;
    RunState run(workflow_by_id(2));
    auto out = advance(run, r.dir, r.clock);
    CHECK_FALSE(out.advanced());
    CHECK(out.run.current == S::CredentialsVerified);

    r.dir.write(A::Credentials, "ok\n");
    out = advance(out.run, r.dir, r.clock);
    REQUIRE(out.advanced());
    CHECK(out.run.current == S::New);

    r.dir.write(A::Request, "r\n");
    r.dir.write(A::Impact, "i\n");
    out = advance(out.run, r.dir, r.clock);
    CHECK(out.run.current == S::Planned);
    CHECK(history_is_contiguous(out.run));
    CHECK(out.run.history.size() == 2);
}

TEST_CASE("skipping a state is a violation") {
    Run r;
    RunState run(workflow_by_id(2));
    run.current = S::New;
    auto out = transition_to(run, S::SpecReady, r.dir, r.clock);
    REQUIRE(out.violation);
    CHECK(out.violation->reason == GateViolation::Reason::NotSuccessor);
    CHECK(out.run.current == S::New);
}

TEST_CASE("REVIEW_PASSED to READY_TO_SHIP on PASS") {
    Run r;
    RunState run(workflow_by_id(2));
    run.current = S::ReviewPassed;
    r.dir.write(A::Review, "verdict: PASS\n");
    auto out = advance(run, r.dir, r.clock);
    CHECK(out.advanced());
    CHECK(out.run.current == S::ReadyToShip);
}

TEST_CASE("DONE is terminal") {
    Run r;
    RunState run(workflow_by_id(2));
    run.current = S::Done;
    CHECK_THROWS_AS(advance(run, r.dir, r.clock), TerminalStateError);
}

TEST_CASE("retry cap") {
    LogicalClock clock;
    RunState run(workflow_by_id(2));
    Signal block{SignalKind::Block, AgentRole::Tester, "pipeline: code"};
    CHECK(record_signal(run, block, clock) == RetryDecision::Retry);
    CHECK(record_signal(run, block, clock) == RetryDecision::Retry);
    CHECK(record_signal(run, block, clock) == RetryDecision::Retry);
    CHECK(record_signal(run, block, clock) == RetryDecision::EscalateToUser);
    CHECK(run.retry_count(SignalKind::Block) == 3);
    CHECK(run.retry_count(SignalKind::Hold) == 0);
    Signal wrong{SignalKind::Block, AgentRole::Builder, ""};
    CHECK_THROWS_AS(record_signal(run, wrong, clock), ProtocolViolation);
}

TEST_CASE("status.md round-trips") {
    Run r;
    RunState run(workflow_by_id(2));
    r.dir.write(A::Credentials, "ok\n");
    run = advance(run, r.dir, r.clock).run;
    record_signal(run, Signal{SignalKind::Hold, AgentRole::Builder, "which\testimator?"}, r.clock);
    auto text = render_status(run);
    auto back = parse_status(text, workflow_by_id(2));
    CHECK(back.current == S::New);
    CHECK(back.retry_count(SignalKind::Hold) == 1);
    CHECK(back.history.size() == run.history.size());
    CHECK(render_status(back) == text);
    CHECK_THROWS_AS(parse_status("garbage line\n", workflow_by_id(2)), IoError);
}

TEST_CASE("non-contiguous history is detected") {
    RunState run(workflow_by_id(2));
    LogicalClock clock;
    run.history.push_back({clock.now(), S::CredentialsVerified, S::New, {}, {}, "gate satisfied"});
    run.history.push_back({clock.now(), S::Planned, S::SpecReady, {}, {}, "gate satisfied"});
    run.current = S::SpecReady;
    CHECK_FALSE(history_is_contiguous(run));
}
