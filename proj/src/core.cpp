#include "gatehouse/core.hpp"

#include <algorithm>
#include <cctype>

#include "gatehouse/errors.hpp"
#include "text.hpp"

namespace gatehouse {

std::strong_ordering state_order(WorkflowState a, WorkflowState b) noexcept {
    return static_cast<int>(a) <=> static_cast<int>(b);
}

std::optional<WorkflowState> successor(WorkflowState s) noexcept {
    if (s == WorkflowState::Done) return std::nullopt;
    return static_cast<WorkflowState>(static_cast<int>(s) + 1);
}

std::string_view to_string(WorkflowState s) noexcept {
    switch (s) {
    case WorkflowState::CredentialsVerified: return "CREDENTIALS_VERIFIED";
    case WorkflowState::New: return "NEW";
    case WorkflowState::Planned: return "PLANNED";
    case WorkflowState::SpecReady: return "SPEC_READY";
    case WorkflowState::PipelinesComplete: return "PIPELINES_COMPLETE";
    case WorkflowState::Documented: return "DOCUMENTED";
    case WorkflowState::ReviewPassed: return "REVIEW_PASSED";
    case WorkflowState::ReadyToShip: return "READY_TO_SHIP";
    case WorkflowState::Done: return "DONE";
    }
    return "?";
}

std::optional<WorkflowState> parse_state(std::string_view text) noexcept {
    for (auto s : kAllStates)
        if (text::iequals(text, to_string(s))) return s;
    return std::nullopt;
}

std::string_view to_string(AgentRole r) noexcept {
    switch (r) {
    case AgentRole::Leader: return "leader";
    case AgentRole::Planner: return "planner";
    case AgentRole::Builder: return "builder";
    case AgentRole::Tester: return "tester";
    case AgentRole::Simulator: return "simulator";
    case AgentRole::Scriber: return "scriber";
    case AgentRole::Reviewer: return "reviewer";
    case AgentRole::Shipper: return "shipper";
    }
    return "?";
}

std::optional<AgentRole> parse_role(std::string_view text) noexcept {
    for (auto r : kAllRoles)
        if (text::iequals(text, to_string(r))) return r;
    return std::nullopt;
}

std::string_view to_string(SignalKind k) noexcept {
    switch (k) {
    case SignalKind::Hold: return "HOLD";
    case SignalKind::Block: return "BLOCK";
    case SignalKind::Stop: return "STOP";
    }
    return "?";
}

std::optional<SignalKind> parse_signal_kind(std::string_view text) noexcept {
    for (auto k : kAllSignalKinds)
        if (text::iequals(text, to_string(k))) return k;
    return std::nullopt;
}

std::optional<std::string> Signal::field(std::string_view key) const {
    for (auto line : text::split_lines(payload)) {
        auto t = text::trim(line);
        auto colon = t.find(':');
        if (colon == std::string_view::npos) continue;
        if (text::iequals(text::trim(t.substr(0, colon)), key))
            return std::string(text::trim(t.substr(colon + 1)));
    }
    return std::nullopt;
}

std::optional<AgentRole> Signal::route_target() const {
    auto v = field("route");
    if (!v) return std::nullopt;
    return parse_role(*v);
}

bool is_stop_route_target(AgentRole r) noexcept {
    return r == AgentRole::Planner || r == AgentRole::Builder || r == AgentRole::Simulator ||
           r == AgentRole::Scriber;
}

bool signal_owner_check(SignalKind kind, AgentRole raiser) noexcept {
    switch (kind) {
    case SignalKind::Hold:
        return raiser == AgentRole::Planner || raiser == AgentRole::Builder ||
               raiser == AgentRole::Scriber || raiser == AgentRole::Simulator;
    case SignalKind::Block: return raiser == AgentRole::Tester;
    case SignalKind::Stop: return raiser == AgentRole::Reviewer;
    }
    return false;
}

bool signal_owner_check(const Signal& s) noexcept {
    if (!signal_owner_check(s.kind, s.raiser)) return false;
    if (s.kind == SignalKind::Stop) {
        try {
            auto target = s.route_target();
            return target && is_stop_route_target(*target);
        } catch (...) {
            return false;
        }
    }
    return true;
}

std::string_view file_name(ArtifactKind k) noexcept {
    switch (k) {
    case ArtifactKind::Request: return "request.md";
    case ArtifactKind::Impact: return "impact.md";
    case ArtifactKind::Status: return "status.md";
    case ArtifactKind::Credentials: return "credentials.md";
    case ArtifactKind::Comprehension: return "comprehension.md";
    case ArtifactKind::Spec: return "spec.md";
    case ArtifactKind::TestSpec: return "test-spec.md";
    case ArtifactKind::SimSpec: return "sim-spec.md";
    case ArtifactKind::Implementation: return "implementation.md";
    case ArtifactKind::Audit: return "audit.md";
    case ArtifactKind::Simulation: return "simulation.md";
    case ArtifactKind::Architecture: return "Architecture.md";
    case ArtifactKind::LogEntry: return "log-entry.md";
    case ArtifactKind::Docs: return "docs.md";
    case ArtifactKind::Review: return "review.md";
    case ArtifactKind::Shipper: return "shipper.md";
    }
    return "?";
}

std::optional<ArtifactKind> parse_artifact(std::string_view name) noexcept {
    if (name == "ARCHITECTURE.md") return ArtifactKind::Architecture;
    for (auto k : kAllArtifacts)
        if (name == file_name(k)) return k;
    return std::nullopt;
}

AgentRole producer(ArtifactKind k) noexcept {
    switch (k) {
    case ArtifactKind::Request:
    case ArtifactKind::Impact:
    case ArtifactKind::Status:
    case ArtifactKind::Credentials: return AgentRole::Leader;
    case ArtifactKind::Comprehension:
    case ArtifactKind::Spec:
    case ArtifactKind::TestSpec:
    case ArtifactKind::SimSpec: return AgentRole::Planner;
    case ArtifactKind::Implementation: return AgentRole::Builder;
    case ArtifactKind::Audit: return AgentRole::Tester;
    case ArtifactKind::Simulation: return AgentRole::Simulator;
    case ArtifactKind::Architecture:
    case ArtifactKind::LogEntry:
    case ArtifactKind::Docs: return AgentRole::Scriber;
    case ArtifactKind::Review: return AgentRole::Reviewer;
    case ArtifactKind::Shipper: return AgentRole::Shipper;
    }
    return AgentRole::Leader;
}

bool is_specification(ArtifactKind k) noexcept {
    return k == ArtifactKind::Spec || k == ArtifactKind::TestSpec || k == ArtifactKind::SimSpec;
}

std::string_view to_string(Verdict v) noexcept {
    switch (v) {
    case Verdict::Pass: return "PASS";
    case Verdict::PassWithNote: return "PASS_WITH_NOTE";
    case Verdict::Stop: return "STOP";
    }
    return "?";
}

std::optional<ReviewVerdict> try_parse_review_verdict(std::string_view review_md) noexcept {
    try {
        auto lines = text::split_lines(review_md);
        if (lines.empty()) return std::nullopt;
        auto head = text::trim(lines.front());
        constexpr std::string_view kKey = "verdict:";
        if (head.substr(0, kKey.size()) != kKey) return std::nullopt;
        auto value = text::trim(head.substr(kKey.size()));
        std::optional<Verdict> v;
        for (auto c : {Verdict::Pass, Verdict::PassWithNote, Verdict::Stop})
            if (value == to_string(c)) v = c;
        if (!v) return std::nullopt;
        auto nl = review_md.find('\n');
        std::string notes = nl == std::string_view::npos ? std::string{}
                                                          : std::string(review_md.substr(nl + 1));
        return ReviewVerdict{*v, std::move(notes)};
    } catch (...) {
        return std::nullopt;
    }
}

ReviewVerdict parse_review_verdict(std::string_view review_md) {
    auto v = try_parse_review_verdict(review_md);
    if (!v)
        throw VerdictParseError(
            "review.md does not begin with 'verdict: PASS | PASS_WITH_NOTE | STOP'");
    return *v;
}

bool WorkflowType::dispatches(AgentRole r) const noexcept {
    for (const auto& stage : stages)
        if (std::find(stage.begin(), stage.end(), r) != stage.end()) return true;
    return false;
}

RoleSet WorkflowType::roles() const {
    RoleSet out;
    for (const auto& stage : stages) out.insert(stage.begin(), stage.end());
    return out;
}

std::optional<std::size_t> WorkflowType::stage_of(AgentRole r) const noexcept {
    for (std::size_t i = 0; i < stages.size(); ++i)
        if (std::find(stages[i].begin(), stages[i].end(), r) != stages[i].end()) return i;
    return std::nullopt;
}

WorkflowState WorkflowType::terminal_state() const noexcept {
    if (dispatches(AgentRole::Shipper)) return WorkflowState::Done;
    if (dispatches(AgentRole::Reviewer)) return WorkflowState::ReviewPassed;
    if (dispatches(AgentRole::Scriber)) return WorkflowState::Documented;
    return WorkflowState::PipelinesComplete;
}

namespace {

using R = AgentRole;

WorkflowType base_workflow(int id) {
    switch (id) {
    case 1:
        return {1, "Full Workflow",
                {{R::Planner}, {R::Builder, R::Tester, R::Simulator}, {R::Scriber}, {R::Reviewer}},
                false, 0};
    case 2:
        return {2, "Simple Code Fix + Shipping",
                {{R::Planner}, {R::Builder, R::Tester}, {R::Scriber}, {R::Reviewer}, {R::Shipper}},
                true, 0};
    case 3:
        return {3, "Documentation", {{R::Planner}, {R::Scriber}, {R::Reviewer}}, false, 0};
    case 5:
        return {5, "Single Issue Fix",
                {{R::Planner}, {R::Builder, R::Tester}, {R::Scriber}, {R::Reviewer}, {R::Shipper}},
                true, 0};
    case 6: return {6, "Validation", {{R::Tester}}, false, 0};
    case 7: return {7, "Code Review", {{R::Reviewer}}, false, 0};
    case 9: return {9, "Extremely Simple Fix", {{R::Builder}, {R::Tester}}, false, 0};
    case 10:
        return {10, "Monte Carlo Exercises",
                {{R::Planner}, {R::Simulator, R::Tester}, {R::Scriber}, {R::Reviewer}},
                false, 0};
    default: break;
    }
    throw ConfigError("unknown workflow id " + std::to_string(id));
}

} // namespace

WorkflowType workflow_by_id(int id, int scheduled_inner) {
    if (id == 4) {
        // Each issue spawns an independent workflow-2 run.
        auto inner = base_workflow(2);
        return {4, "Issue Patrol", inner.stages, true, 2};
    }
    if (id == 8) {
        if (scheduled_inner == 4 || scheduled_inner == 8)
            throw ConfigError("scheduled loop cannot wrap workflow " +
                              std::to_string(scheduled_inner));
        auto inner = base_workflow(scheduled_inner);
        return {8, "Scheduled Loop", inner.stages, inner.ships, scheduled_inner};
    }
    return base_workflow(id);
}

std::vector<WorkflowType> workflow_catalog() {
    std::vector<WorkflowType> out;
    for (int id = 1; id <= kWorkflowCount; ++id) out.push_back(workflow_by_id(id));
    return out;
}

ArtifactSet contracted_artifacts(AgentRole role, const WorkflowType& workflow) {
    ArtifactSet out;
    if (role == AgentRole::Leader) {
        return {ArtifactKind::Request, ArtifactKind::Impact, ArtifactKind::Status,
                ArtifactKind::Credentials};
    }
    if (!workflow.dispatches(role)) return out;
    switch (role) {
    case AgentRole::Planner:
        out.insert(ArtifactKind::Comprehension);
        if (workflow.dispatches(AgentRole::Builder)) out.insert(ArtifactKind::Spec);
        if (workflow.dispatches(AgentRole::Tester)) out.insert(ArtifactKind::TestSpec);
        if (workflow.dispatches(AgentRole::Simulator)) out.insert(ArtifactKind::SimSpec);
        break;
    case AgentRole::Builder: out.insert(ArtifactKind::Implementation); break;
    case AgentRole::Tester: out.insert(ArtifactKind::Audit); break;
    case AgentRole::Simulator: out.insert(ArtifactKind::Simulation); break;
    case AgentRole::Scriber:
        out = {ArtifactKind::Architecture, ArtifactKind::LogEntry, ArtifactKind::Docs};
        break;
    case AgentRole::Reviewer: out.insert(ArtifactKind::Review); break;
    case AgentRole::Shipper: out.insert(ArtifactKind::Shipper); break;
    case AgentRole::Leader: break;
    }
    return out;
}

ArtifactSet expected_artifacts(const WorkflowType& workflow) {
    ArtifactSet out = contracted_artifacts(AgentRole::Leader, workflow);
    for (auto r : workflow.roles()) {
        auto c = contracted_artifacts(r, workflow);
        out.insert(c.begin(), c.end());
    }
    return out;
}

} // namespace gatehouse
