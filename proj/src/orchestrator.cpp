#include "gatehouse/orchestrator.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <regex>
#include <sstream>

#include "gatehouse/errors.hpp"
#include "json.hpp"
#include "text.hpp"

using json = nlohmann::json;

namespace gatehouse {

// ---------------------------------------------------------------------------
// UserChannel

UserChannel UserChannel::scripted(std::vector<std::string> answers) {
    UserChannel c;
    c.mode_ = ChannelMode::ScriptedAnswers;
    c.answers_.assign(answers.begin(), answers.end());
    return c;
}

UserChannel UserChannel::interactive(std::istream& in, std::ostream& out) {
    UserChannel c;
    c.mode_ = ChannelMode::Interactive;
    c.in_ = &in;
    c.out_ = &out;
    return c;
}

void UserChannel::say(const std::string& line) {
    transcript_.push_back(line);
    if (out_) *out_ << line << std::endl;
}

void UserChannel::notify(AgentRole from, const std::string& message) {
    if (!may_use_user_channel(from))
        throw ProtocolViolation(std::string(to_string(from)) + " may not talk to the user");
    say("leader: " + message);
}

void UserChannel::ask(AgentRole from, const std::string& question) {
    if (!may_use_user_channel(from))
        throw ProtocolViolation(std::string(to_string(from)) + " may not talk to the user");
    questions_.push_back(question);
    if (questions_.size() == 1) say("leader? " + question);
}

std::optional<std::string> UserChannel::pending() const {
    if (questions_.empty()) return std::nullopt;
    return questions_.front();
}

std::optional<std::string> UserChannel::await_answer() {
    if (questions_.empty()) return std::nullopt;
    std::optional<std::string> answer;
    if (!answers_.empty()) {
        answer = std::move(answers_.front());
        answers_.pop_front();
    } else if (mode_ == ChannelMode::Interactive && in_) {
        if (out_) *out_ << "> " << std::flush;
        std::string line;
        if (std::getline(*in_, line)) answer = std::string(text::trim(line));
    }
    if (!answer) return std::nullopt;
    transcript_.push_back("user: " + *answer);
    questions_.pop_front();
    if (!questions_.empty()) say("leader? " + questions_.front());
    return answer;
}

void UserChannel::supply(std::string answer) { answers_.push_back(std::move(answer)); }

bool UserChannel::confirm(AgentRole from, const std::string& question) {
    ask(from, question + " [y/N]");
    auto a = await_answer();
    if (!a) {
        questions_.clear();
        return false;
    }
    auto v = text::lower(*a);
    return v == "y" || v == "yes";
}

// ---------------------------------------------------------------------------
// Selection

namespace {

struct Rule {
    int workflow;
    const char* phrase;
    double weight;
};

// Phrases are matched against the lowercased directive; single words must
// match whole words.
constexpr Rule kRules[] = {
    {1, "implement", 2}, {1, "paper", 2}, {1, "from scratch", 2}, {1, "estimator", 1},
    {1, "method", 1}, {1, "full workflow", 4},
    {2, "fix", 1}, {2, "failing", 2}, {2, "bug", 2}, {2, "broken", 2}, {2, "feature", 2},
    {2, "add", 1}, {2, "ship", 2}, {2, "push", 1}, {2, "build", 1},
    {3, "readme", 3}, {3, "vignette", 3}, {3, "documentation", 3}, {3, "docs", 3},
    {3, "docstring", 2}, {3, "docstrings", 2}, {3, "roxygen", 2}, {3, "tutorial", 1},
    {4, "issues", 3}, {4, "patrol", 4}, {4, "triage", 3},
    {5, "issue", 3}, {5, "closes", 2},
    {6, "validate", 3}, {6, "validation", 3}, {6, "run the tests", 3}, {6, "run tests", 3},
    {6, "test suite", 2}, {6, "check", 1},
    {7, "review", 3}, {7, "code review", 2}, {7, "audit", 2},
    {8, "daily", 3}, {8, "nightly", 3}, {8, "weekly", 3}, {8, "schedule", 3}, {8, "scheduled", 3},
    {8, "every day", 3}, {8, "recurring", 3},
    {9, "typo", 3}, {9, "trivial", 2}, {9, "one-line", 2}, {9, "quick fix", 2}, {9, "rename", 1},
    {10, "monte carlo", 3}, {10, "simulation", 3}, {10, "simulate", 3}, {10, "estimators", 1},
    {10, "coverage", 1}, {10, "finite-sample", 2}, {10, "bias", 1},
};

std::vector<std::string> words_of(std::string_view s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        auto u = static_cast<unsigned char>(c);
        if (std::isalnum(u) || c == '-') {
            cur += static_cast<char>(std::tolower(u));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

bool matches(const std::vector<std::string>& words, const std::string& joined, std::string_view phrase) {
    if (phrase.find(' ') != std::string_view::npos) return joined.find(phrase) != std::string::npos;
    return std::find(words.begin(), words.end(), phrase) != words.end();
}

} // namespace

WorkflowSelection select_workflow(std::string_view directive, std::optional<int> override_id,
                                  int scheduled_inner) {
    WorkflowSelection sel;
    if (override_id) {
        sel.workflow = workflow_by_id(*override_id, scheduled_inner);
        sel.top = {{*override_id, 1.0}};
        sel.confidence = 1.0;
        return sel;
    }
    if (text::trim(directive).empty()) throw ConfigError("a directive or a workflow override is required");

    auto words = words_of(directive);
    auto joined = " " + text::join(words, " ") + " ";
    std::map<int, double> score;
    for (const auto& r : kRules)
        if (matches(words, joined, r.phrase)) score[r.workflow] += r.weight;

    std::vector<WorkflowCandidate> ranked;
    for (int id = 1; id <= kWorkflowCount; ++id) ranked.push_back({id, score[id]});
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.score > b.score; });
    sel.top = {ranked[0], ranked[1]};
    const double best = ranked[0].score;
    sel.confidence = best > 0 ? (best - ranked[1].score) / best : 0.0;

    if (best > 0 && sel.confidence >= kSelectionThreshold) {
        sel.workflow = workflow_by_id(ranked[0].id, scheduled_inner);
        return sel;
    }
    if (best == 0) sel.top = {{2, 0}, {1, 0}};
    auto name = [&](int id) { return std::to_string(id) + " (" + workflow_by_id(id, scheduled_inner).name + ")"; };
    sel.question = "Which workflow fits this request: " + name(sel.top[0].id) + " or " + name(sel.top[1].id) + "?";
    return sel;
}

WorkflowType resolve_selection(const WorkflowSelection& selection, std::string_view answer,
                               int scheduled_inner) {
    if (selection.workflow) return *selection.workflow;
    if (selection.top.empty()) throw ConfigError("no workflow candidates to choose from");
    for (const auto& w : words_of(answer)) {
        for (const auto& c : selection.top)
            if (w == std::to_string(c.id)) return workflow_by_id(c.id, scheduled_inner);
    }
    return workflow_by_id(selection.top.front().id, scheduled_inner);
}

// ---------------------------------------------------------------------------
// Plan

namespace {

WorkflowState stage_target(const Stage& roles) {
    auto target = WorkflowState::SpecReady;
    for (auto r : roles) {
        WorkflowState t = WorkflowState::SpecReady;
        switch (r) {
        case AgentRole::Planner: t = WorkflowState::SpecReady; break;
        case AgentRole::Builder:
        case AgentRole::Tester:
        case AgentRole::Simulator: t = WorkflowState::PipelinesComplete; break;
        case AgentRole::Scriber: t = WorkflowState::Documented; break;
        case AgentRole::Reviewer: t = WorkflowState::ReviewPassed; break;
        case AgentRole::Shipper: t = WorkflowState::Done; break;
        case AgentRole::Leader: t = WorkflowState::Planned; break;
        }
        if (state_order(t, target) > 0) target = t;
    }
    return target;
}

WorkflowState predecessor(WorkflowState s) {
    auto prev = WorkflowState::CredentialsVerified;
    for (auto x : kAllStates) {
        if (x == s) return prev;
        prev = x;
    }
    return prev;
}

} // namespace

DispatchPlan DispatchPlan::compile(const WorkflowType& workflow) {
    DispatchPlan plan;
    plan.workflow = workflow;
    ArtifactSet acc = contracted_artifacts(AgentRole::Leader, workflow);
    for (std::size_t i = 0; i < workflow.stages.size(); ++i) {
        PlannedStage st;
        st.index = i;
        st.roles = workflow.stages[i];
        auto target = stage_target(st.roles);
        // Shipping enters from READY_TO_SHIP; everything else from the state below its target.
        st.entry = predecessor(target);
        st.exit = target;
        for (std::size_t j = i + 1; j < workflow.stages.size(); ++j)
            if (stage_target(workflow.stages[j]) == target) st.exit = st.entry;
        for (auto r : st.roles) {
            auto c = contracted_artifacts(r, workflow);
            st.produces.insert(c.begin(), c.end());
        }
        acc.insert(st.produces.begin(), st.produces.end());
        st.required_after = acc;
        plan.stages.push_back(std::move(st));
    }
    return plan;
}

const PlannedStage& DispatchPlan::stage_of(AgentRole role) const {
    for (const auto& s : stages)
        if (std::find(s.roles.begin(), s.roles.end(), role) != s.roles.end()) return s;
    throw ConfigError(std::string(to_string(role)) + " is not in the DAG of workflow " +
                      std::to_string(workflow.id));
}

// ---------------------------------------------------------------------------
// Routing

std::string_view to_string(RouteKind k) noexcept {
    switch (k) {
    case RouteKind::AskUser: return "ask-user";
    case RouteKind::Redispatch: return "redispatch";
    case RouteKind::RerunFrom: return "rerun";
    case RouteKind::Escalate: return "escalate";
    }
    return "?";
}

AgentRole block_target(const Signal& s) {
    auto field = s.field("pipeline");
    if (!field) return AgentRole::Builder;
    auto v = text::lower(*field);
    if (v == "simulation" || v == "sim" || v == "simulator") return AgentRole::Simulator;
    if (v == "spec" || v == "specification" || v == "planner") return AgentRole::Planner;
    return AgentRole::Builder;
}

RoutingAction route_signal(const Signal& s, const DispatchPlan& plan, RunState& run, Clock& clock) {
    RoutingAction a;
    a.context = s.payload;
    if (record_signal(run, s, clock) == RetryDecision::EscalateToUser) {
        a.kind = RouteKind::Escalate;
        a.reason = std::string(to_string(s.kind)) + " from " + std::string(to_string(s.raiser)) +
                   " after " + std::to_string(kMaxRetries) + " retry cycles";
        return a;
    }
    const auto& wf = plan.workflow;
    switch (s.kind) {
    case SignalKind::Hold:
        a.kind = RouteKind::AskUser;
        a.redispatch = {s.raiser};
        a.reason = "question from " + std::string(to_string(s.raiser));
        break;
    case SignalKind::Block: {
        auto target = block_target(s);
        if (!wf.dispatches(target)) {
            a.kind = RouteKind::Escalate;
            a.reason = "BLOCK needs " + std::string(to_string(target)) + ", which workflow " +
                       std::to_string(wf.id) + " does not dispatch";
            break;
        }
        a.kind = RouteKind::Redispatch;
        a.redispatch = {target, AgentRole::Tester};
        a.reason = "validation failure routed to " + std::string(to_string(target));
        break;
    }
    case SignalKind::Stop: {
        auto target = *s.route_target();
        if (!wf.dispatches(target)) {
            a.kind = RouteKind::Escalate;
            a.reason = "STOP routes to " + std::string(to_string(target)) + ", which workflow " +
                       std::to_string(wf.id) + " does not dispatch";
            break;
        }
        a.kind = RouteKind::RerunFrom;
        a.redispatch = {target};
        a.rerun_from = plan.stage_of(target).index;
        a.reason = "quality gate routed to " + std::string(to_string(target));
        break;
    }
    }
    return a;
}

std::optional<AgentRole> forced_stop_target(AgentRole at_fault, const WorkflowType& wf) {
    auto legal = [&](AgentRole r) { return is_stop_route_target(r) && wf.dispatches(r); };
    if (legal(at_fault)) return at_fault;
    auto idx = wf.stage_of(at_fault);
    if (!idx) return std::nullopt;
    for (auto r : wf.stages[*idx])
        if (legal(r)) return r;
    for (auto i = *idx; i-- > 0;)
        for (auto r : wf.stages[i])
            if (legal(r)) return r;
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Mechanical review

std::string_view to_string(CheckStatus s) noexcept {
    switch (s) {
    case CheckStatus::Pass: return "pass";
    case CheckStatus::Fail: return "fail";
    case CheckStatus::Attested: return "attested";
    }
    return "?";
}

bool MechanicalReviewReport::passed() const noexcept {
    return std::none_of(checks.begin(), checks.end(),
                        [](const ReviewCheck& c) { return c.status == CheckStatus::Fail; });
}

std::optional<AgentRole> MechanicalReviewReport::at_fault() const {
    for (const auto& c : checks)
        if (c.status == CheckStatus::Fail) return c.at_fault;
    return std::nullopt;
}

const ReviewCheck* MechanicalReviewReport::check(int number) const {
    for (const auto& c : checks)
        if (c.number == number) return &c;
    return nullptr;
}

std::vector<double> tolerance_tokens(std::string_view body) {
    static const std::regex sci(R"((^|[^\w.])(\d+(?:\.\d+)?)[eE]([-+]?\d+)(?![\w.]))");
    static const std::regex pow10(R"((^|[^\w.])10\s*\^\s*\{?\s*([-+]?\d+)\s*\}?)");
    std::vector<double> out;
    std::string s(body);
    for (auto it = std::sregex_iterator(s.begin(), s.end(), sci); it != std::sregex_iterator(); ++it)
        out.push_back(std::stod((*it)[2].str() + "e" + (*it)[3].str()));
    for (auto it = std::sregex_iterator(s.begin(), s.end(), pow10); it != std::sregex_iterator(); ++it)
        out.push_back(std::pow(10.0, std::stod((*it)[2].str())));
    return out;
}

bool has_result_table(std::string_view md) {
    static const std::regex separator(R"(^\|?\s*:?-{3,}:?\s*(\|\s*:?-{3,}:?\s*)*\|?$)");
    auto lines = text::split_lines(md);
    for (std::size_t i = 0; i + 2 < lines.size(); ++i) {
        auto header = text::trim(lines[i]);
        if (header.empty() || header.front() != '|') continue;
        if (!std::regex_match(std::string(text::trim(lines[i + 1])), separator)) continue;
        for (std::size_t j = i + 2; j < lines.size(); ++j) {
            auto row = text::trim(lines[j]);
            if (row.empty() || row.front() != '|') break;
            for (const auto& cell : text::split(row, '|'))
                if (!text::trim(cell).empty()) return true;
        }
    }
    return false;
}

namespace {

bool same_value(double a, double b) { return std::fabs(a - b) <= 1e-12 * std::max(std::fabs(a), std::fabs(b)); }

} // namespace

MechanicalReviewReport mechanical_review(const RunDirectory& run_dir, const std::vector<AccessLog>& logs,
                                         const DispatchPlan& plan) {
    MechanicalReviewReport report;
    const auto& wf = plan.workflow;
    RoleSet dispatched;
    for (auto r : wf.roles())
        if (r != AgentRole::Shipper) dispatched.insert(r);

    // (1) Comprehension and the artifacts every dispatched role owes.
    {
        ReviewCheck c{1, "comprehension verification", CheckStatus::Pass, "", std::nullopt};
        std::vector<std::string> missing;
        for (auto r : dispatched) {
            for (auto k : contracted_artifacts(r, wf)) {
                if (run_dir.exists(k)) continue;
                missing.emplace_back(file_name(k));
                if (!c.at_fault) c.at_fault = r;
            }
        }
        if (!missing.empty()) {
            c.status = CheckStatus::Fail;
            c.detail = "missing: " + text::join(missing, ", ");
        } else {
            c.detail = dispatched.count(AgentRole::Planner) ? "comprehension.md and all contracted artifacts present"
                                                            : "all contracted artifacts present";
        }
        report.checks.push_back(std::move(c));
    }

    // (2) Pipeline isolation.
    {
        ReviewCheck c{2, "pipeline isolation", CheckStatus::Pass, "", std::nullopt};
        try {
            auto iso = audit_isolation(logs, dispatched);
            report.isolation = iso.violations;
            if (!iso.clean()) {
                c.status = CheckStatus::Fail;
                const auto& v = iso.violations.front();
                c.at_fault = v.role;
                c.detail = std::to_string(iso.violations.size()) + " violation(s); first: " +
                           std::string(to_string(v.role)) + " " + std::string(to_string(v.kind)) + " " +
                           std::string(file_name(v.artifact));
            } else {
                c.detail = "no cross-pipeline access";
            }
        } catch (const IncompleteAuditError& e) {
            c.status = CheckStatus::Fail;
            c.detail = std::string("incomplete audit: ") + e.what();
            RoleSet seen;
            for (const auto& l : logs) seen.insert(l.role);
            for (auto r : dispatched)
                if (!seen.count(r)) {
                    c.at_fault = r;
                    break;
                }
        }
        report.checks.push_back(std::move(c));
    }

    report.checks.push_back({3, "specification cross-comparison", CheckStatus::Attested,
                             "delegated to the reviewer backend", std::nullopt});
    report.checks.push_back({4, "pipeline convergence", CheckStatus::Attested,
                             "delegated to the reviewer backend", std::nullopt});
    report.checks.push_back({5, "test coverage of changed paths", CheckStatus::Attested,
                             "delegated to the reviewer backend", std::nullopt});

    // (6) Tolerances in audit.md must come from test-spec.md and never be looser.
    {
        ReviewCheck c{6, "tolerance integrity", CheckStatus::Pass, "", std::nullopt};
        auto spec = run_dir.try_read(ArtifactKind::TestSpec);
        auto audit = run_dir.try_read(ArtifactKind::Audit);
        if (!dispatched.count(AgentRole::Tester) || !spec || !audit) {
            c.detail = "not applicable";
        } else {
            auto specified = tolerance_tokens(*spec);
            if (specified.empty()) {
                c.detail = "test-spec.md specifies no tolerance";
            } else {
                const double tightest = *std::min_element(specified.begin(), specified.end());
                std::vector<std::string> inflated;
                for (double t : tolerance_tokens(*audit)) {
                    bool listed = std::any_of(specified.begin(), specified.end(),
                                              [&](double s) { return same_value(s, t); });
                    if (!listed && t > tightest) {
                        std::ostringstream ss;
                        ss << t;
                        inflated.push_back(ss.str());
                    }
                }
                if (inflated.empty()) {
                    c.detail = "no inflation detected";
                } else {
                    std::ostringstream ss;
                    ss << "audit.md uses " << text::join(inflated, ", ") << " looser than test-spec.md ("
                       << tightest << ")";
                    c.status = CheckStatus::Fail;
                    c.detail = ss.str();
                    c.at_fault = AgentRole::Tester;
                }
            }
        }
        report.checks.push_back(std::move(c));
    }

    // (7) Validation evidence: non-empty result tables.
    {
        ReviewCheck c{7, "validation evidence completeness", CheckStatus::Pass, "", std::nullopt};
        std::vector<std::string> found;
        auto need = [&](AgentRole role, ArtifactKind k) {
            if (!dispatched.count(role) || c.status == CheckStatus::Fail) return;
            auto body = run_dir.try_read(k);
            if (body && has_result_table(*body)) {
                found.emplace_back(file_name(k));
                return;
            }
            c.status = CheckStatus::Fail;
            c.at_fault = role;
            c.detail = std::string(file_name(k)) + (body ? " has no result table" : " is missing");
        };
        need(AgentRole::Tester, ArtifactKind::Audit);
        need(AgentRole::Simulator, ArtifactKind::Simulation);
        if (c.status == CheckStatus::Pass)
            c.detail = found.empty() ? "not applicable" : "result tables in " + text::join(found, ", ");
        report.checks.push_back(std::move(c));
    }
    return report;
}

// ---------------------------------------------------------------------------
// Ship gate

ShipGate ship_gate(const std::optional<ReviewVerdict>& verdict, bool authorized) {
    if (!verdict) return {false, "review.md carries no verdict"};
    if (!verdict->permits_shipping()) return {false, "review verdict is STOP"};
    if (!authorized) return {false, "shipping awaits explicit user authorization"};
    return {true, "verdict " + std::string(to_string(verdict->value)) + " and user authorization"};
}

// ---------------------------------------------------------------------------
// Reports

std::string_view to_string(RunOutcome o) noexcept {
    switch (o) {
    case RunOutcome::Completed: return "completed";
    case RunOutcome::AwaitingAuthorization: return "awaiting-authorization";
    case RunOutcome::Shipped: return "shipped";
    case RunOutcome::PartiallyShipped: return "partially-shipped";
    case RunOutcome::AwaitingAnswer: return "awaiting-answer";
    case RunOutcome::Escalated: return "escalated";
    case RunOutcome::Failed: return "failed";
    case RunOutcome::GateViolation: return "gate-violation";
    case RunOutcome::UsageError: return "usage-error";
    case RunOutcome::EnvironmentFailure: return "environment-failure";
    }
    return "?";
}

std::optional<RunOutcome> parse_run_outcome(std::string_view text) noexcept {
    for (auto o : {RunOutcome::Completed, RunOutcome::AwaitingAuthorization, RunOutcome::Shipped,
                   RunOutcome::PartiallyShipped, RunOutcome::AwaitingAnswer, RunOutcome::Escalated,
                   RunOutcome::Failed, RunOutcome::GateViolation, RunOutcome::UsageError,
                   RunOutcome::EnvironmentFailure})
        if (to_string(o) == text) return o;
    return std::nullopt;
}

int exit_code_for(RunOutcome o) noexcept {
    switch (o) {
    case RunOutcome::Completed:
    case RunOutcome::AwaitingAuthorization:
    case RunOutcome::Shipped: return 0;
    case RunOutcome::UsageError: return 1;
    case RunOutcome::GateViolation: return 2;
    case RunOutcome::PartiallyShipped:
    case RunOutcome::AwaitingAnswer:
    case RunOutcome::Escalated:
    case RunOutcome::Failed: return 3;
    case RunOutcome::EnvironmentFailure: return 4;
    }
    return 3;
}

namespace {

json report_json(const RunReport& r) {
    json j;
    j["request_id"] = r.request_id;
    j["workflow"] = {{"id", r.workflow_id}, {"name", r.workflow_name}};
    j["final_state"] = to_string(r.final_state);
    j["outcome"] = to_string(r.outcome);
    j["exit_code"] = r.exit_code();
    j["history"] = r.history;
    json retries = json::object();
    for (auto k : kAllSignalKinds) retries[std::string(to_string(k))] = r.retry_count(k);
    j["retries"] = retries;
    json dispatches = json::object();
    for (const auto& [role, n] : r.dispatches) dispatches[std::string(to_string(role))] = n;
    j["dispatches"] = dispatches;
    j["dispatch_log"] = r.dispatch_log;
    j["signals"] = json::array();
    for (const auto& s : r.signals)
        j["signals"].push_back({{"kind", to_string(s.kind)},
                                {"raiser", to_string(s.raiser)},
                                {"action", s.action},
                                {"detail", s.detail}});
    j["artifacts"] = r.artifacts;
    if (r.review) {
        json checks = json::array();
        for (const auto& c : r.review->checks) {
            json cj{{"number", c.number}, {"name", c.name}, {"status", to_string(c.status)}, {"detail", c.detail}};
            if (c.at_fault) cj["at_fault"] = to_string(*c.at_fault);
            checks.push_back(std::move(cj));
        }
        j["mechanical_review"] = {{"passed", r.review->passed()}, {"checks", checks}};
    }
    j["diagnostics"] = json::array();
    for (const auto& d : r.diagnostics) {
        json dj{{"kind", d.kind}, {"message", d.message}};
        if (d.role) dj["role"] = to_string(*d.role);
        j["diagnostics"].push_back(std::move(dj));
    }
    j["channel"] = r.channel;
    if (r.ship) {
        json sj{{"shipped", r.ship->shipped}, {"partial", r.ship->partial}, {"reason", r.ship->reason},
                {"git_actions", r.ship->git_actions}};
        if (r.ship->sync)
            sj["workspace_sync"] = {{"status", to_string(r.ship->sync->status)},
                                    {"runs_file", r.ship->sync->runs_file},
                                    {"changelog_added", r.ship->sync->changelog_added},
                                    {"pushed", r.ship->sync->pushed},
                                    {"rolled_back", r.ship->sync->rolled_back},
                                    {"message", r.ship->sync->message}};
        j["ship"] = std::move(sj);
    }
    if (!r.children.empty()) {
        j["children"] = json::array();
        for (const auto& c : r.children) j["children"].push_back(report_json(c));
    }
    j["message"] = r.message;
    return j;
}

} // namespace

std::string RunReport::to_json() const { return report_json(*this).dump(2) + "\n"; }

std::string RunReport::to_text() const {
    std::ostringstream ss;
    ss << "run " << request_id << "\n";
    ss << "workflow: " << workflow_id << " " << workflow_name << "\n";
    ss << "state: " << to_string(final_state) << "\n";
    ss << "outcome: " << to_string(outcome) << " (exit " << exit_code() << ")\n";
    if (!message.empty()) ss << "message: " << message << "\n";
    ss << "retries:";
    for (auto k : kAllSignalKinds) ss << " " << to_string(k) << "=" << retry_count(k);
    ss << "\n";
    if (!dispatches.empty()) {
        ss << "dispatches:";
        for (const auto& [role, n] : dispatches) ss << " " << to_string(role) << "=" << n;
        ss << "\n";
    }
    for (const auto& s : signals)
        ss << "signal: " << to_string(s.kind) << " from " << to_string(s.raiser) << " -> " << s.action
           << (s.detail.empty() ? "" : " (" + s.detail + ")") << "\n";
    if (review) {
        ss << "mechanical review: " << (review->passed() ? "passed" : "FAILED") << "\n";
        for (const auto& c : review->checks)
            ss << "  (" << c.number << ") " << c.name << ": " << to_string(c.status)
               << (c.detail.empty() ? "" : " - " + c.detail) << "\n";
    }
    for (const auto& d : diagnostics)
        ss << "diagnostic: " << (d.role ? std::string(to_string(*d.role)) + " " : "") << d.kind << ": "
           << d.message << "\n";
    ss << "artifacts: " << text::join(artifacts, ", ") << "\n";
    if (ship) {
        ss << "ship: " << (ship->shipped ? (ship->partial ? "partial" : "done") : "refused") << " - "
           << ship->reason << "\n";
        for (const auto& a : ship->git_actions) ss << "  git " << a << "\n";
        if (ship->sync)
            ss << "  workspace sync: " << to_string(ship->sync->status)
               << (ship->sync->message.empty() ? "" : " - " + ship->sync->message) << "\n";
    }
    for (const auto& c : children) {
        ss << "--- child\n" << c.to_text();
    }
    ss << "history:\n";
    for (const auto& h : history) ss << "  " << h << "\n";
    return ss.str();
}

std::vector<Issue> load_issues(const std::filesystem::path& path) {
    std::vector<Issue> out;
    try {
        auto j = json::parse(read_file(path));
        for (const auto& e : j) {
            Issue i;
            i.id = e.at("id").is_string() ? e.at("id").get<std::string>() : std::to_string(e.at("id").get<long long>());
            i.title = e.value("title", std::string{});
            i.body = e.value("body", std::string{});
            out.push_back(std::move(i));
        }
    } catch (const json::exception& e) {
        throw ConfigError("issues file " + path.string() + ": " + e.what());
    }
    return out;
}

} // namespace gatehouse
