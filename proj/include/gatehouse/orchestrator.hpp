#pragma once

// The leader. Selects a workflow, walks its DAG stage by stage, routes
// signals, runs the reviewer's mechanical checks and gates shipping.

#include <chrono>
#include <deque>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "gatehouse/agent_runtime.hpp"
#include "gatehouse/barrier.hpp"
#include "gatehouse/core.hpp"
#include "gatehouse/git.hpp"
#include "gatehouse/state_machine.hpp"
#include "gatehouse/workspace.hpp"

namespace gatehouse {

// ---------------------------------------------------------------------------
// User channel

enum class ChannelMode { Interactive, ScriptedAnswers };

/// The only path to the user. One question at a time; further questions
/// queue FIFO behind the pending one.
class UserChannel {
public:
    /// Answers are consumed in order; once they run out a question stays pending.
    static UserChannel scripted(std::vector<std::string> answers = {});
    /// Prompts on `out` and reads one line per answer from `in`.
    static UserChannel interactive(std::istream& in, std::ostream& out);

    ChannelMode mode() const noexcept { return mode_; }

    /// Leader only; anything else is a ProtocolViolation.
    void notify(AgentRole from, const std::string& message);
    void ask(AgentRole from, const std::string& question);
    std::optional<std::string> pending() const;
    std::size_t queued() const noexcept { return questions_.size(); }
    /// Answers the oldest pending question; nullopt when no answer is available.
    std::optional<std::string> await_answer();
    /// Queues an answer for a later await_answer().
    void supply(std::string answer);
    /// y/N question. A missing answer counts as no.
    bool confirm(AgentRole from, const std::string& question);

    /// "leader: ...", "leader? ..." and "user: ..." lines, in order.
    const std::vector<std::string>& transcript() const noexcept { return transcript_; }

private:
    UserChannel() = default;
    void say(const std::string& line);

    ChannelMode mode_ = ChannelMode::ScriptedAnswers;
    std::deque<std::string> answers_;
    std::deque<std::string> questions_;
    std::istream* in_ = nullptr;
    std::ostream* out_ = nullptr;
    std::vector<std::string> transcript_;
};

// ---------------------------------------------------------------------------
// Workflow selection

inline constexpr double kSelectionThreshold = 0.34;

struct WorkflowCandidate {
    int id = 0;
    double score = 0;
};

struct WorkflowSelection {
    std::optional<WorkflowType> workflow;
    /// Best first; at most two.
    std::vector<WorkflowCandidate> top;
    double confidence = 0;
    /// Set when the leader has to ask the user.
    std::optional<std::string> question;

    bool held() const noexcept { return !workflow.has_value(); }
};

/// Override wins; otherwise a keyword table scores every workflow and a
/// margin below kSelectionThreshold turns into a HOLD naming the top two.
/// Throws ConfigError when both inputs are empty.
WorkflowSelection select_workflow(std::string_view directive, std::optional<int> override_id = std::nullopt,
                                  int scheduled_inner = kDefaultScheduledInner);

/// Picks the candidate whose id appears in `answer`, else the top candidate.
WorkflowType resolve_selection(const WorkflowSelection& selection, std::string_view answer,
                               int scheduled_inner = kDefaultScheduledInner);

// ---------------------------------------------------------------------------
// Plan

struct PlannedStage {
    std::size_t index = 0;
    Stage roles;
    /// State the run must be in before the stage is dispatched.
    WorkflowState entry{};
    /// State reached once the stage completes.
    WorkflowState exit{};
    ArtifactSet produces;
    /// Everything the run must hold after this stage.
    ArtifactSet required_after;
};

struct DispatchPlan {
    WorkflowType workflow;
    std::vector<PlannedStage> stages;

    static DispatchPlan compile(const WorkflowType& workflow);
    const PlannedStage& stage_of(AgentRole role) const;
};

// ---------------------------------------------------------------------------
// Signal routing

enum class RouteKind { AskUser, Redispatch, RerunFrom, Escalate };

std::string_view to_string(RouteKind k) noexcept;

struct RoutingAction {
    RouteKind kind = RouteKind::Escalate;
    /// Roles to re-dispatch, in order.
    std::vector<AgentRole> redispatch;
    std::optional<std::size_t> rerun_from;
    /// Text appended to the re-dispatched briefings (or the HOLD question).
    std::string context;
    std::string reason;
};

/// Counts the signal (record_signal) and decides what happens next. BLOCK
/// targets come from the payload's `pipeline:` field (builder by default);
/// a target outside the workflow escalates.
RoutingAction route_signal(const Signal& s, const DispatchPlan& plan, RunState& run, Clock& clock);

/// BLOCK payload `pipeline:` value to a role: code, simulation or spec (or a role name).
AgentRole block_target(const Signal& s);

/// STOP target for a mechanical failure blamed on `at_fault`.
std::optional<AgentRole> forced_stop_target(AgentRole at_fault, const WorkflowType& workflow);

// ---------------------------------------------------------------------------
// Mechanical review

enum class CheckStatus { Pass, Fail, Attested };

std::string_view to_string(CheckStatus s) noexcept;

struct ReviewCheck {
    int number = 0;
    std::string name;
    CheckStatus status = CheckStatus::Pass;
    std::string detail;
    std::optional<AgentRole> at_fault;
};

struct MechanicalReviewReport {
    std::vector<ReviewCheck> checks;
    std::vector<IsolationViolation> isolation;

    bool passed() const noexcept;
    /// Role blamed by the first failing check.
    std::optional<AgentRole> at_fault() const;
    const ReviewCheck* check(int number) const;
};

/// Numeric values of tolerance-like tokens: `1e-6`, `1.5E-08`, `10^-6`, `10^{-6}`.
std::vector<double> tolerance_tokens(std::string_view text);

/// True when `md` has a markdown table with a header, a separator and at
/// least one data row.
bool has_result_table(std::string_view md);

/// Checks 1 (artifact presence), 2 (isolation), 6 (tolerance integrity) and
/// 7 (validation evidence); 3-5 are recorded as attested by the reviewer.
MechanicalReviewReport mechanical_review(const RunDirectory& run_dir, const std::vector<AccessLog>& logs,
                                         const DispatchPlan& plan);

// ---------------------------------------------------------------------------
// Ship gate

struct ShipGate {
    bool allowed = false;
    std::string reason;
};

ShipGate ship_gate(const std::optional<ReviewVerdict>& verdict, bool authorized);

// ---------------------------------------------------------------------------
// Reports

enum class RunOutcome {
    Completed,
    AwaitingAuthorization,
    Shipped,
    PartiallyShipped,
    AwaitingAnswer,
    Escalated,
    Failed,
    GateViolation,
    UsageError,
    EnvironmentFailure,
};

std::string_view to_string(RunOutcome o) noexcept;
std::optional<RunOutcome> parse_run_outcome(std::string_view text) noexcept;

/// 0 success, 1 usage, 2 gate/contract, 3 escalation/crash, 4 environment.
int exit_code_for(RunOutcome o) noexcept;

struct Diagnostic {
    std::optional<AgentRole> role;
    std::string kind;
    std::string message;
};

struct SignalRecord {
    SignalKind kind{};
    AgentRole raiser{};
    std::string action;
    std::string detail;
};

struct ShipReport {
    bool shipped = false;
    bool partial = false;
    std::string reason;
    std::vector<std::string> git_actions;
    std::optional<SyncReport> sync;
};

struct RunReport {
    std::string request_id;
    int workflow_id = 0;
    std::string workflow_name;
    WorkflowState final_state = WorkflowState::CredentialsVerified;
    RunOutcome outcome = RunOutcome::Completed;
    std::vector<std::string> history;
    std::map<SignalKind, int> retries;
    std::map<AgentRole, int> dispatches;
    /// "builder#2" style, in dispatch order.
    std::vector<std::string> dispatch_log;
    std::vector<SignalRecord> signals;
    std::vector<std::string> artifacts;
    std::optional<MechanicalReviewReport> review;
    std::vector<Diagnostic> diagnostics;
    std::vector<std::string> channel;
    std::optional<ShipReport> ship;
    /// Per-issue or per-iteration runs of workflows 4 and 8.
    std::vector<RunReport> children;
    std::string message;

    int exit_code() const noexcept { return exit_code_for(outcome); }
    int retry_count(SignalKind k) const {
        auto it = retries.find(k);
        return it == retries.end() ? 0 : it->second;
    }
    int dispatch_count(AgentRole r) const {
        auto it = dispatches.find(r);
        return it == dispatches.end() ? 0 : it->second;
    }
    std::string to_json() const;
    std::string to_text() const;
};

// ---------------------------------------------------------------------------
// Engine

struct Issue {
    std::string id;
    std::string title;
    std::string body;
};

/// Reads `[{"id": .., "title": .., "body": ..}]`.
std::vector<Issue> load_issues(const std::filesystem::path& path);

struct EngineOptions {
    std::filesystem::path target_repo;
    WorkspaceLayout workspace;
    std::string request_id;
    std::string directive;
    WorkflowType workflow;
    BackendConfig backends;
    /// Target repository git layer. Required.
    GitLayer* git = nullptr;
    /// Workspace repository git layer; sync stays local without one.
    GitLayer* workspace_git = nullptr;
    /// Required.
    UserChannel* channel = nullptr;
    /// Deterministic timestamps (logical clocks) for scripted runs.
    bool logical_clock = false;
    /// Skips detection when set.
    std::optional<LanguageProfile> language;
    /// Replaces the profile's validation commands.
    std::vector<std::string> validation_override;
    /// Workflow 4: issues to patrol; the directive is the only issue when empty.
    std::vector<Issue> issues;
    /// Workflow 8.
    int iterations = 1;
    std::chrono::milliseconds interval{0};
};

class Orchestrator {
public:
    explicit Orchestrator(EngineOptions opts);
    ~Orchestrator();
    Orchestrator(const Orchestrator&) = delete;
    Orchestrator& operator=(const Orchestrator&) = delete;

    /// Reloads a run from `<run>/run.json`. `base` supplies the workspace, git
    /// layers and channel; everything else comes from the journal.
    static std::unique_ptr<Orchestrator> reopen(EngineOptions base, const std::string& request_id);

    /// Leader setup followed by the DAG. Halts (rather than throws) on gate
    /// violations, escalations, unanswered HOLDs and backend failures.
    RunReport run();
    /// Continues a run halted on an unanswered HOLD.
    RunReport resume(const std::string& answer);
    /// Hard gate, then the SHIPPER dispatch, then DONE.
    RunReport ship(bool authorized);

    const RunState& state() const noexcept;
    const DispatchPlan& plan() const noexcept;
    RunDirectory run_dir() const;
    GitJournal& journal() noexcept;
    /// Report of the last run()/resume()/ship() call.
    const RunReport& report() const noexcept;

private:
    struct Impl;
    explicit Orchestrator(std::unique_ptr<Impl> impl);
    std::unique_ptr<Impl> impl_;
};

/// Path of the engine journal for a run.
inline std::filesystem::path run_journal_path(const WorkspaceLayout& ws, const std::string& request_id) {
    return ws.run_dir(request_id) / "run.json";
}

} // namespace gatehouse
