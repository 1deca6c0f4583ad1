#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gatehouse/clock.hpp"
#include "gatehouse/core.hpp"
#include "gatehouse/run_directory.hpp"

namespace gatehouse {

enum class Predicate { Exists, HasVerdict };

struct Requirement {
    ArtifactKind artifact{};
    Predicate predicate{};

    friend auto operator<=>(const Requirement&, const Requirement&) = default;
};

std::string describe(const Requirement& r);

struct PreconditionSet {
    WorkflowState state{};
    std::vector<Requirement> required;
};

/// Requirements for *entering* `state` in `workflow`. Artifacts whose
/// producer is not dispatched by the workflow are never required.
PreconditionSet preconditions(WorkflowState state, const WorkflowType& workflow);

struct GateResult {
    std::vector<Requirement> missing;

    bool satisfied() const noexcept { return missing.empty(); }
};

/// Throws IoError when the run directory cannot be read; a missing artifact
/// is a value in the result.
GateResult check_preconditions(WorkflowState state, const WorkflowType& workflow,
                               const RunDirectory& run_dir);

struct HistoryEntry {
    Timestamp at{};
    WorkflowState from{};
    /// Set for transitions.
    std::optional<WorkflowState> to;
    /// Set for signals.
    std::optional<SignalKind> signal;
    std::optional<AgentRole> raiser;
    std::string cause;

    bool is_transition() const noexcept { return to.has_value(); }
    friend bool operator==(const HistoryEntry&, const HistoryEntry&) = default;
};

struct RunState {
    WorkflowState current = WorkflowState::CredentialsVerified;
    WorkflowType workflow;
    std::map<SignalKind, int> retries;
    std::vector<HistoryEntry> history;

    explicit RunState(WorkflowType wf = {}) : workflow(std::move(wf)) {}

    int retry_count(SignalKind k) const {
        auto it = retries.find(k);
        return it == retries.end() ? 0 : it->second;
    }
};

inline constexpr int kMaxRetries = 3;

struct GateViolation {
    enum class Reason { MissingArtifacts, NotSuccessor };

    Reason reason = Reason::MissingArtifacts;
    WorkflowState attempted{};
    std::vector<Requirement> missing;

    std::string describe() const;
};

struct AdvanceOutcome {
    RunState run;
    std::optional<GateViolation> violation;

    bool advanced() const noexcept { return !violation.has_value(); }
};

/// Moves to the immediate successor iff its preconditions hold. Throws
/// TerminalStateError from DONE.
AdvanceOutcome advance(RunState run, const RunDirectory& run_dir, Clock& clock);

/// Requests a specific target; anything but the immediate successor is a
/// NotSuccessor violation.
AdvanceOutcome transition_to(RunState run, WorkflowState target, const RunDirectory& run_dir,
                             Clock& clock);

enum class RetryDecision { Retry, EscalateToUser };

/// Counts the signal against the per-kind cap. Throws ProtocolViolation if
/// the raiser does not own the signal.
RetryDecision record_signal(RunState& run, const Signal& s, Clock& clock);

/// True iff the transitions in `history` form a contiguous walk of the chain
/// starting at CREDENTIALS_VERIFIED and ending at `current`.
bool history_is_contiguous(const RunState& run);

/// status.md: one tab-separated line per history entry, in append order.
std::string render_status(const RunState& run);
/// Rebuilds history, current state and retry counters from status.md.
RunState parse_status(const std::string& status_md, WorkflowType workflow);

} // namespace gatehouse
