#pragma once

// Shared vocabulary: states, roles, signals, artifacts, workflow catalog.
// Everything here is an immutable value type.

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace gatehouse {

enum class WorkflowState : std::uint8_t {
    CredentialsVerified,
    New,
    Planned,
    SpecReady,
    PipelinesComplete,
    Documented,
    ReviewPassed,
    ReadyToShip,
    Done,
};

inline constexpr std::array<WorkflowState, 9> kAllStates{
    WorkflowState::CredentialsVerified, WorkflowState::New,
    WorkflowState::Planned,             WorkflowState::SpecReady,
    WorkflowState::PipelinesComplete,   WorkflowState::Documented,
    WorkflowState::ReviewPassed,        WorkflowState::ReadyToShip,
    WorkflowState::Done,
};

std::strong_ordering state_order(WorkflowState a, WorkflowState b) noexcept;
std::optional<WorkflowState> successor(WorkflowState s) noexcept;
std::string_view to_string(WorkflowState s) noexcept;
std::optional<WorkflowState> parse_state(std::string_view text) noexcept;

enum class AgentRole : std::uint8_t {
    Leader,
    Planner,
    Builder,
    Tester,
    Simulator,
    Scriber,
    Reviewer,
    Shipper,
};

inline constexpr std::array<AgentRole, 8> kAllRoles{
    AgentRole::Leader,    AgentRole::Planner, AgentRole::Builder,
    AgentRole::Tester,    AgentRole::Simulator, AgentRole::Scriber,
    AgentRole::Reviewer,  AgentRole::Shipper,
};

/// Lowercase role name ("builder").
std::string_view to_string(AgentRole r) noexcept;
/// Accepts any case.
std::optional<AgentRole> parse_role(std::string_view text) noexcept;

/// Only the leader talks to the user.
constexpr bool may_use_user_channel(AgentRole r) noexcept { return r == AgentRole::Leader; }

enum class SignalKind : std::uint8_t { Hold, Block, Stop };

inline constexpr std::array<SignalKind, 3> kAllSignalKinds{SignalKind::Hold, SignalKind::Block,
                                                           SignalKind::Stop};

std::string_view to_string(SignalKind k) noexcept;
std::optional<SignalKind> parse_signal_kind(std::string_view text) noexcept;

/// An interrupt raised by an agent. The payload is free text; structured
/// fields are `key: value` lines inside it (`route:` for STOP, `pipeline:`
/// for BLOCK).
struct Signal {
    SignalKind kind{};
    AgentRole raiser{};
    std::string payload;

    /// Value of the first `key: value` line in the payload, trimmed.
    std::optional<std::string> field(std::string_view key) const;
    /// STOP routing target parsed from the `route:` line.
    std::optional<AgentRole> route_target() const;

    friend bool operator==(const Signal&, const Signal&) = default;
};

/// True iff (kind, raiser) is one of the six permitted pairs and, for STOP,
/// the payload names a legal routing target.
bool signal_owner_check(const Signal& s) noexcept;
bool signal_owner_check(SignalKind kind, AgentRole raiser) noexcept;
bool is_stop_route_target(AgentRole r) noexcept;

enum class ArtifactKind : std::uint8_t {
    Request,
    Impact,
    Status,
    Credentials,
    Comprehension,
    Spec,
    TestSpec,
    SimSpec,
    Implementation,
    Audit,
    Simulation,
    Architecture,
    LogEntry,
    Docs,
    Review,
    Shipper,
};

inline constexpr std::size_t kArtifactCount = 16;

inline constexpr std::array<ArtifactKind, kArtifactCount> kAllArtifacts{
    ArtifactKind::Request,        ArtifactKind::Impact,       ArtifactKind::Status,
    ArtifactKind::Credentials,    ArtifactKind::Comprehension, ArtifactKind::Spec,
    ArtifactKind::TestSpec,       ArtifactKind::SimSpec,      ArtifactKind::Implementation,
    ArtifactKind::Audit,          ArtifactKind::Simulation,   ArtifactKind::Architecture,
    ArtifactKind::LogEntry,       ArtifactKind::Docs,         ArtifactKind::Review,
    ArtifactKind::Shipper,
};

/// Canonical file name, e.g. "test-spec.md", "Architecture.md".
std::string_view file_name(ArtifactKind k) noexcept;
/// Accepts the canonical names plus "ARCHITECTURE.md".
std::optional<ArtifactKind> parse_artifact(std::string_view name) noexcept;
AgentRole producer(ArtifactKind k) noexcept;
/// spec.md, test-spec.md, sim-spec.md.
bool is_specification(ArtifactKind k) noexcept;

using ArtifactSet = std::set<ArtifactKind>;
using RoleSet = std::set<AgentRole>;

enum class Verdict : std::uint8_t { Pass, PassWithNote, Stop };

std::string_view to_string(Verdict v) noexcept;

struct ReviewVerdict {
    Verdict value{};
    std::string notes;

    bool permits_shipping() const noexcept { return value != Verdict::Stop; }
};

/// Parses the `verdict: PASS | PASS_WITH_NOTE | STOP` header that must open
/// review.md. Throws VerdictParseError when it is absent or malformed.
ReviewVerdict parse_review_verdict(std::string_view review_md);
std::optional<ReviewVerdict> try_parse_review_verdict(std::string_view review_md) noexcept;

using Stage = std::vector<AgentRole>;

struct WorkflowType {
    int id = 0;
    std::string name;
    std::vector<Stage> stages;
    bool ships = false;
    /// Workflows 4 and 8 wrap another workflow; 0 otherwise.
    int inner = 0;

    /// True iff `r` is dispatched in some stage.
    bool dispatches(AgentRole r) const noexcept;
    RoleSet roles() const;
    /// Index of the stage containing `r`, if any.
    std::optional<std::size_t> stage_of(AgentRole r) const noexcept;
    /// Last state a normal run of this workflow reaches.
    WorkflowState terminal_state() const noexcept;

    friend bool operator==(const WorkflowType&, const WorkflowType&) = default;
};

inline constexpr int kWorkflowCount = 10;
inline constexpr int kDefaultScheduledInner = 6;

/// Catalog entry 1..10. Workflow 8 uses `scheduled_inner` for its stages.
/// Throws ConfigError for an unknown id or an inner id that is itself a wrapper.
WorkflowType workflow_by_id(int id, int scheduled_inner = kDefaultScheduledInner);
std::vector<WorkflowType> workflow_catalog();

/// Artifacts `role` owes in `workflow`; empty if the role is not dispatched.
ArtifactSet contracted_artifacts(AgentRole role, const WorkflowType& workflow);

/// Union of every contracted artifact plus the leader's four.
ArtifactSet expected_artifacts(const WorkflowType& workflow);

} // namespace gatehouse
