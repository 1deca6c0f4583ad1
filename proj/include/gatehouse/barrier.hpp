#pragma once

// Information barriers. Each role reads only the artifacts granted to it;
// grants are materialized into a per-role sandbox as copies, and every check
// lands in an append-only audit log that the reviewer's isolation check
// replays afterwards.

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "gatehouse/clock.hpp"
#include "gatehouse/core.hpp"
#include "gatehouse/git.hpp"
#include "gatehouse/run_directory.hpp"

namespace gatehouse {

enum class AccessDecision { Allow, Deny };

/// EXPOSED marks a non-granted artifact found inside a sandbox after dispatch.
enum class AuditEvent { Allow, Deny, Exposed };

std::string_view to_string(AuditEvent e) noexcept;

struct AccessEntry {
    Timestamp at{};
    AgentRole role{};
    ArtifactKind artifact{};
    AuditEvent event{};

    friend bool operator==(const AccessEntry&, const AccessEntry&) = default;
};

/// `timestamp<TAB>role<TAB>artifact<TAB>decision`
std::string format_entry(const AccessEntry& e);
/// Throws IoError on a malformed line.
std::vector<AccessEntry> parse_access_log(const std::string& text);

/// Append-only, safe for concurrent writers.
class AuditLog {
public:
    void append(AccessEntry e);
    std::vector<AccessEntry> entries() const;
    std::size_t size() const;
    std::string render() const;

private:
    mutable std::mutex mu_;
    std::vector<AccessEntry> entries_;
};

/// Default-deny grant table.
class AccessMatrix {
public:
    /// The engine's matrix. From PIPELINES_COMPLETE on, TESTER additionally
    /// reads implementation.md and simulation.md.
    static AccessMatrix canonical(WorkflowState state = WorkflowState::CredentialsVerified);
    static AccessMatrix deny_all() { return {}; }

    bool grants(AgentRole role, ArtifactKind kind) const;
    ArtifactSet readable(AgentRole role) const;

    AccessMatrix& grant(AgentRole role, ArtifactKind kind);
    AccessMatrix& revoke(AgentRole role, ArtifactKind kind);

private:
    std::map<AgentRole, ArtifactSet> grants_;
};

/// Pure decision plus one audit entry, whatever the outcome.
AccessDecision check_access(const AccessMatrix& m, AgentRole role, ArtifactKind kind, AuditLog& log,
                            Clock& clock);

/// Roles that get their own git worktree.
bool uses_worktree(AgentRole role) noexcept;

struct SandboxOptions {
    /// Directory that becomes the sandbox root; created if needed.
    std::filesystem::path root;
    /// Checkout the worktree is branched from.
    std::filesystem::path base_repo;
    std::string request_id;
    GitLayer* git = nullptr;
    GitJournal* journal = nullptr;
    RunDirectory run_dir;
    Clock* clock = nullptr;
    /// Artifacts to copy in. Defaults to every granted artifact present in
    /// the run directory; naming a non-granted one is a BarrierViolation.
    std::optional<std::vector<ArtifactKind>> materialize;
};

/// A role's isolated view: artifact copies at the root, an optional git
/// worktree under `repo/`, and the role's audit log.
class Sandbox {
public:
    Sandbox(AgentRole role, std::filesystem::path root, std::optional<std::filesystem::path> worktree,
            std::string branch);

    AgentRole role() const noexcept { return role_; }
    const std::filesystem::path& root() const noexcept { return root_; }
    const std::optional<std::filesystem::path>& worktree_path() const noexcept { return worktree_; }
    const std::string& branch() const noexcept { return branch_; }
    const ArtifactSet& visible_artifacts() const noexcept { return visible_; }
    AuditLog& audit() noexcept { return *audit_; }
    const AuditLog& audit() const noexcept { return *audit_; }

    /// Resolves a sandbox-relative path. Rejects absolute paths, `..`
    /// components and symlinks that lead outside the root (BarrierViolation).
    std::filesystem::path resolve(std::string_view relative) const;

    /// Reads a materialized artifact through the barrier. nullopt when denied
    /// or not yet produced; the attempt is logged either way.
    std::optional<std::string> read_artifact(ArtifactKind kind, const AccessMatrix& m, Clock& clock);

    /// Artifact files at the root that `role()` produces.
    ArtifactSet produced() const;
    /// Artifact files at the root that are neither produced by the role nor
    /// granted to it.
    ArtifactSet foreign_artifacts(const AccessMatrix& m) const;

    /// Re-copies the currently granted artifacts from the run directory and
    /// drops copies that are no longer granted.
    void refresh(const AccessMatrix& m, const RunDirectory& run_dir, Clock& clock);

private:
    friend Sandbox materialize_sandbox(AgentRole, const SandboxOptions&, const AccessMatrix&, bool);

    AgentRole role_;
    std::filesystem::path root_;
    std::optional<std::filesystem::path> worktree_;
    std::string branch_;
    ArtifactSet visible_;
    std::shared_ptr<AuditLog> audit_ = std::make_shared<AuditLog>();
};

/// Worktree sandbox for BUILDER, TESTER, SIMULATOR or SCRIBER. Any other role
/// is a ConfigError; a worktree failure is an EnvironmentError.
Sandbox create_sandbox(AgentRole role, const SandboxOptions& opts, const AccessMatrix& m);

/// Artifact-only sandbox for PLANNER, REVIEWER and SHIPPER.
Sandbox create_view(AgentRole role, const SandboxOptions& opts, const AccessMatrix& m);

/// Per-role log as collected after dispatch.
struct AccessLog {
    AgentRole role{};
    std::vector<AccessEntry> entries;
};

enum class ViolationKind {
    /// An ALLOW the engine's matrix would have denied.
    ForbiddenAllow,
    /// A denied read attempt.
    AttemptedRead,
    /// A non-granted artifact surfaced inside the sandbox.
    Exposure,
};

std::string_view to_string(ViolationKind k) noexcept;

struct IsolationViolation {
    AgentRole role{};
    ArtifactKind artifact{};
    Timestamp at{};
    ViolationKind kind{};
};

struct IsolationReport {
    std::vector<IsolationViolation> violations;

    bool clean() const noexcept { return violations.empty(); }
};

/// Replays logs against the engine's matrix. Throws IncompleteAuditError if a
/// dispatched role has no log.
IsolationReport audit_isolation(const std::vector<AccessLog>& logs, const RoleSet& dispatched);

} // namespace gatehouse
