#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "gatehouse/barrier.hpp"
#include "gatehouse/clock.hpp"
#include "gatehouse/core.hpp"

namespace gatehouse {

inline constexpr std::chrono::milliseconds kDefaultDeadline = std::chrono::minutes(30);

/// What an agent is told. Rendered as plain text for subprocess stdin.
struct Briefing {
    std::string directive;
    /// Sandbox-relative paths of the materialized inputs.
    std::vector<std::string> granted_paths;
    std::string language_notes;
    std::vector<std::string> validation_commands;
    int attempt = 1;
    /// HOLD answers, BLOCK failure details and STOP notes, oldest first.
    std::vector<std::string> context;

    std::string render() const;
    /// Stable hex digest of render().
    std::string digest() const;
};

struct DispatchRequest {
    AgentRole role{};
    Sandbox* sandbox = nullptr;
    Briefing briefing;
    std::chrono::milliseconds deadline = kDefaultDeadline;
    WorkflowType workflow;
    const AccessMatrix* matrix = nullptr;
    Clock* clock = nullptr;
    /// Captured agent output is appended here when set.
    std::optional<std::filesystem::path> log_path;
};

enum class OutcomeStatus { Completed, Signaled };

struct AgentOutcome {
    OutcomeStatus status = OutcomeStatus::Completed;
    ArtifactSet produced;
    std::optional<Signal> signal;
    std::vector<AccessEntry> access_log;

    static AgentOutcome completed() { return {}; }
    static AgentOutcome signaled(Signal s) {
        AgentOutcome o;
        o.status = OutcomeStatus::Signaled;
        o.signal = std::move(s);
        return o;
    }
};

enum class BackendKind { Scripted, Subprocess, Remote, Builtin };

std::string_view to_string(BackendKind k) noexcept;

/// An opaque artifact producer. run() does the work inside the sandbox;
/// dispatch() enforces the contract around it.
class AgentBackend {
public:
    virtual ~AgentBackend() = default;
    virtual BackendKind kind() const noexcept = 0;
    virtual AgentOutcome run(const DispatchRequest& req) = 0;
};

/// Validates the request, runs the backend and checks the result: a
/// COMPLETED outcome must carry every contracted artifact (else
/// ContractViolation); a SIGNALED one must pass the owner check (else
/// ProtocolViolation). Non-granted artifacts left in the sandbox are logged as
/// EXPOSED. Timeouts throw TimeoutError, crashes DispatchFailure.
AgentOutcome dispatch(const DispatchRequest& req, AgentBackend& backend);

// ---------------------------------------------------------------------------
// Scenario scripts

namespace script {

struct Read {
    ArtifactKind artifact{};
};
struct Write {
    std::string path;
    std::string content;
};
struct Raise {
    SignalKind kind{};
    std::string payload;
};
struct Complete {};
struct Fail {
    std::string message;
};
struct Sleep {
    std::chrono::milliseconds duration{};
};

using Step = std::variant<Read, Write, Raise, Complete, Fail, Sleep>;

struct Block {
    /// nullopt matches any attempt (`attempt *`, or a script without headers).
    std::optional<int> attempt;
    std::vector<Step> steps;
    int line = 0;
};

} // namespace script

/// Line-oriented scenario:
///
///     # comment
///     attempt 1                  (optional; `attempt *` is the fallback)
///     read spec.md
///     write implementation.md <<EOF
///     ...
///     EOF
///     write notes.txt "inline text"
///     signal BLOCK "details\npipeline: code"
///     sleep 50
///     complete | fail "message"
struct Scenario {
    std::vector<script::Block> blocks;

    /// Throws ConfigError with the offending line number.
    static Scenario parse(const std::string& text);
    const script::Block& block_for(int attempt) const;
};

/// Replays the block for `req.briefing.attempt`. Byte-identical results for
/// identical inputs. Path escapes throw BarrierViolation before any step runs;
/// a signal the role does not own throws ProtocolViolation.
AgentOutcome run_scripted(const Scenario& scenario, const DispatchRequest& req);

class ScriptedBackend final : public AgentBackend {
public:
    explicit ScriptedBackend(Scenario scenario) : scenario_(std::move(scenario)) {}
    static std::unique_ptr<ScriptedBackend> from_text(const std::string& text) {
        return std::make_unique<ScriptedBackend>(Scenario::parse(text));
    }

    BackendKind kind() const noexcept override { return BackendKind::Scripted; }
    AgentOutcome run(const DispatchRequest& req) override { return run_scripted(scenario_, req); }

private:
    Scenario scenario_;
};

/// A script that delivers `role`'s full contract for `workflow` with
/// well-formed placeholder content (PASS verdict for the reviewer, a result
/// table and the specified tolerance for the tester).
std::string conforming_script(AgentRole role, const WorkflowType& workflow);

/// Runs a shell command in the sandbox root with the rendered briefing on
/// stdin. The last non-empty stdout line must be `OUTCOME: COMPLETED` or
/// `OUTCOME: SIGNAL <KIND> <payload-file>`.
class SubprocessBackend final : public AgentBackend {
public:
    explicit SubprocessBackend(std::string command) : command_(std::move(command)) {}

    BackendKind kind() const noexcept override { return BackendKind::Subprocess; }
    AgentOutcome run(const DispatchRequest& req) override;

private:
    std::string command_;
};

struct RemoteReply {
    /// Sandbox-relative path -> content.
    std::map<std::string, std::string> files;
    std::optional<Signal> signal;
};

/// Pluggable wire for remote completion services.
class RemoteTransport {
public:
    virtual ~RemoteTransport() = default;
    virtual RemoteReply exchange(AgentRole role, const std::string& briefing) = 0;
};

class RemoteBackend final : public AgentBackend {
public:
    explicit RemoteBackend(std::shared_ptr<RemoteTransport> transport)
        : transport_(std::move(transport)) {}

    BackendKind kind() const noexcept override { return BackendKind::Remote; }
    AgentOutcome run(const DispatchRequest& req) override;

private:
    std::shared_ptr<RemoteTransport> transport_;
};

using BackendMap = std::map<AgentRole, std::shared_ptr<AgentBackend>>;

/// Backend configuration file (JSON):
///
///     { "default": {"kind": "scripted", "conforming": true},
///       "roles": {"tester": {"kind": "scripted", "script": "tester.scn"},
///                 "builder": {"kind": "subprocess", "command": "./agent.sh"}},
///       "deadline_seconds": 1800,
///       "issues": "issues.json" }
///
/// Relative paths resolve against the file's directory.
struct BackendConfig {
    std::filesystem::path source;
    BackendMap backends;
    /// Roles without an explicit entry get a conforming scripted backend.
    bool conforming_default = false;
    std::chrono::milliseconds deadline = kDefaultDeadline;
    std::optional<std::filesystem::path> issues;

    /// True iff every configured backend is scripted.
    bool all_scripted() const;
    /// Backend for `role`, materializing the conforming default if allowed.
    /// Throws ConfigError when neither exists.
    std::shared_ptr<AgentBackend> backend_for(AgentRole role, const WorkflowType& workflow) const;
};

BackendConfig load_backend_config(const std::filesystem::path& path);

} // namespace gatehouse
