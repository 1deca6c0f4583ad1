#include "gatehouse/barrier.hpp"

#include <sstream>

#include "gatehouse/errors.hpp"
#include "text.hpp"

namespace fs = std::filesystem;

namespace gatehouse {

std::string_view to_string(AuditEvent e) noexcept {
    switch (e) {
    case AuditEvent::Allow: return "ALLOW";
    case AuditEvent::Deny: return "DENY";
    case AuditEvent::Exposed: return "EXPOSED";
    }
    return "?";
}

std::string_view to_string(ViolationKind k) noexcept {
    switch (k) {
    case ViolationKind::ForbiddenAllow: return "forbidden-allow";
    case ViolationKind::AttemptedRead: return "attempted-read";
    case ViolationKind::Exposure: return "exposure";
    }
    return "?";
}

std::string format_entry(const AccessEntry& e) {
    std::string out = format_iso8601(e.at);
    out += '\t';
    out += to_string(e.role);
    out += '\t';
    out += file_name(e.artifact);
    out += '\t';
    out += to_string(e.event);
    return out;
}

std::vector<AccessEntry> parse_access_log(const std::string& body) {
    std::vector<AccessEntry> out;
    int line_no = 0;
    for (auto line : text::split_lines(body)) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        auto f = text::split(line, '\t');
        std::optional<AuditEvent> ev;
        if (f.size() == 4) {
            for (auto e : {AuditEvent::Allow, AuditEvent::Deny, AuditEvent::Exposed})
                if (f[3] == to_string(e)) ev = e;
        }
        auto at = f.size() == 4 ? parse_iso8601(f[0]) : std::nullopt;
        auto role = f.size() == 4 ? parse_role(f[1]) : std::nullopt;
        auto kind = f.size() == 4 ? parse_artifact(f[2]) : std::nullopt;
        if (!ev || !at || !role || !kind)
            throw IoError("access log line " + std::to_string(line_no) + " is malformed");
        out.push_back({*at, *role, *kind, *ev});
    }
    return out;
}

void AuditLog::append(AccessEntry e) {
    std::lock_guard lock(mu_);
    entries_.push_back(e);
}

std::vector<AccessEntry> AuditLog::entries() const {
    std::lock_guard lock(mu_);
    return entries_;
}

std::size_t AuditLog::size() const {
    std::lock_guard lock(mu_);
    return entries_.size();
}

std::string AuditLog::render() const {
    std::string out;
    for (const auto& e : entries()) {
        out += format_entry(e);
        out += '\n';
    }
    return out;
}

AccessMatrix AccessMatrix::canonical(WorkflowState state) {
    using A = ArtifactKind;
    using R = AgentRole;
    AccessMatrix m;
    for (auto k : kAllArtifacts) {
        m.grant(R::Leader, k);
        m.grant(R::Shipper, k);
    }
    for (auto k : {A::Request, A::Impact, A::Comprehension, A::Spec, A::TestSpec, A::SimSpec})
        m.grant(R::Planner, k);
    for (auto k : {A::Impact, A::Spec, A::Implementation}) m.grant(R::Builder, k);
    m.grant(R::Tester, A::TestSpec).grant(R::Tester, A::Audit);
    if (state_order(state, WorkflowState::PipelinesComplete) >= 0)
        m.grant(R::Tester, A::Implementation).grant(R::Tester, A::Simulation);
    m.grant(R::Simulator, A::SimSpec).grant(R::Simulator, A::Simulation);
    for (auto k : {A::Request, A::Impact, A::Implementation, A::Audit, A::Simulation,
                   A::Architecture, A::LogEntry, A::Docs})
        m.grant(R::Scriber, k);
    for (auto k : {A::Request, A::Impact, A::Status, A::Comprehension, A::Spec, A::TestSpec,
                   A::SimSpec, A::Implementation, A::Audit, A::Simulation, A::Architecture,
                   A::LogEntry, A::Docs, A::Review})
        m.grant(R::Reviewer, k);
    return m;
}

bool AccessMatrix::grants(AgentRole role, ArtifactKind kind) const {
    auto it = grants_.find(role);
    return it != grants_.end() && it->second.count(kind) > 0;
}

ArtifactSet AccessMatrix::readable(AgentRole role) const {
    auto it = grants_.find(role);
    return it == grants_.end() ? ArtifactSet{} : it->second;
}

AccessMatrix& AccessMatrix::grant(AgentRole role, ArtifactKind kind) {
    grants_[role].insert(kind);
    return *this;
}

AccessMatrix& AccessMatrix::revoke(AgentRole role, ArtifactKind kind) {
    grants_[role].erase(kind);
    return *this;
}

AccessDecision check_access(const AccessMatrix& m, AgentRole role, ArtifactKind kind, AuditLog& log,
                            Clock& clock) {
    bool allowed = m.grants(role, kind);
    log.append({clock.now(), role, kind, allowed ? AuditEvent::Allow : AuditEvent::Deny});
    return allowed ? AccessDecision::Allow : AccessDecision::Deny;
}

bool uses_worktree(AgentRole role) noexcept {
    return role == AgentRole::Builder || role == AgentRole::Tester ||
           role == AgentRole::Simulator || role == AgentRole::Scriber;
}

Sandbox::Sandbox(AgentRole role, fs::path root, std::optional<fs::path> worktree, std::string branch)
    : role_(role), root_(std::move(root)), worktree_(std::move(worktree)), branch_(std::move(branch)) {}

fs::path Sandbox::resolve(std::string_view relative) const {
    if (relative.empty()) throw BarrierViolation("empty sandbox path");
    fs::path rel(relative);
    if (rel.is_absolute() || rel.has_root_name() || rel.has_root_directory())
        throw BarrierViolation("absolute path '" + std::string(relative) + "' escapes the sandbox");
    for (const auto& part : rel) {
        if (part == "..")
            throw BarrierViolation("path '" + std::string(relative) + "' contains '..'");
    }
    std::error_code ec;
    auto base = fs::weakly_canonical(root_, ec);
    auto full = fs::weakly_canonical(root_ / rel, ec);
    auto [b, f] = std::mismatch(base.begin(), base.end(), full.begin(), full.end());
    if (b != base.end())
        throw BarrierViolation("path '" + std::string(relative) + "' resolves outside the sandbox");
    return root_ / rel;
}

std::optional<std::string> Sandbox::read_artifact(ArtifactKind kind, const AccessMatrix& m,
                                                  Clock& clock) {
    if (check_access(m, role_, kind, *audit_, clock) == AccessDecision::Deny) return std::nullopt;
    auto p = root_ / std::string(file_name(kind));
    std::error_code ec;
    if (!fs::is_regular_file(p, ec)) return std::nullopt;
    return read_file(p);
}

ArtifactSet Sandbox::produced() const {
    ArtifactSet out;
    std::error_code ec;
    for (auto k : kAllArtifacts) {
        if (producer(k) != role_) continue;
        if (fs::is_regular_file(root_ / std::string(file_name(k)), ec) ||
            (k == ArtifactKind::Architecture && fs::is_regular_file(root_ / "ARCHITECTURE.md", ec)))
            out.insert(k);
    }
    return out;
}

ArtifactSet Sandbox::foreign_artifacts(const AccessMatrix& m) const {
    ArtifactSet out;
    std::error_code ec;
    for (auto k : kAllArtifacts) {
        if (producer(k) == role_ || m.grants(role_, k)) continue;
        if (fs::is_regular_file(root_ / std::string(file_name(k)), ec)) out.insert(k);
    }
    return out;
}

void Sandbox::refresh(const AccessMatrix& m, const RunDirectory& run_dir, Clock& clock) {
    std::error_code ec;
    for (auto k : visible_) {
        if (producer(k) != role_ && !m.grants(role_, k))
            fs::remove(root_ / std::string(file_name(k)), ec);
    }
    visible_.clear();
    for (auto k : m.readable(role_)) {
        if (producer(k) == role_) continue;
        auto body = run_dir.try_read(k);
        if (!body) continue;
        check_access(m, role_, k, *audit_, clock);
        write_file(root_ / std::string(file_name(k)), *body);
        visible_.insert(k);
    }
}

Sandbox materialize_sandbox(AgentRole role, const SandboxOptions& opts, const AccessMatrix& m,
                            bool with_worktree) {
    if (!opts.clock) throw ConfigError("sandbox needs a clock");
    std::error_code ec;
    fs::create_directories(opts.root, ec);
    if (ec) throw EnvironmentError("cannot create sandbox " + opts.root.string() + ": " + ec.message());

    std::optional<fs::path> worktree;
    std::string branch;
    if (with_worktree) {
        if (!opts.git) throw ConfigError("worktree sandbox needs a git layer");
        branch = agent_branch(role, opts.request_id);
        auto wt = opts.root / "repo";
        if (!fs::exists(wt, ec)) {
            GitParams p;
            p.worktree = wt;
            p.branch = branch;
            p.actor = AgentRole::Leader;
            auto r = git_ops(*opts.git, opts.base_repo, GitAction::WorktreeAdd, p, opts.journal);
            if (!r.ok())
                throw EnvironmentError("worktree for " + std::string(to_string(role)) +
                                       " failed: " + r.message);
        }
        worktree = wt;
    }

    Sandbox box(role, opts.root, worktree, branch);
    std::vector<ArtifactKind> wanted;
    if (opts.materialize) {
        wanted = *opts.materialize;
    } else {
        for (auto k : m.readable(role))
            if (producer(k) != role && opts.run_dir.exists(k)) wanted.push_back(k);
    }
    for (auto k : wanted) {
        if (check_access(m, role, k, *box.audit_, *opts.clock) == AccessDecision::Deny) {
            throw BarrierViolation(std::string(file_name(k)) + " is not granted to " +
                                   std::string(to_string(role)));
        }
        if (auto body = opts.run_dir.try_read(k)) {
            write_file(opts.root / std::string(file_name(k)), *body);
            box.visible_.insert(k);
        }
    }
    return box;
}

Sandbox create_sandbox(AgentRole role, const SandboxOptions& opts, const AccessMatrix& m) {
    if (!uses_worktree(role))
        throw ConfigError(std::string(to_string(role)) +
                          " is not an execution or recording role; use create_view");
    return materialize_sandbox(role, opts, m, true);
}

Sandbox create_view(AgentRole role, const SandboxOptions& opts, const AccessMatrix& m) {
    if (role == AgentRole::Leader || uses_worktree(role))
        throw ConfigError(std::string(to_string(role)) + " does not take an artifact-only view");
    return materialize_sandbox(role, opts, m, false);
}

IsolationReport audit_isolation(const std::vector<AccessLog>& logs, const RoleSet& dispatched) {
    RoleSet seen;
    for (const auto& l : logs) seen.insert(l.role);
    std::vector<std::string> missing;
    for (auto r : dispatched)
        if (!seen.count(r)) missing.emplace_back(to_string(r));
    if (!missing.empty())
        throw IncompleteAuditError("no access log for dispatched role(s): " + text::join(missing, ", "));

    const auto reference = AccessMatrix::canonical(WorkflowState::PipelinesComplete);
    IsolationReport report;
    for (const auto& l : logs) {
        for (const auto& e : l.entries) {
            switch (e.event) {
            case AuditEvent::Allow:
                if (!reference.grants(e.role, e.artifact))
                    report.violations.push_back({e.role, e.artifact, e.at, ViolationKind::ForbiddenAllow});
                break;
            case AuditEvent::Deny:
                report.violations.push_back({e.role, e.artifact, e.at, ViolationKind::AttemptedRead});
                break;
            case AuditEvent::Exposed:
                report.violations.push_back({e.role, e.artifact, e.at, ViolationKind::Exposure});
                break;
            }
        }
    }
    return report;
}

} // namespace gatehouse
