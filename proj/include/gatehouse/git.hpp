#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "gatehouse/core.hpp"

namespace gatehouse {

enum class GitAction { WorktreeAdd, WorktreeRemove, Stage, Commit, Push };

std::string_view to_string(GitAction a) noexcept;

enum class GitStatus { Ok, NoOp, Conflict, AuthFailure, DetachedHead, Refused, Failed };

std::string_view to_string(GitStatus s) noexcept;

struct GitResult {
    GitStatus status = GitStatus::Ok;
    std::string message;

    bool ok() const noexcept { return status == GitStatus::Ok || status == GitStatus::NoOp; }
};

/// Abstract git. SystemGit drives the git binary; FakeGit keeps everything in
/// memory (plus plain directories for worktrees) for tests.
class GitLayer {
public:
    virtual ~GitLayer() = default;

    virtual bool is_repository(const std::filesystem::path& repo) = 0;
    virtual GitResult worktree_add(const std::filesystem::path& repo,
                                   const std::filesystem::path& path, const std::string& branch) = 0;
    virtual GitResult worktree_remove(const std::filesystem::path& repo,
                                      const std::filesystem::path& path) = 0;
    /// Empty `paths` stages every change in the working tree.
    virtual GitResult stage(const std::filesystem::path& repo,
                            const std::vector<std::string>& paths) = 0;
    virtual GitResult commit(const std::filesystem::path& repo, const std::string& message) = 0;
    virtual GitResult push(const std::filesystem::path& repo, const std::string& remote,
                           const std::string& branch) = 0;
    virtual GitResult merge(const std::filesystem::path& repo, const std::string& branch) = 0;

    virtual std::optional<std::string> remote_url(const std::filesystem::path& repo,
                                                  const std::string& remote) = 0;
    /// Empty when HEAD is detached.
    virtual std::string current_branch(const std::filesystem::path& repo) = 0;
    /// Paths (relative, '/'-separated) in the index.
    virtual std::vector<std::string> tracked_files(const std::filesystem::path& repo) = 0;
};

class SystemGit final : public GitLayer {
public:
    bool is_repository(const std::filesystem::path& repo) override;
    GitResult worktree_add(const std::filesystem::path& repo, const std::filesystem::path& path,
                           const std::string& branch) override;
    GitResult worktree_remove(const std::filesystem::path& repo,
                              const std::filesystem::path& path) override;
    GitResult stage(const std::filesystem::path& repo,
                    const std::vector<std::string>& paths) override;
    GitResult commit(const std::filesystem::path& repo, const std::string& message) override;
    GitResult push(const std::filesystem::path& repo, const std::string& remote,
                   const std::string& branch) override;
    GitResult merge(const std::filesystem::path& repo, const std::string& branch) override;
    std::optional<std::string> remote_url(const std::filesystem::path& repo,
                                          const std::string& remote) override;
    std::string current_branch(const std::filesystem::path& repo) override;
    std::vector<std::string> tracked_files(const std::filesystem::path& repo) override;
};

/// In-memory git. Repositories must be registered with init(); worktrees
/// become plain directories so agents can write into them.
class FakeGit final : public GitLayer {
public:
    struct Repo {
        std::string branch = "main";
        std::set<std::string> staged;
        std::set<std::string> committed;
        std::vector<std::string> commits;
        std::map<std::string, std::set<std::string>> pushed;  // branch -> tree
        std::optional<std::string> remote;
    };

    void init(const std::filesystem::path& repo, std::optional<std::string> remote = std::nullopt);

    /// Failure injection.
    bool fail_push = false;
    bool auth_failure = false;
    bool fail_worktree_add = false;

    Repo repo(const std::filesystem::path& repo) const;
    std::vector<std::pair<std::filesystem::path, std::string>> worktrees() const;

    bool is_repository(const std::filesystem::path& repo) override;
    GitResult worktree_add(const std::filesystem::path& repo, const std::filesystem::path& path,
                           const std::string& branch) override;
    GitResult worktree_remove(const std::filesystem::path& repo,
                              const std::filesystem::path& path) override;
    GitResult stage(const std::filesystem::path& repo,
                    const std::vector<std::string>& paths) override;
    GitResult commit(const std::filesystem::path& repo, const std::string& message) override;
    GitResult push(const std::filesystem::path& repo, const std::string& remote,
                   const std::string& branch) override;
    GitResult merge(const std::filesystem::path& repo, const std::string& branch) override;
    std::optional<std::string> remote_url(const std::filesystem::path& repo,
                                          const std::string& remote) override;
    std::string current_branch(const std::filesystem::path& repo) override;
    std::vector<std::string> tracked_files(const std::filesystem::path& repo) override;

private:
    Repo* find(const std::filesystem::path& repo);

    mutable std::mutex mu_;
    std::map<std::filesystem::path, Repo> repos_;
    std::map<std::filesystem::path, std::filesystem::path> worktree_owner_;
};

struct GitParams {
    std::filesystem::path worktree;
    std::string branch;
    std::vector<std::string> paths;
    std::string message;
    std::string remote = "origin";
    /// PUSH refuses unless this run directory holds credentials.md.
    std::optional<std::filesystem::path> run_dir;
    AgentRole actor = AgentRole::Leader;
};

struct GitJournalEntry {
    AgentRole actor{};
    GitAction action{};
    std::string repo;
    std::string detail;
    GitStatus status{};
};

/// Every git_ops call, in order. Thread-safe.
class GitJournal {
public:
    void record(GitJournalEntry e);
    std::vector<GitJournalEntry> entries() const;
    /// Markdown bullet list for shipper.md.
    std::string render() const;

private:
    mutable std::mutex mu_;
    std::vector<GitJournalEntry> entries_;
};

/// Checked entry point for git actions: enforces preconditions, serializes
/// commit/push per repository and records the call in `journal`.
GitResult git_ops(GitLayer& git, const std::filesystem::path& repo, GitAction action,
                  const GitParams& params, GitJournal* journal = nullptr);

/// `agent/<role>/<request-id>`.
std::string agent_branch(AgentRole role, std::string_view request_id);

} // namespace gatehouse
