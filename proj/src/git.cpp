#include "gatehouse/git.hpp"

#include <algorithm>
#include <sstream>

#include "gatehouse/errors.hpp"
#include "gatehouse/process.hpp"
#include "text.hpp"

namespace fs = std::filesystem;

namespace gatehouse {

std::string_view to_string(GitAction a) noexcept {
    switch (a) {
    case GitAction::WorktreeAdd: return "WORKTREE_ADD";
    case GitAction::WorktreeRemove: return "WORKTREE_REMOVE";
    case GitAction::Stage: return "STAGE";
    case GitAction::Commit: return "COMMIT";
    case GitAction::Push: return "PUSH";
    }
    return "?";
}

std::string_view to_string(GitStatus s) noexcept {
    switch (s) {
    case GitStatus::Ok: return "ok";
    case GitStatus::NoOp: return "no-op";
    case GitStatus::Conflict: return "conflict";
    case GitStatus::AuthFailure: return "auth-failure";
    case GitStatus::DetachedHead: return "detached-head";
    case GitStatus::Refused: return "refused";
    case GitStatus::Failed: return "failed";
    }
    return "?";
}

std::string agent_branch(AgentRole role, std::string_view request_id) {
    return "agent/" + std::string(to_string(role)) + "/" + std::string(request_id);
}

// ---------------------------------------------------------------------------
// SystemGit

namespace {

ProcessResult git(const fs::path& repo, std::vector<std::string> args,
                  std::vector<std::string> env = {}) {
    std::vector<std::string> argv{"git", "-C", repo.string()};
    argv.insert(argv.end(), args.begin(), args.end());
    ProcessOptions opts;
    opts.env = std::move(env);
    opts.env.push_back("GIT_TERMINAL_PROMPT=0");
    return run_process(argv, opts);
}

GitResult classify(const ProcessResult& r) {
    if (r.ok()) return {GitStatus::Ok, std::string(text::trim(r.out))};
    auto msg = r.err.empty() ? r.out : r.err;
    auto low = text::lower(msg);
    if (low.find("authentication failed") != std::string::npos ||
        low.find("permission denied") != std::string::npos ||
        low.find("could not read username") != std::string::npos)
        return {GitStatus::AuthFailure, msg};
    if (low.find("conflict") != std::string::npos || low.find("rejected") != std::string::npos)
        return {GitStatus::Conflict, msg};
    if (low.find("detached head") != std::string::npos) return {GitStatus::DetachedHead, msg};
    return {GitStatus::Failed, msg};
}

} // namespace

bool SystemGit::is_repository(const fs::path& repo) {
    std::error_code ec;
    if (!fs::is_directory(repo, ec)) return false;
    auto r = git(repo, {"rev-parse", "--is-inside-work-tree"});
    return r.ok() && text::trim(r.out) == "true";
}

GitResult SystemGit::worktree_add(const fs::path& repo, const fs::path& path,
                                  const std::string& branch) {
    auto exists = git(repo, {"rev-parse", "--verify", "--quiet", "refs/heads/" + branch});
    auto r = exists.ok() ? git(repo, {"worktree", "add", fs::absolute(path).string(), branch})
                         : git(repo, {"worktree", "add", "-b", branch, fs::absolute(path).string()});
    return classify(r);
}

GitResult SystemGit::worktree_remove(const fs::path& repo, const fs::path& path) {
    auto list = git(repo, {"worktree", "list", "--porcelain"});
    std::error_code ec;
    auto canon = fs::weakly_canonical(path, ec).string();
    bool known = false;
    for (auto line : text::split_lines(list.out))
        if (text::starts_with(line, "worktree ") && line.substr(9) == canon) known = true;
    if (!known) return {GitStatus::NoOp, "no such worktree"};
    return classify(git(repo, {"worktree", "remove", "--force", canon}));
}

GitResult SystemGit::stage(const fs::path& repo, const std::vector<std::string>& paths) {
    std::vector<std::string> args{"add"};
    if (paths.empty()) {
        args.push_back("-A");
    } else {
        args.push_back("--");
        args.insert(args.end(), paths.begin(), paths.end());
    }
    return classify(git(repo, args));
}

GitResult SystemGit::commit(const fs::path& repo, const std::string& message) {
    auto staged = git(repo, {"diff", "--cached", "--quiet"});
    if (staged.exit_code == 0) return {GitStatus::NoOp, "nothing to commit"};
    std::vector<std::string> env;
    auto email = git(repo, {"config", "user.email"});
    if (text::trim(email.out).empty()) {
        env = {"GIT_AUTHOR_NAME=gatehouse", "GIT_AUTHOR_EMAIL=gatehouse@localhost",
               "GIT_COMMITTER_NAME=gatehouse", "GIT_COMMITTER_EMAIL=gatehouse@localhost"};
    }
    return classify(git(repo, {"commit", "-q", "-m", message}, env));
}

GitResult SystemGit::push(const fs::path& repo, const std::string& remote,
                          const std::string& branch) {
    if (branch.empty() && current_branch(repo).empty())
        return {GitStatus::DetachedHead, "HEAD is detached"};
    auto target = branch.empty() ? current_branch(repo) : branch;
    return classify(git(repo, {"push", "-q", remote, target}));
}

GitResult SystemGit::merge(const fs::path& repo, const std::string& branch) {
    std::vector<std::string> env;
    auto email = git(repo, {"config", "user.email"});
    if (text::trim(email.out).empty()) {
        env = {"GIT_AUTHOR_NAME=gatehouse", "GIT_AUTHOR_EMAIL=gatehouse@localhost",
               "GIT_COMMITTER_NAME=gatehouse", "GIT_COMMITTER_EMAIL=gatehouse@localhost"};
    }
    auto r = git(repo, {"merge", "--no-edit", "-q", branch}, env);
    if (r.ok()) return {GitStatus::Ok, ""};
    git(repo, {"merge", "--abort"});
    auto res = classify(r);
    if (r.out.find("CONFLICT") != std::string::npos) res.status = GitStatus::Conflict;
    return res;
}

std::optional<std::string> SystemGit::remote_url(const fs::path& repo, const std::string& remote) {
    auto r = git(repo, {"remote", "get-url", remote});
    if (!r.ok()) return std::nullopt;
    return std::string(text::trim(r.out));
}

std::string SystemGit::current_branch(const fs::path& repo) {
    auto r = git(repo, {"symbolic-ref", "--short", "-q", "HEAD"});
    return r.ok() ? std::string(text::trim(r.out)) : std::string{};
}

std::vector<std::string> SystemGit::tracked_files(const fs::path& repo) {
    auto r = git(repo, {"ls-files"});
    std::vector<std::string> out;
    for (auto line : text::split_lines(r.out))
        if (!line.empty()) out.emplace_back(line);
    return out;
}

// ---------------------------------------------------------------------------
// FakeGit

void FakeGit::init(const fs::path& repo, std::optional<std::string> remote) {
    std::lock_guard lock(mu_);
    Repo r;
    r.remote = std::move(remote);
    repos_[fs::weakly_canonical(repo)] = std::move(r);
}

FakeGit::Repo* FakeGit::find(const fs::path& repo) {
    auto it = repos_.find(fs::weakly_canonical(repo));
    return it == repos_.end() ? nullptr : &it->second;
}

FakeGit::Repo FakeGit::repo(const fs::path& repo) const {
    std::lock_guard lock(mu_);
    auto it = repos_.find(fs::weakly_canonical(repo));
    if (it == repos_.end()) throw ConfigError("FakeGit: unknown repository " + repo.string());
    return it->second;
}

std::vector<std::pair<fs::path, std::string>> FakeGit::worktrees() const {
    std::lock_guard lock(mu_);
    std::vector<std::pair<fs::path, std::string>> out;
    for (const auto& [path, owner] : worktree_owner_) out.emplace_back(path, repos_.at(path).branch);
    return out;
}

bool FakeGit::is_repository(const fs::path& repo) {
    std::lock_guard lock(mu_);
    return find(repo) != nullptr;
}

GitResult FakeGit::worktree_add(const fs::path& repo, const fs::path& path,
                                const std::string& branch) {
    std::lock_guard lock(mu_);
    auto* owner = find(repo);
    if (!owner) return {GitStatus::Failed, "not a repository"};
    if (fail_worktree_add) return {GitStatus::Failed, "injected worktree failure"};
    std::error_code ec;
    fs::create_directories(path, ec);
    if (ec) return {GitStatus::Failed, ec.message()};
    auto key = fs::weakly_canonical(path);
    Repo wt;
    wt.branch = branch;
    wt.remote = owner->remote;
    repos_[key] = std::move(wt);
    worktree_owner_[key] = fs::weakly_canonical(repo);
    return {GitStatus::Ok, ""};
}

GitResult FakeGit::worktree_remove(const fs::path& repo, const fs::path& path) {
    std::lock_guard lock(mu_);
    if (!find(repo)) return {GitStatus::Failed, "not a repository"};
    auto key = fs::weakly_canonical(path);
    if (!worktree_owner_.count(key)) return {GitStatus::NoOp, "no such worktree"};
    worktree_owner_.erase(key);
    repos_.erase(key);
    std::error_code ec;
    fs::remove_all(path, ec);
    return {GitStatus::Ok, ""};
}

GitResult FakeGit::stage(const fs::path& repo, const std::vector<std::string>& paths) {
    std::lock_guard lock(mu_);
    auto* r = find(repo);
    if (!r) return {GitStatus::Failed, "not a repository"};
    if (!paths.empty()) {
        for (const auto& p : paths) {
            std::error_code ec;
            auto full = repo / p;
            if (fs::is_directory(full, ec)) {
                for (auto& e : fs::recursive_directory_iterator(full, ec))
                    if (e.is_regular_file())
                        r->staged.insert(fs::relative(e.path(), repo).generic_string());
            } else if (fs::exists(full, ec)) {
                r->staged.insert(fs::path(p).generic_string());
            }
        }
        return {GitStatus::Ok, ""};
    }
    std::error_code ec;
    for (auto it = fs::recursive_directory_iterator(repo, ec);
         it != fs::recursive_directory_iterator(); it.increment(ec)) {
        if (it->path().filename() == ".git") {
            it.disable_recursion_pending();
            continue;
        }
        if (it->is_regular_file()) r->staged.insert(fs::relative(it->path(), repo).generic_string());
    }
    return {GitStatus::Ok, ""};
}

GitResult FakeGit::commit(const fs::path& repo, const std::string& message) {
    std::lock_guard lock(mu_);
    auto* r = find(repo);
    if (!r) return {GitStatus::Failed, "not a repository"};
    bool changed = false;
    for (const auto& s : r->staged) changed |= r->committed.insert(s).second;
    r->staged.clear();
    if (!changed) return {GitStatus::NoOp, "nothing to commit"};
    r->commits.push_back(message);
    return {GitStatus::Ok, ""};
}

GitResult FakeGit::push(const fs::path& repo, const std::string& remote, const std::string& branch) {
    std::lock_guard lock(mu_);
    auto* r = find(repo);
    if (!r) return {GitStatus::Failed, "not a repository"};
    if (auth_failure) return {GitStatus::AuthFailure, "injected authentication failure"};
    if (fail_push) return {GitStatus::Failed, "injected push failure"};
    if (!r->remote) return {GitStatus::Refused, "no remote '" + remote + "'"};
    r->pushed[branch.empty() ? r->branch : branch] = r->committed;
    return {GitStatus::Ok, ""};
}

GitResult FakeGit::merge(const fs::path& repo, const std::string& branch) {
    std::lock_guard lock(mu_);
    auto* r = find(repo);
    if (!r) return {GitStatus::Failed, "not a repository"};
    for (auto& [path, other] : repos_) {
        if (&other == r || other.branch != branch) continue;
        bool changed = false;
        for (const auto& f : other.committed) {
            changed |= r->committed.insert(f).second;
            std::error_code ec;
            auto dst = repo / f;
            fs::create_directories(dst.parent_path(), ec);
            fs::copy_file(path / f, dst, fs::copy_options::overwrite_existing, ec);
        }
        if (!changed) return {GitStatus::NoOp, "already up to date"};
        r->commits.push_back("merge " + branch);
        return {GitStatus::Ok, ""};
    }
    return {GitStatus::Failed, "unknown branch " + branch};
}

std::optional<std::string> FakeGit::remote_url(const fs::path& repo, const std::string&) {
    std::lock_guard lock(mu_);
    auto* r = find(repo);
    return r ? r->remote : std::nullopt;
}

std::string FakeGit::current_branch(const fs::path& repo) {
    std::lock_guard lock(mu_);
    auto* r = find(repo);
    return r ? r->branch : std::string{};
}

std::vector<std::string> FakeGit::tracked_files(const fs::path& repo) {
    std::lock_guard lock(mu_);
    auto* r = find(repo);
    if (!r) return {};
    std::set<std::string> all = r->committed;
    all.insert(r->staged.begin(), r->staged.end());
    return {all.begin(), all.end()};
}

// ---------------------------------------------------------------------------
// Journal and checked entry point

void GitJournal::record(GitJournalEntry e) {
    std::lock_guard lock(mu_);
    entries_.push_back(std::move(e));
}

std::vector<GitJournalEntry> GitJournal::entries() const {
    std::lock_guard lock(mu_);
    return entries_;
}

std::string GitJournal::render() const {
    std::ostringstream ss;
    for (const auto& e : entries()) {
        ss << "- " << to_string(e.action) << " (" << to_string(e.actor) << ") " << e.repo;
        if (!e.detail.empty()) ss << ": " << e.detail;
        ss << " -> " << to_string(e.status) << '\n';
    }
    return ss.str();
}

namespace {

std::mutex& repo_lock(const fs::path& repo) {
    static std::mutex registry_mu;
    static std::map<std::string, std::unique_ptr<std::mutex>> locks;
    std::lock_guard lock(registry_mu);
    auto& slot = locks[fs::weakly_canonical(repo).string()];
    if (!slot) slot = std::make_unique<std::mutex>();
    return *slot;
}

} // namespace

GitResult git_ops(GitLayer& git_layer, const fs::path& repo, GitAction action,
                  const GitParams& params, GitJournal* journal) {
    GitResult result;
    std::string detail;
    if (!git_layer.is_repository(repo)) {
        result = {GitStatus::Refused, repo.string() + " is not a git checkout"};
    } else {
        switch (action) {
        case GitAction::WorktreeAdd:
            detail = params.worktree.string() + " on " + params.branch;
            result = git_layer.worktree_add(repo, params.worktree, params.branch);
            break;
        case GitAction::WorktreeRemove:
            detail = params.worktree.string();
            result = git_layer.worktree_remove(repo, params.worktree);
            break;
        case GitAction::Stage:
            detail = params.paths.empty() ? "all changes" : text::join(params.paths, ", ");
            result = git_layer.stage(repo, params.paths);
            break;
        case GitAction::Commit: {
            std::lock_guard lock(repo_lock(repo));
            detail = params.message;
            result = git_layer.commit(repo, params.message);
            break;
        }
        case GitAction::Push: {
            detail = params.remote + " " + params.branch;
            std::error_code ec;
            if (!params.run_dir || !fs::is_regular_file(*params.run_dir / "credentials.md", ec)) {
                result = {GitStatus::Refused, "credentials.md missing; push refused"};
                break;
            }
            std::lock_guard lock(repo_lock(repo));
            result = git_layer.push(repo, params.remote, params.branch);
            break;
        }
        }
    }
    if (journal) journal->record({params.actor, action, repo.string(), detail, result.status});
    return result;
}

} // namespace gatehouse
