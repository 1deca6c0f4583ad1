#pragma once

// Shared fixtures: scratch directories, a fake target repository and a
// scripted engine harness.

#include <atomic>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <string>

#include "gatehouse/orchestrator.hpp"

namespace gatehouse::testing {

namespace fs = std::filesystem;

class TempDir {
public:
    explicit TempDir(const std::string& tag = "gh") {
        static std::atomic<int> counter{0};
        std::random_device rd;
        path_ = fs::temp_directory_path() /
                (tag + "-" + std::to_string(rd()) + "-" + std::to_string(counter++));
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& rel) const { return path_ / rel; }

private:
    fs::path path_;
};

inline void put(const fs::path& p, const std::string& content) {
    fs::create_directories(p.parent_path());
    std::ofstream(p, std::ios::binary) << content;
}

inline std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Every regular file under `root`, relative path -> bytes.
inline std::map<std::string, std::string> snapshot(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (!e.is_regular_file()) continue;
        out[fs::relative(e.path(), root).generic_string()] = slurp(e.path());
    }
    return out;
}

/// A FakeGit-backed target repository with an R marker, a workspace and a
/// scripted channel. Roles without a script get the conforming agent.
struct Harness {
    TempDir tmp{"gh-run"};
    FakeGit git;
    UserChannel channel = UserChannel::scripted();
    fs::path target;
    WorkspaceLayout workspace;
    std::map<AgentRole, std::string> scripts;

    explicit Harness(std::optional<std::string> remote = std::string("https://example.org/pkg.git"),
                     const std::string& marker = "DESCRIPTION") {
        target = tmp / "pkg";
        if (!marker.empty()) put(target / marker, "Package: pkg\n");
        else fs::create_directories(target);
        git.init(target, remote);
        workspace = WorkspaceLayout{tmp / "workspace", "pkg"};
    }

    EngineOptions options(int workflow, const std::string& directive = "Add a bootstrap option",
                          const std::string& request_id = "2026-01-01-test-run") {
        EngineOptions o;
        o.target_repo = target;
        o.workspace = workspace;
        o.request_id = request_id;
        o.directive = directive;
        o.workflow = workflow_by_id(workflow);
        o.backends.conforming_default = true;
        o.backends.deadline = std::chrono::seconds(20);
        for (const auto& [role, text] : scripts)
            o.backends.backends[role] = std::shared_ptr<AgentBackend>(ScriptedBackend::from_text(text));
        o.git = &git;
        o.channel = &channel;
        o.logical_clock = true;
        return o;
    }

    RunDirectory run_dir(const std::string& request_id = "2026-01-01-test-run") const {
        return RunDirectory(workspace.run_dir(request_id));
    }
};

/// Conforming script for `role` with a different first `n` attempts.
inline std::string with_leading_attempts(AgentRole role, const WorkflowType& wf,
                                         const std::vector<std::string>& first) {
    std::string out;
    for (std::size_t i = 0; i < first.size(); ++i)
        out += "attempt " + std::to_string(i + 1) + "\n" + first[i] + "\n";
    out += "attempt *\n" + conforming_script(role, wf);
    return out;
}

} // namespace gatehouse::testing
