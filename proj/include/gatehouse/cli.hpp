#pragma once

// Command-line front end: run, answer, authorize, status, validate, replay.

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "gatehouse/orchestrator.hpp"

namespace gatehouse {

/// `args` excludes the program name. Returns the process exit code.
int run_cli(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err);

/// $GATEHOUSE_WORKSPACE, else ./workspace.
std::filesystem::path default_workspace_root();

/// Finds the per-repo layout holding `<root>/<repo>/runs/<id>/run.json`.
std::optional<WorkspaceLayout> find_run(const std::filesystem::path& root, const std::string& request_id);

struct ReplayResult {
    bool matched = false;
    /// Field-by-field differences, "field: recorded != replayed".
    std::vector<std::string> differences;
    RunReport replayed;
};

/// Re-runs a recorded run in a scratch workspace (fake git, recorded answers
/// and language) and compares it with the recorded run-phase report.
ReplayResult replay_run(const WorkspaceLayout& layout, const std::string& request_id);

} // namespace gatehouse
