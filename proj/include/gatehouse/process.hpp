#pragma once

#include <chrono>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace gatehouse {

struct ProcessResult {
    int exit_code = -1;
    std::string out;
    std::string err;
    bool timed_out = false;

    bool ok() const noexcept { return !timed_out && exit_code == 0; }
};

struct ProcessOptions {
    std::optional<std::filesystem::path> cwd;
    std::string input;
    std::optional<std::chrono::milliseconds> timeout;
    /// Extra NAME=value entries appended to the inherited environment.
    std::vector<std::string> env;
};

/// Runs argv[0] (PATH lookup) to completion, feeding `input` on stdin and
/// capturing both output streams. On timeout the child is killed. Throws
/// EnvironmentError if the process cannot be started.
ProcessResult run_process(const std::vector<std::string>& argv, const ProcessOptions& opts = {});

/// `/bin/sh -c command`.
ProcessResult run_shell(const std::string& command, const ProcessOptions& opts = {});

} // namespace gatehouse
