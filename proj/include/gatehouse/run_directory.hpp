#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>

#include "gatehouse/core.hpp"

namespace gatehouse {

/// The per-request folder holding the runtime artifacts, logs and the engine
/// journal. Thin value wrapper over a path; all I/O failures throw IoError.
class RunDirectory {
public:
    RunDirectory() = default;
    explicit RunDirectory(std::filesystem::path root) : root_(std::move(root)) {}

    const std::filesystem::path& root() const noexcept { return root_; }
    std::filesystem::path path_of(ArtifactKind k) const { return root_ / std::string(file_name(k)); }
    std::filesystem::path logs_dir() const { return root_ / "logs"; }
    std::filesystem::path access_log_dir() const { return root_ / "logs" / "access"; }

    /// Throws IoError unless the directory exists and can be listed.
    void ensure_readable() const;
    void create() const;

    /// Also true for the all-caps ARCHITECTURE.md spelling.
    bool exists(ArtifactKind k) const;
    std::string read(ArtifactKind k) const;
    std::optional<std::string> try_read(ArtifactKind k) const;
    /// Writes the canonical file name, removing a stale all-caps variant.
    void write(ArtifactKind k, const std::string& content) const;
    void remove(ArtifactKind k) const;
    ArtifactSet present() const;

private:
    std::optional<std::filesystem::path> locate(ArtifactKind k) const;

    std::filesystem::path root_;
};

/// Role on whose behalf the calling thread currently writes. LEADER unless an
/// ActorScope says otherwise; dispatch() scopes backend runs to their role.
AgentRole current_actor() noexcept;

class ActorScope {
public:
    explicit ActorScope(AgentRole role) noexcept;
    ~ActorScope();
    ActorScope(const ActorScope&) = delete;
    ActorScope& operator=(const ActorScope&) = delete;

private:
    AgentRole previous_;
};

/// Instrumentation hook: sees every write_file/append_file with the actor
/// that issued it. Pass an empty function to remove it.
using WriteObserver = std::function<void(const std::filesystem::path&, AgentRole)>;
void set_write_observer(WriteObserver observer);

/// Whole-file helpers; throw IoError.
std::string read_file(const std::filesystem::path& p);
void write_file(const std::filesystem::path& p, const std::string& content);
void append_file(const std::filesystem::path& p, const std::string& content);

} // namespace gatehouse
