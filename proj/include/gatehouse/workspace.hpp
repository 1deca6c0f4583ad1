#pragma once

// Target-repository profiles and the workspace repository that archives runs.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gatehouse/git.hpp"
#include "gatehouse/run_directory.hpp"

namespace gatehouse {

enum class Language { R, Python, TypeScript, Stata, Go, Rust, C, Cpp, Unknown };

std::string_view to_string(Language l) noexcept;
std::optional<Language> parse_language(std::string_view text) noexcept;

struct LanguageProfile {
    Language language = Language::Unknown;
    /// Human-readable marker description, e.g. "Cargo.toml".
    std::string marker;
    /// Command templates, verbatim.
    std::vector<std::string> validation;
    std::string doc_convention;

    bool known() const noexcept { return language != Language::Unknown; }
};

/// The eight profiles in detection precedence order
/// (Rust, Go, Python, TypeScript, R, C++, C, Stata).
const std::vector<LanguageProfile>& language_profiles();
const LanguageProfile& profile_for(Language l);

/// First profile in precedence order whose marker matches; an Unknown profile
/// when none does. Throws IoError if `repo` cannot be listed.
LanguageProfile detect_language(const std::filesystem::path& repo);

/// Throws ConfigError for Unknown.
std::vector<std::string> validation_commands(const LanguageProfile& profile);

/// True for the C and C++ placeholder that needs an explicit override.
bool needs_validation_override(const LanguageProfile& profile);

enum class PushClass { Pushed, Local };

/// Per-repository slice of the workspace:
///
///     <root>/<repo>/{context.md, CHANGELOG.md, HANDOFF.md, docs.md,
///                    ref/, runs/, logs/, tmp/}
struct WorkspaceLayout {
    std::filesystem::path root;
    std::string repo_name;

    std::filesystem::path dir() const { return root / repo_name; }
    std::filesystem::path context_md() const { return dir() / "context.md"; }
    std::filesystem::path changelog() const { return dir() / "CHANGELOG.md"; }
    std::filesystem::path handoff() const { return dir() / "HANDOFF.md"; }
    std::filesystem::path docs() const { return dir() / "docs.md"; }
    std::filesystem::path ref_dir() const { return dir() / "ref"; }
    std::filesystem::path runs_dir() const { return dir() / "runs"; }
    std::filesystem::path logs_dir() const { return dir() / "logs"; }
    std::filesystem::path tmp_dir() const { return dir() / "tmp"; }
    std::filesystem::path run_dir(const std::string& request_id) const { return runs_dir() / request_id; }
    std::filesystem::path sandbox_dir(const std::string& request_id) const {
        return tmp_dir() / "sandboxes" / request_id;
    }

    /// Creates the directories (files are created by sync).
    void ensure() const;
};

/// Classifies a path relative to the per-repo directory. logs/, tmp/ and
/// context.md are local; so is any `logs` directory inside a run.
PushClass push_class(const std::filesystem::path& relative);

/// Every regular file under `layout.dir()` with PushClass::Pushed, relative
/// to `layout.root`, sorted.
std::vector<std::string> pushed_files(const WorkspaceLayout& layout);

/// `<date>-<slug>`; the date is the first ten characters.
struct RequestId {
    std::string date;
    std::string slug;

    std::string str() const { return date + "-" + slug; }
    static std::optional<RequestId> parse(std::string_view id);
};

std::string make_request_id(const std::string& date, std::string_view directive);

struct HandoffContext {
    std::string prior_decisions;
    std::string known_issues;
    std::string technical_insights;
    /// Unknown sections, verbatim with their headings.
    std::string other;
    std::vector<std::string> warnings;

    bool empty() const noexcept {
        return prior_decisions.empty() && known_issues.empty() && technical_insights.empty() &&
               other.empty();
    }
};

/// Extracts the `## Handoff notes` section of a log entry.
HandoffContext handoff_from_log_entry(const std::string& log_entry);
std::string render_handoff(const HandoffContext& ctx, const std::string& request_id);
HandoffContext parse_handoff(const std::string& handoff_md);
/// Absent HANDOFF.md yields an empty context.
HandoffContext read_handoff(const WorkspaceLayout& layout);

/// Body of the log entry's `## What changed` section.
std::string what_changed(const std::string& log_entry);

enum class SyncStatus { Synced, PreconditionFailed, PushFailed };

std::string_view to_string(SyncStatus s) noexcept;

struct SyncReport {
    SyncStatus status = SyncStatus::Synced;
    std::string runs_file;
    bool changelog_added = false;
    bool pushed = false;
    bool rolled_back = false;
    std::string message;

    bool ok() const noexcept { return status == SyncStatus::Synced; }
};

struct SyncOptions {
    /// Workspace repository git layer; without one the sync stays local.
    GitLayer* git = nullptr;
    GitJournal* journal = nullptr;
    AgentRole actor = AgentRole::Shipper;
    std::string remote = "origin";
};

/// Archives a shipped run: log-entry.md -> runs/<id>.md, CHANGELOG entry,
/// HANDOFF.md, docs.md, then commit + push. Idempotent. A failed push
/// restores the pre-sync files.
SyncReport sync_workspace(const WorkspaceLayout& layout, const RunDirectory& run_dir,
                          const std::string& request_id, const SyncOptions& opts = {});

/// context.md from repo metadata. Regenerated at run start.
std::string render_context(const std::filesystem::path& repo, GitLayer& git,
                           const LanguageProfile& profile);

struct LintViolation {
    std::string path;
    std::string kind;
    std::string message;
};

struct LintReport {
    std::vector<LintViolation> violations;
    bool clean() const noexcept { return violations.empty(); }
};

/// Checks every repo directory under `root`: layout, runs/ naming, HANDOFF
/// parseability and, when `git` is given and `root` is a repository, that no
/// local-only file is tracked.
LintReport validate_workspace(const std::filesystem::path& root, GitLayer* git = nullptr);

} // namespace gatehouse
