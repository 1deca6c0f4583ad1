#include "gatehouse/workspace.hpp"

#include <algorithm>
#include <regex>
#include <set>
#include <sstream>

#include "gatehouse/errors.hpp"
#include "text.hpp"

namespace fs = std::filesystem;

namespace gatehouse {

std::string_view to_string(Language l) noexcept {
    switch (l) {
    case Language::R: return "R";
    case Language::Python: return "Python";
    case Language::TypeScript: return "TypeScript";
    case Language::Stata: return "Stata";
    case Language::Go: return "Go";
    case Language::Rust: return "Rust";
    case Language::C: return "C";
    case Language::Cpp: return "C++";
    case Language::Unknown: return "UNKNOWN";
    }
    return "?";
}

std::optional<Language> parse_language(std::string_view text) noexcept {
    for (auto l : {Language::R, Language::Python, Language::TypeScript, Language::Stata, Language::Go,
                   Language::Rust, Language::C, Language::Cpp, Language::Unknown})
        if (text::iequals(text, to_string(l))) return l;
    if (text::iequals(text, "cpp")) return Language::Cpp;
    return std::nullopt;
}

const std::vector<LanguageProfile>& language_profiles() {
    static const std::vector<LanguageProfile> profiles{
        {Language::Rust, "Cargo.toml", {"cargo test", "cargo clippy"}, "rustdoc comments"},
        {Language::Go, "go.mod", {"go test ./..."}, "godoc comments"},
        {Language::Python, "pyproject.toml", {"pytest", "tox"}, "docstrings"},
        {Language::TypeScript, "package.json", {"npm test", "eslint"}, "TSDoc comments"},
        {Language::R, "DESCRIPTION", {"R CMD check --as-cran"}, "roxygen2"},
        {Language::Cpp, "CMakeLists.txt + .cpp", {"<unit test runner>"}, "Doxygen comments"},
        {Language::C, "Makefile + .c", {"<unit test runner>"}, "Doxygen comments"},
        {Language::Stata, ".ado files", {"do {do_file}"}, "help files (.sthlp)"},
    };
    return profiles;
}

const LanguageProfile& profile_for(Language l) {
    static const LanguageProfile unknown{Language::Unknown, "", {}, ""};
    for (const auto& p : language_profiles())
        if (p.language == l) return p;
    return unknown;
}

namespace {

// Extensions of regular files below `repo`, skipping VCS and dependency dirs.
std::set<std::string> file_extensions(const fs::path& repo) {
    std::set<std::string> out;
    std::error_code ec;
    auto it = fs::recursive_directory_iterator(repo, fs::directory_options::skip_permission_denied, ec);
    if (ec) throw IoError("cannot list " + repo.string() + ": " + ec.message());
    for (; it != fs::recursive_directory_iterator(); it.increment(ec)) {
        if (ec) break;
        const auto name = it->path().filename().string();
        if (it->is_directory(ec)) {
            if (name == ".git" || name == "node_modules" || name == "target" || it.depth() >= 4)
                it.disable_recursion_pending();
            continue;
        }
        if (it->is_regular_file(ec)) out.insert(it->path().extension().string());
    }
    return out;
}

} // namespace

LanguageProfile detect_language(const fs::path& repo) {
    std::error_code ec;
    if (!fs::is_directory(repo, ec)) throw IoError("repository " + repo.string() + " is not readable");
    auto has = [&](const char* name) { return fs::is_regular_file(repo / name, ec); };
    auto exts = file_extensions(repo);
    auto ext = [&](const char* e) { return exts.count(e) > 0; };

    for (const auto& p : language_profiles()) {
        bool match = false;
        switch (p.language) {
        case Language::Rust: match = has("Cargo.toml"); break;
        case Language::Go: match = has("go.mod"); break;
        case Language::Python: match = has("pyproject.toml"); break;
        case Language::TypeScript: match = has("package.json"); break;
        case Language::R: match = has("DESCRIPTION"); break;
        case Language::Cpp: match = has("CMakeLists.txt") && ext(".cpp"); break;
        case Language::C: match = has("Makefile") && ext(".c"); break;
        case Language::Stata: match = ext(".ado"); break;
        case Language::Unknown: break;
        }
        if (match) return p;
    }
    return profile_for(Language::Unknown);
}

std::vector<std::string> validation_commands(const LanguageProfile& profile) {
    if (!profile.known()) throw ConfigError("no language profile detected; validation commands unknown");
    return profile.validation;
}

bool needs_validation_override(const LanguageProfile& profile) {
    return profile.language == Language::C || profile.language == Language::Cpp;
}

// ---------------------------------------------------------------------------
// Layout and push policy

void WorkspaceLayout::ensure() const {
    std::error_code ec;
    for (const auto& d : {ref_dir(), runs_dir(), logs_dir(), tmp_dir()}) {
        fs::create_directories(d, ec);
        if (ec) throw IoError("cannot create " + d.string() + ": " + ec.message());
    }
}

PushClass push_class(const fs::path& relative) {
    auto rel = relative.lexically_normal();
    auto first = rel.begin();
    if (first == rel.end()) return PushClass::Local;
    if (*first == "context.md" || *first == "logs" || *first == "tmp") return PushClass::Local;
    for (const auto& part : rel)
        if (part == "logs" || part == "tmp") return PushClass::Local;
    return PushClass::Pushed;
}

std::vector<std::string> pushed_files(const WorkspaceLayout& layout) {
    std::vector<std::string> out;
    std::error_code ec;
    if (!fs::is_directory(layout.dir(), ec)) return out;
    for (auto it = fs::recursive_directory_iterator(layout.dir(), ec);
         it != fs::recursive_directory_iterator(); it.increment(ec)) {
        if (ec) break;
        if (!it->is_regular_file(ec)) continue;
        auto rel = fs::relative(it->path(), layout.dir(), ec);
        if (push_class(rel) == PushClass::Pushed)
            out.push_back((fs::path(layout.repo_name) / rel).generic_string());
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::optional<RequestId> RequestId::parse(std::string_view id) {
    static const std::regex re(R"(^(\d{4}-\d{2}-\d{2})-([a-z0-9][a-z0-9-]*)$)");
    std::cmatch m;
    std::string s(id);
    if (!std::regex_match(s.c_str(), m, re)) return std::nullopt;
    return RequestId{m[1].str(), m[2].str()};
}

std::string make_request_id(const std::string& date, std::string_view directive) {
    auto slug = text::slugify(directive);
    return date + "-" + (slug.empty() ? std::string("request") : slug);
}

// ---------------------------------------------------------------------------
// Handoff

namespace {

struct Section {
    std::string heading;
    std::string body;
};

std::string trimmed(std::string_view s) { return std::string(text::trim(s)); }

// Body of the first `## <name>` section (case-insensitive), or nullopt.
std::optional<std::string> h2_section(const std::string& md, std::string_view name) {
    auto lines = text::split_lines(md);
    std::optional<std::string> body;
    for (auto line : lines) {
        if (body) {
            if (text::starts_with(line, "## ") || text::starts_with(line, "# ")) break;
            *body += line;
            *body += '\n';
        } else if (text::starts_with(line, "## ") && text::iequals(text::trim(line.substr(3)), name)) {
            body.emplace();
        }
    }
    return body;
}

// Splits `body` at headings of the given prefix ("### " or "## "). Text
// before the first heading comes back with an empty heading.
std::vector<Section> split_sections(std::string_view body, std::string_view prefix) {
    std::vector<Section> out{{"", ""}};
    for (auto line : text::split_lines(body)) {
        if (text::starts_with(line, prefix)) {
            out.push_back({trimmed(line.substr(prefix.size())), ""});
            continue;
        }
        out.back().body += line;
        out.back().body += '\n';
    }
    return out;
}

void append_block(std::string& dst, const std::string& block) {
    if (block.empty()) return;
    if (!dst.empty()) dst += "\n\n";
    dst += block;
}

bool assign_known(HandoffContext& ctx, std::string_view heading, const std::string& body) {
    if (text::iequals(heading, "Prior decisions")) append_block(ctx.prior_decisions, body);
    else if (text::iequals(heading, "Known issues")) append_block(ctx.known_issues, body);
    else if (text::iequals(heading, "Technical insights")) append_block(ctx.technical_insights, body);
    else return false;
    return true;
}

constexpr std::string_view kNoItems = "No handoff items.";

} // namespace

HandoffContext handoff_from_log_entry(const std::string& log_entry) {
    HandoffContext ctx;
    auto section = h2_section(log_entry, "Handoff notes");
    if (!section) {
        ctx.warnings.emplace_back("log entry has no '## Handoff notes' section");
        return ctx;
    }
    for (const auto& s : split_sections(*section, "### ")) {
        auto body = trimmed(s.body);
        if (s.heading.empty()) {
            append_block(ctx.other, body);
        } else if (!assign_known(ctx, s.heading, body)) {
            append_block(ctx.other, body.empty() ? "### " + s.heading : "### " + s.heading + "\n" + body);
        }
    }
    return ctx;
}

std::string render_handoff(const HandoffContext& ctx, const std::string& request_id) {
    std::ostringstream ss;
    ss << "# Handoff\n\nSource run: " << request_id << "\n";
    if (ctx.empty()) {
        ss << '\n' << kNoItems << '\n';
        return ss.str();
    }
    auto emit = [&](const char* heading, const std::string& body) {
        if (!body.empty()) ss << "\n## " << heading << "\n\n" << body << '\n';
    };
    emit("Prior decisions", ctx.prior_decisions);
    emit("Known issues", ctx.known_issues);
    emit("Technical insights", ctx.technical_insights);
    emit("Other", ctx.other);
    return ss.str();
}

HandoffContext parse_handoff(const std::string& md) {
    HandoffContext ctx;
    auto sections = split_sections(md, "## ");
    // Preamble: title, source line and the empty-stanza marker are expected.
    std::string stray;
    for (auto line : text::split_lines(sections.front().body)) {
        auto t = text::trim(line);
        if (t.empty() || text::starts_with(t, "# ") || text::starts_with(t, "Source run:") || t == kNoItems)
            continue;
        stray += line;
        stray += '\n';
    }
    if (!trimmed(stray).empty()) {
        ctx.warnings.emplace_back("text outside any section kept under 'other'");
        append_block(ctx.other, trimmed(stray));
    }
    for (std::size_t i = 1; i < sections.size(); ++i) {
        const auto& s = sections[i];
        auto body = trimmed(s.body);
        if (assign_known(ctx, s.heading, body)) continue;
        if (text::iequals(s.heading, "Other")) append_block(ctx.other, body);
        else append_block(ctx.other, body.empty() ? "## " + s.heading : "## " + s.heading + "\n" + body);
    }
    return ctx;
}

HandoffContext read_handoff(const WorkspaceLayout& layout) {
    std::error_code ec;
    if (!fs::exists(layout.handoff(), ec)) return {};
    return parse_handoff(read_file(layout.handoff()));
}

std::string what_changed(const std::string& log_entry) {
    auto s = h2_section(log_entry, "What changed");
    auto body = s ? trimmed(*s) : std::string{};
    return body.empty() ? "(no summary recorded)" : body;
}

// ---------------------------------------------------------------------------
// Sync

std::string_view to_string(SyncStatus s) noexcept {
    switch (s) {
    case SyncStatus::Synced: return "synced";
    case SyncStatus::PreconditionFailed: return "precondition-failed";
    case SyncStatus::PushFailed: return "push-failed";
    }
    return "?";
}

namespace {

std::optional<std::string> try_read_file(const fs::path& p) {
    std::error_code ec;
    if (!fs::is_regular_file(p, ec)) return std::nullopt;
    return read_file(p);
}

std::string changelog_with(const std::optional<std::string>& current, const std::string& header,
                           const std::string& body, bool& added) {
    std::string existing = current.value_or("# Changelog\n");
    for (auto line : text::split_lines(existing)) {
        if (line == header) {
            added = false;
            return existing;
        }
    }
    added = true;
    std::string entry = header + "\n\n" + body + "\n";
    // Newest first, right below the title.
    auto lines = text::split_lines(existing);
    std::string out;
    std::size_t i = 0;
    if (!lines.empty() && text::starts_with(lines[0], "# ")) {
        out += lines[0];
        out += "\n\n";
        i = 1;
        while (i < lines.size() && text::trim(lines[i]).empty()) ++i;
    }
    out += entry;
    if (i < lines.size()) out += '\n';
    for (; i < lines.size(); ++i) {
        out += lines[i];
        out += '\n';
    }
    return out;
}

} // namespace

SyncReport sync_workspace(const WorkspaceLayout& layout, const RunDirectory& run_dir,
                          const std::string& request_id, const SyncOptions& opts) {
    SyncReport report;
    auto fail = [&](std::string msg) {
        report.status = SyncStatus::PreconditionFailed;
        report.message = std::move(msg);
        return report;
    };
    auto id = RequestId::parse(request_id);
    if (!id) return fail("request id '" + request_id + "' is not <date>-<slug>");
    auto log_entry = run_dir.try_read(ArtifactKind::LogEntry);
    if (!log_entry) return fail("log-entry.md is missing from the run directory");
    auto review = run_dir.try_read(ArtifactKind::Review);
    auto verdict = review ? try_parse_review_verdict(*review) : std::nullopt;
    if (!verdict || !verdict->permits_shipping())
        return fail("run does not carry a PASS or PASS_WITH_NOTE verdict");

    layout.ensure();
    const fs::path runs_file = layout.runs_dir() / (request_id + ".md");
    report.runs_file = fs::relative(runs_file, layout.root).generic_string();

    struct Snapshot {
        fs::path path;
        std::optional<std::string> before;
    };
    std::vector<Snapshot> snapshot;
    for (const auto& p : {runs_file, layout.changelog(), layout.handoff(), layout.docs()})
        snapshot.push_back({p, try_read_file(p)});

    const std::string header = "## " + id->date + " — " + id->slug;
    write_file(runs_file, *log_entry);
    write_file(layout.changelog(),
               changelog_with(snapshot[1].before, header, what_changed(*log_entry), report.changelog_added));
    write_file(layout.handoff(), render_handoff(handoff_from_log_entry(*log_entry), request_id));
    if (auto docs = run_dir.try_read(ArtifactKind::Docs)) write_file(layout.docs(), *docs);
    else if (!snapshot[3].before) write_file(layout.docs(), "# Documentation changes\n\nNone.\n");

    if (!opts.git || !opts.git->is_repository(layout.root)) {
        report.message = "workspace is not a git repository; sync kept local";
        return report;
    }

    GitParams params;
    params.actor = opts.actor;
    params.run_dir = run_dir.root();
    params.remote = opts.remote;
    params.paths = pushed_files(layout);
    params.message = "workspace: sync " + request_id;
    auto staged = git_ops(*opts.git, layout.root, GitAction::Stage, params, opts.journal);
    auto committed = staged.ok() ? git_ops(*opts.git, layout.root, GitAction::Commit, params, opts.journal)
                                 : staged;
    GitResult pushed{GitStatus::NoOp, "no remote"};
    if (committed.ok() && opts.git->remote_url(layout.root, opts.remote)) {
        params.branch = opts.git->current_branch(layout.root);
        pushed = git_ops(*opts.git, layout.root, GitAction::Push, params, opts.journal);
        report.pushed = pushed.status == GitStatus::Ok;
    }
    if (committed.ok() && pushed.ok()) {
        if (!report.pushed) report.message = "workspace has no remote '" + opts.remote + "'; committed locally";
        return report;
    }

    // Roll the tree back to where it was before this sync.
    for (const auto& s : snapshot) {
        std::error_code ec;
        if (s.before) write_file(s.path, *s.before);
        else fs::remove(s.path, ec);
    }
    GitParams revert = params;
    revert.paths = pushed_files(layout);
    revert.message = "workspace: revert sync " + request_id;
    git_ops(*opts.git, layout.root, GitAction::Stage, revert, opts.journal);
    git_ops(*opts.git, layout.root, GitAction::Commit, revert, opts.journal);
    report.status = SyncStatus::PushFailed;
    report.rolled_back = true;
    report.changelog_added = false;
    const auto& failed = committed.ok() ? pushed : committed;
    report.message = "workspace " + std::string(to_string(failed.status)) + ": " + failed.message;
    return report;
}

std::string render_context(const fs::path& repo, GitLayer& git, const LanguageProfile& profile) {
    std::ostringstream ss;
    ss << "# Context\n\n";
    ss << "repository: " << repo.filename().string() << '\n';
    auto remote = git.remote_url(repo, "origin");
    ss << "remote: " << (remote ? *remote : std::string("(none)")) << '\n';
    auto branch = git.current_branch(repo);
    ss << "branch: " << (branch.empty() ? std::string("(unknown)") : branch) << '\n';
    ss << "language: " << to_string(profile.language) << '\n';
    if (profile.known()) {
        ss << "marker: " << profile.marker << '\n';
        ss << "validation: " << text::join(profile.validation, "; ") << '\n';
        ss << "docs: " << profile.doc_convention << '\n';
    }
    return ss.str();
}

// ---------------------------------------------------------------------------
// Lint

LintReport validate_workspace(const fs::path& root, GitLayer* git) {
    LintReport report;
    auto add = [&](std::string path, std::string kind, std::string msg) {
        report.violations.push_back({std::move(path), std::move(kind), std::move(msg)});
    };
    std::error_code ec;
    if (!fs::is_directory(root, ec)) {
        add(root.string(), "layout", "workspace root does not exist");
        return report;
    }

    static const std::set<std::string> allowed{"context.md", "CHANGELOG.md", "HANDOFF.md", "docs.md",
                                               "ref", "runs", "logs", "tmp"};
    static const std::regex dated_md(R"(^\d{4}-\d{2}-\d{2}-[a-z0-9][a-z0-9-]*\.md$)");

    std::vector<fs::path> repos;
    for (const auto& e : fs::directory_iterator(root, ec)) {
        auto name = e.path().filename().string();
        if (name.empty() || name.front() == '.') continue;
        if (e.is_directory()) repos.push_back(e.path());
    }
    std::sort(repos.begin(), repos.end());

    for (const auto& dir : repos) {
        const auto repo = dir.filename().string();
        for (const char* required : {"CHANGELOG.md", "HANDOFF.md", "docs.md"})
            if (!fs::is_regular_file(dir / required, ec))
                add(repo + "/" + required, "layout", "required file is missing");
        if (!fs::is_directory(dir / "runs", ec)) add(repo + "/runs", "layout", "runs/ is missing");

        for (const auto& e : fs::directory_iterator(dir, ec)) {
            auto name = e.path().filename().string();
            if (name.front() == '.') continue;
            if (!allowed.count(name)) add(repo + "/" + name, "layout", "unexpected entry");
        }

        if (fs::is_directory(dir / "runs", ec)) {
            for (const auto& e : fs::directory_iterator(dir / "runs", ec)) {
                auto name = e.path().filename().string();
                bool ok = e.is_directory() ? RequestId::parse(name).has_value()
                                           : std::regex_match(name, dated_md);
                if (!ok)
                    add(repo + "/runs/" + name, "naming",
                        e.is_directory() ? "active run directory is not named <date>-<slug>"
                                         : "completed run log is not named <date>-<slug>.md");
            }
        }

        if (fs::is_regular_file(dir / "HANDOFF.md", ec)) {
            try {
                for (const auto& w : parse_handoff(read_file(dir / "HANDOFF.md")).warnings)
                    add(repo + "/HANDOFF.md", "handoff", w);
            } catch (const Error& e) {
                add(repo + "/HANDOFF.md", "handoff", e.what());
            }
        }
    }

    if (git && git->is_repository(root)) {
        for (const auto& tracked : git->tracked_files(root)) {
            fs::path p(tracked);
            auto it = p.begin();
            if (it == p.end() || ++it == p.end()) continue;
            fs::path rel;
            for (; it != p.end(); ++it) rel /= *it;
            if (push_class(rel) == PushClass::Local)
                add(tracked, "push-policy", "local-only file is staged or tracked for push");
        }
    }
    return report;
}

} // namespace gatehouse
