#include "gatehouse/run_directory.hpp"

#include <fstream>
#include <mutex>
#include <sstream>
#include <system_error>

#include "gatehouse/errors.hpp"

namespace fs = std::filesystem;

namespace gatehouse {

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

namespace {

thread_local AgentRole t_actor = AgentRole::Leader;
std::mutex g_observer_mu;
WriteObserver g_observer;

void notify(const fs::path& p) {
    std::lock_guard lock(g_observer_mu);
    if (g_observer) g_observer(p, t_actor);
}

} // namespace

AgentRole current_actor() noexcept { return t_actor; }

ActorScope::ActorScope(AgentRole role) noexcept : previous_(t_actor) { t_actor = role; }
ActorScope::~ActorScope() { t_actor = previous_; }

void set_write_observer(WriteObserver observer) {
    std::lock_guard lock(g_observer_mu);
    g_observer = std::move(observer);
}

void write_file(const fs::path& p, const std::string& content) {
    notify(p);
    std::error_code ec;
    if (p.has_parent_path()) fs::create_directories(p.parent_path(), ec);
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + p.string());
    out << content;
    if (!out) throw IoError("short write to " + p.string());
}

void append_file(const fs::path& p, const std::string& content) {
    notify(p);
    std::error_code ec;
    if (p.has_parent_path()) fs::create_directories(p.parent_path(), ec);
    std::ofstream out(p, std::ios::binary | std::ios::app);
    if (!out) throw IoError("cannot append to " + p.string());
    out << content;
}

void RunDirectory::ensure_readable() const {
    std::error_code ec;
    if (!fs::is_directory(root_, ec))
        throw IoError("run directory " + root_.string() + " does not exist");
    fs::directory_iterator it(root_, ec);
    if (ec) throw IoError("run directory " + root_.string() + " unreadable: " + ec.message());
}

void RunDirectory::create() const {
    std::error_code ec;
    fs::create_directories(access_log_dir(), ec);
    if (ec) throw IoError("cannot create run directory " + root_.string() + ": " + ec.message());
}

std::optional<fs::path> RunDirectory::locate(ArtifactKind k) const {
    std::error_code ec;
    auto p = path_of(k);
    if (fs::is_regular_file(p, ec)) return p;
    if (k == ArtifactKind::Architecture) {
        auto caps = root_ / "ARCHITECTURE.md";
        if (fs::is_regular_file(caps, ec)) return caps;
    }
    return std::nullopt;
}

bool RunDirectory::exists(ArtifactKind k) const { return locate(k).has_value(); }

std::string RunDirectory::read(ArtifactKind k) const {
    auto p = locate(k);
    if (!p) throw IoError(std::string(file_name(k)) + " missing from " + root_.string());
    return read_file(*p);
}

std::optional<std::string> RunDirectory::try_read(ArtifactKind k) const {
    auto p = locate(k);
    if (!p) return std::nullopt;
    return read_file(*p);
}

void RunDirectory::write(ArtifactKind k, const std::string& content) const {
    write_file(path_of(k), content);
    if (k == ArtifactKind::Architecture) {
        std::error_code ec;
        fs::remove(root_ / "ARCHITECTURE.md", ec);
    }
}

void RunDirectory::remove(ArtifactKind k) const {
    std::error_code ec;
    fs::remove(path_of(k), ec);
    if (k == ArtifactKind::Architecture) fs::remove(root_ / "ARCHITECTURE.md", ec);
}

ArtifactSet RunDirectory::present() const {
    ArtifactSet out;
    for (auto k : kAllArtifacts)
        if (exists(k)) out.insert(k);
    return out;
}

} // namespace gatehouse
