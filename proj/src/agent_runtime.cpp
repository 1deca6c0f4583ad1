#include "gatehouse/agent_runtime.hpp"

#include <cstdio>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "gatehouse/errors.hpp"
#include "gatehouse/process.hpp"
#include "text.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace gatehouse {

std::string_view to_string(BackendKind k) noexcept {
    switch (k) {
    case BackendKind::Scripted: return "scripted";
    case BackendKind::Subprocess: return "subprocess";
    case BackendKind::Remote: return "remote";
    case BackendKind::Builtin: return "builtin";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// Briefing

std::string Briefing::render() const {
    std::ostringstream ss;
    ss << "attempt: " << attempt << '\n';
    ss << "directive:\n";
    for (auto line : text::split_lines(directive)) ss << "  " << line << '\n';
    ss << "granted:\n";
    for (const auto& p : granted_paths) ss << "  - " << p << '\n';
    if (!language_notes.empty()) ss << "language: " << language_notes << '\n';
    if (!validation_commands.empty()) {
        ss << "validation:\n";
        for (const auto& c : validation_commands) ss << "  - " << c << '\n';
    }
    if (!context.empty()) {
        ss << "context:\n";
        for (std::size_t i = 0; i < context.size(); ++i) {
            ss << "  [" << i + 1 << "]\n";
            for (auto line : text::split_lines(context[i])) ss << "    " << line << '\n';
        }
    }
    return ss.str();
}

std::string Briefing::digest() const {
    // FNV-1a, 64 bit.
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : render()) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// ---------------------------------------------------------------------------
// dispatch

AgentOutcome dispatch(const DispatchRequest& req, AgentBackend& backend) {
    if (!req.sandbox || !req.matrix || !req.clock)
        throw ConfigError("dispatch request is missing its sandbox, matrix or clock");
    if (req.deadline.count() <= 0) throw ConfigError("dispatch deadline must be positive");
    if (req.sandbox->role() != req.role)
        throw ConfigError("sandbox belongs to " + std::string(to_string(req.sandbox->role())));
    if (!req.workflow.dispatches(req.role))
        throw ConfigError(std::string(to_string(req.role)) + " is not in the DAG of workflow " +
                          std::to_string(req.workflow.id));
    for (const auto& p : req.briefing.granted_paths) req.sandbox->resolve(p);

    auto start = std::chrono::steady_clock::now();
    AgentOutcome outcome = [&] {
        ActorScope scope(req.role);
        return backend.run(req);
    }();
    auto elapsed = std::chrono::steady_clock::now() - start;
    if (elapsed > req.deadline) {
        throw TimeoutError(std::string(to_string(req.role)) + " exceeded its deadline of " +
                           std::to_string(req.deadline.count()) + " ms");
    }

    for (auto k : req.sandbox->foreign_artifacts(*req.matrix))
        req.sandbox->audit().append({req.clock->now(), req.role, k, AuditEvent::Exposed});

    outcome.produced = req.sandbox->produced();
    outcome.access_log = req.sandbox->audit().entries();

    if (outcome.status == OutcomeStatus::Signaled) {
        if (!outcome.signal) throw ProtocolViolation("SIGNALED outcome without a signal");
        if (outcome.signal->raiser != req.role)
            throw ProtocolViolation("signal raiser does not match the dispatched role");
        if (!signal_owner_check(*outcome.signal)) {
            throw ProtocolViolation(std::string(to_string(outcome.signal->kind)) + " raised by " +
                                    std::string(to_string(req.role)) + " is not permitted");
        }
        return outcome;
    }
    if (outcome.signal) throw ProtocolViolation("COMPLETED outcome carries a signal");

    std::vector<std::string> missing;
    for (auto k : contracted_artifacts(req.role, req.workflow))
        if (!outcome.produced.count(k)) missing.emplace_back(file_name(k));
    if (!missing.empty()) {
        throw ContractViolation(std::string(to_string(req.role)) +
                                " reported COMPLETED without: " + text::join(missing, ", "));
    }
    return outcome;
}

// ---------------------------------------------------------------------------
// Scenario parsing

namespace {

std::string unquote(std::string_view s, int line) {
    s = text::trim(s);
    if (s.size() < 2 || s.front() != '"' || s.back() != '"')
        throw ConfigError("script line " + std::to_string(line) + ": expected a quoted string");
    std::string out;
    for (std::size_t i = 1; i + 1 < s.size(); ++i) {
        char c = s[i];
        if (c == '\\' && i + 2 < s.size()) {
            char n = s[++i];
            switch (n) {
            case 'n': out += '\n'; break;
            case 't': out += '\t'; break;
            default: out += n; break;
            }
        } else {
            out += c;
        }
    }
    return out;
}

} // namespace

Scenario Scenario::parse(const std::string& body) {
    Scenario sc;
    auto lines = text::split_lines(body);
    auto error = [](int line, const std::string& msg) {
        return ConfigError("script line " + std::to_string(line) + ": " + msg);
    };
    auto current = [&]() -> script::Block& {
        if (sc.blocks.empty()) sc.blocks.push_back({std::nullopt, {}, 1});
        return sc.blocks.back();
    };

    // Reads a heredoc body starting after line index i; returns the content.
    auto heredoc = [&](std::size_t& i, std::string_view tag, int line_no) {
        std::string content;
        for (++i; i < lines.size(); ++i) {
            if (lines[i] == tag) return content;
            content += lines[i];
            content += '\n';
        }
        throw error(line_no, "unterminated heredoc <<" + std::string(tag));
    };

    for (std::size_t i = 0; i < lines.size(); ++i) {
        int line_no = static_cast<int>(i) + 1;
        auto line = text::trim(lines[i]);
        if (line.empty() || line.front() == '#') continue;
        auto sp = line.find(' ');
        auto cmd = line.substr(0, sp);
        auto rest = sp == std::string_view::npos ? std::string_view{} : text::trim(line.substr(sp + 1));

        if (cmd == "attempt") {
            script::Block b;
            b.line = line_no;
            if (rest != "*") {
                try {
                    b.attempt = std::stoi(std::string(rest));
                } catch (...) {
                    throw error(line_no, "attempt expects a number or '*'");
                }
                if (*b.attempt < 1) throw error(line_no, "attempt numbers start at 1");
            }
            sc.blocks.push_back(std::move(b));
        } else if (cmd == "read") {
            auto k = parse_artifact(rest);
            if (!k) throw error(line_no, "unknown artifact '" + std::string(rest) + "'");
            current().steps.push_back(script::Read{*k});
        } else if (cmd == "write") {
            auto sp2 = rest.find(' ');
            if (rest.empty() || sp2 == std::string_view::npos)
                throw error(line_no, "write expects a path and content");
            std::string path(rest.substr(0, sp2));
            auto tail = text::trim(rest.substr(sp2 + 1));
            std::string content;
            if (text::starts_with(tail, "<<")) content = heredoc(i, text::trim(tail.substr(2)), line_no);
            else content = unquote(tail, line_no);
            current().steps.push_back(script::Write{std::move(path), std::move(content)});
        } else if (cmd == "signal") {
            auto sp2 = rest.find(' ');
            auto kind = parse_signal_kind(rest.substr(0, sp2));
            if (!kind) throw error(line_no, "signal expects HOLD, BLOCK or STOP");
            std::string payload;
            if (sp2 != std::string_view::npos) {
                auto tail = text::trim(rest.substr(sp2 + 1));
                if (text::starts_with(tail, "<<"))
                    payload = heredoc(i, text::trim(tail.substr(2)), line_no);
                else
                    payload = unquote(tail, line_no);
            }
            current().steps.push_back(script::Raise{*kind, std::move(payload)});
        } else if (cmd == "complete") {
            current().steps.push_back(script::Complete{});
        } else if (cmd == "fail") {
            current().steps.push_back(script::Fail{rest.empty() ? "scripted failure" : unquote(rest, line_no)});
        } else if (cmd == "sleep") {
            try {
                current().steps.push_back(
                    script::Sleep{std::chrono::milliseconds(std::stoll(std::string(rest)))});
            } catch (...) {
                throw error(line_no, "sleep expects milliseconds");
            }
        } else {
            throw error(line_no, "unknown command '" + std::string(cmd) + "'");
        }
    }

    if (sc.blocks.empty()) throw ConfigError("script is empty");
    for (const auto& b : sc.blocks) {
        bool terminal = false;
        for (const auto& s : b.steps) {
            if (terminal) throw error(b.line, "steps after a terminal step");
            terminal = std::holds_alternative<script::Complete>(s) ||
                       std::holds_alternative<script::Raise>(s) ||
                       std::holds_alternative<script::Fail>(s);
        }
        if (!terminal) throw error(b.line, "block does not end in complete, signal or fail");
    }
    return sc;
}

const script::Block& Scenario::block_for(int attempt) const {
    for (const auto& b : blocks)
        if (b.attempt && *b.attempt == attempt) return b;
    for (const auto& b : blocks)
        if (!b.attempt) return b;
    throw ConfigError("script has no block for attempt " + std::to_string(attempt));
}

// ---------------------------------------------------------------------------
// Scripted replay

AgentOutcome run_scripted(const Scenario& scenario, const DispatchRequest& req) {
    if (!req.sandbox || !req.matrix || !req.clock)
        throw ConfigError("scripted dispatch needs a sandbox, matrix and clock");
    const auto& block = scenario.block_for(req.briefing.attempt);
    auto& box = *req.sandbox;

    for (const auto& step : block.steps)
        if (auto* w = std::get_if<script::Write>(&step)) box.resolve(w->path);

    std::ostringstream transcript;
    transcript << "# " << to_string(req.role) << " attempt " << req.briefing.attempt << " ("
               << req.briefing.digest() << ")\n";
    for (const auto& c : req.briefing.context) transcript << "context: " << c << "\n";
    auto flush = [&] {
        if (req.log_path) append_file(*req.log_path, transcript.str());
    };

    const auto start = std::chrono::steady_clock::now();
    for (const auto& step : block.steps) {
        if (auto* r = std::get_if<script::Read>(&step)) {
            auto body = box.read_artifact(r->artifact, *req.matrix, *req.clock);
            transcript << "read " << file_name(r->artifact) << (body ? "" : " (unavailable)") << '\n';
        } else if (auto* w = std::get_if<script::Write>(&step)) {
            write_file(box.resolve(w->path), w->content);
            transcript << "write " << w->path << '\n';
        } else if (auto* s = std::get_if<script::Sleep>(&step)) {
            auto left = req.deadline - std::chrono::duration_cast<std::chrono::milliseconds>(
                                           std::chrono::steady_clock::now() - start);
            if (s->duration >= left) {
                std::this_thread::sleep_for(std::max(left, std::chrono::milliseconds(0)));
                flush();
                throw TimeoutError(std::string(to_string(req.role)) + " exceeded its deadline");
            }
            std::this_thread::sleep_for(s->duration);
        } else if (auto* f = std::get_if<script::Fail>(&step)) {
            transcript << "fail " << f->message << '\n';
            flush();
            throw DispatchFailure(std::string(to_string(req.role)) + " crashed: " + f->message,
                                  transcript.str());
        } else if (auto* sig = std::get_if<script::Raise>(&step)) {
            Signal signal{sig->kind, req.role, sig->payload};
            transcript << "signal " << to_string(sig->kind) << '\n';
            flush();
            if (!signal_owner_check(signal)) {
                throw ProtocolViolation(std::string(to_string(sig->kind)) + " raised by " +
                                        std::string(to_string(req.role)) + " is not permitted");
            }
            auto out = AgentOutcome::signaled(std::move(signal));
            out.produced = box.produced();
            out.access_log = box.audit().entries();
            return out;
        } else {
            transcript << "complete\n";
            flush();
            auto out = AgentOutcome::completed();
            out.produced = box.produced();
            out.access_log = box.audit().entries();
            return out;
        }
    }
    throw ConfigError("script block ended without a terminal step");
}

// ---------------------------------------------------------------------------
// Conforming placeholder scripts

namespace {

std::string heredoc_write(std::string_view path, std::string_view body) {
    std::string out = "write ";
    out += path;
    out += " <<EOF\n";
    out += body;
    if (!body.empty() && body.back() != '\n') out += '\n';
    out += "EOF\n";
    return out;
}

} // namespace

std::string conforming_script(AgentRole role, const WorkflowType& wf) {
    std::ostringstream ss;
    ss << "# conforming " << to_string(role) << " for workflow " << wf.id << '\n';
    auto owed = contracted_artifacts(role, wf);
    auto has = [&](ArtifactKind k) { return owed.count(k) > 0; };
    const auto matrix = AccessMatrix::canonical();

    for (auto k : matrix.readable(role)) {
        if (producer(k) == role || producer(k) == AgentRole::Leader) continue;
        if (k == ArtifactKind::Review || k == ArtifactKind::Shipper) continue;
        ss << "read " << file_name(k) << '\n';
    }

    switch (role) {
    case AgentRole::Planner:
        ss << heredoc_write("comprehension.md",
                            "# Comprehension\n\nInventory complete.\n\nSelf-test verdict: FULLY UNDERSTOOD\n");
        if (has(ArtifactKind::Spec))
            ss << heredoc_write("spec.md", "# Implementation specification\n\nImplement the requested change.\n");
        if (has(ArtifactKind::TestSpec))
            ss << heredoc_write("test-spec.md",
                                "# Test specification\n\nCompare against the reference implementation.\n\n"
                                "Tolerance: 1e-6\n");
        if (has(ArtifactKind::SimSpec))
            ss << heredoc_write("sim-spec.md",
                                "# Simulation specification\n\nScenario grid: N in {200, 500}.\n");
        break;
    case AgentRole::Builder:
        ss << heredoc_write("repo/CHANGES.txt", "builder change\n");
        ss << heredoc_write("implementation.md",
                            "# Implementation\n\nFiles changed: CHANGES.txt\n");
        break;
    case AgentRole::Tester:
        ss << heredoc_write("audit.md",
                            "# Audit\n\n| test | tolerance | result |\n|------|-----------|--------|\n"
                            "| reference comparison | 1e-6 | pass |\n");
        break;
    case AgentRole::Simulator:
        ss << heredoc_write("simulation.md",
                            "# Simulation\n\n| N | bias | result |\n|---|------|--------|\n| 200 | 0.01 | pass |\n");
        break;
    case AgentRole::Scriber:
        ss << heredoc_write("repo/Architecture.md", "# Architecture\n\n```mermaid\ngraph TD\n  A-->B\n```\n");
        ss << heredoc_write("Architecture.md", "# Architecture\n\n```mermaid\ngraph TD\n  A-->B\n```\n");
        ss << heredoc_write("log-entry.md",
                            "# Log entry\n\n## What changed\n\n- Applied the requested change.\n\n"
                            "## Handoff notes\n\n### Prior decisions\n\n- Kept the public API.\n\n"
                            "### Known issues\n\n- None.\n\n### Technical insights\n\n- None.\n");
        ss << heredoc_write("docs.md", "# Documentation changes\n\n- None.\n");
        break;
    case AgentRole::Reviewer:
        ss << heredoc_write("review.md", "verdict: PASS\n\nAll checks passed.\n");
        break;
    case AgentRole::Shipper:
        ss << heredoc_write("shipper.md", "# Shipper\n\nNo git actions (scripted).\n");
        break;
    case AgentRole::Leader: break;
    }
    ss << "complete\n";
    return ss.str();
}

// ---------------------------------------------------------------------------
// Subprocess backend

AgentOutcome SubprocessBackend::run(const DispatchRequest& req) {
    if (!req.sandbox) throw ConfigError("subprocess dispatch needs a sandbox");
    ProcessOptions opts;
    opts.cwd = req.sandbox->root();
    opts.input = req.briefing.render();
    opts.timeout = req.deadline;
    opts.env = {"GATEHOUSE_ROLE=" + std::string(to_string(req.role)),
                "GATEHOUSE_ATTEMPT=" + std::to_string(req.briefing.attempt),
                "GATEHOUSE_WORKFLOW=" + std::to_string(req.workflow.id),
                "GATEHOUSE_SANDBOX=" + req.sandbox->root().string()};
    auto result = run_shell(command_, opts);

    std::string captured = "# " + std::string(to_string(req.role)) + " attempt " +
                           std::to_string(req.briefing.attempt) + "\n" + result.out;
    if (!result.err.empty()) captured += "--- stderr\n" + result.err;
    if (req.log_path) append_file(*req.log_path, captured);

    if (result.timed_out)
        throw TimeoutError(std::string(to_string(req.role)) + " exceeded its deadline");
    if (result.exit_code != 0) {
        throw DispatchFailure(std::string(to_string(req.role)) + " exited with status " +
                                  std::to_string(result.exit_code),
                              captured);
    }

    std::string_view last;
    for (auto line : text::split_lines(result.out))
        if (!text::trim(line).empty()) last = text::trim(line);
    if (last == "OUTCOME: COMPLETED") return AgentOutcome::completed();
    constexpr std::string_view kSignal = "OUTCOME: SIGNAL ";
    if (text::starts_with(last, kSignal)) {
        auto rest = last.substr(kSignal.size());
        auto sp = rest.find(' ');
        auto kind = parse_signal_kind(rest.substr(0, sp));
        if (!kind || sp == std::string_view::npos)
            throw DispatchFailure("malformed outcome line: " + std::string(last), captured);
        auto payload_path = req.sandbox->resolve(text::trim(rest.substr(sp + 1)));
        return AgentOutcome::signaled({*kind, req.role, read_file(payload_path)});
    }
    throw DispatchFailure(std::string(to_string(req.role)) + " reported no outcome line", captured);
}

// ---------------------------------------------------------------------------
// Remote backend

AgentOutcome RemoteBackend::run(const DispatchRequest& req) {
    if (!req.sandbox) throw ConfigError("remote dispatch needs a sandbox");
    if (!transport_) throw ConfigError("remote backend has no transport");
    auto reply = transport_->exchange(req.role, req.briefing.render());
    for (const auto& [path, _] : reply.files) req.sandbox->resolve(path);
    for (const auto& [path, content] : reply.files) write_file(req.sandbox->resolve(path), content);
    if (reply.signal) {
        auto s = *reply.signal;
        s.raiser = req.role;
        return AgentOutcome::signaled(std::move(s));
    }
    return AgentOutcome::completed();
}

// ---------------------------------------------------------------------------
// Configuration

bool BackendConfig::all_scripted() const {
    for (const auto& [role, backend] : backends)
        if (backend->kind() != BackendKind::Scripted) return false;
    return conforming_default || !backends.empty();
}

std::shared_ptr<AgentBackend> BackendConfig::backend_for(AgentRole role,
                                                         const WorkflowType& workflow) const {
    auto it = backends.find(role);
    if (it != backends.end()) return it->second;
    if (conforming_default)
        return std::shared_ptr<AgentBackend>(
            ScriptedBackend::from_text(conforming_script(role, workflow)));
    throw ConfigError("no backend configured for " + std::string(to_string(role)));
}

namespace {

std::shared_ptr<AgentBackend> backend_from_json(const json& j, const fs::path& base,
                                                const std::string& where) {
    auto kind = j.value("kind", std::string{});
    if (kind == "scripted") {
        if (j.contains("script"))
            return ScriptedBackend::from_text(read_file(base / j.at("script").get<std::string>()));
        if (j.contains("inline"))
            return ScriptedBackend::from_text(j.at("inline").get<std::string>());
        throw ConfigError(where + ": scripted backend needs 'script' or 'inline'");
    }
    if (kind == "subprocess") {
        if (!j.contains("command")) throw ConfigError(where + ": subprocess backend needs 'command'");
        return std::make_shared<SubprocessBackend>(j.at("command").get<std::string>());
    }
    if (kind == "remote")
        throw ConfigError(where + ": remote backends need a transport and are registered in code");
    throw ConfigError(where + ": unknown backend kind '" + kind + "'");
}

} // namespace

BackendConfig load_backend_config(const fs::path& path) {
    BackendConfig cfg;
    cfg.source = path;
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw ConfigError("backend config " + path.string() + ": " + e.what());
    }
    auto base = path.parent_path();
    try {
        if (j.contains("default")) {
            const auto& d = j.at("default");
            if (d.value("kind", std::string{}) == "scripted" && d.value("conforming", false))
                cfg.conforming_default = true;
            else
                throw ConfigError("default backend must be {\"kind\": \"scripted\", \"conforming\": true}");
        }
        if (j.contains("roles")) {
            for (const auto& [name, entry] : j.at("roles").items()) {
                auto role = parse_role(name);
                if (!role || *role == AgentRole::Leader)
                    throw ConfigError("backend config: unknown agent role '" + name + "'");
                cfg.backends[*role] = backend_from_json(entry, base, "role " + name);
            }
        }
        if (j.contains("deadline_seconds")) {
            auto secs = j.at("deadline_seconds").get<double>();
            if (secs <= 0) throw ConfigError("deadline_seconds must be positive");
            cfg.deadline = std::chrono::milliseconds(static_cast<long long>(secs * 1000));
        }
        if (j.contains("issues")) cfg.issues = base / j.at("issues").get<std::string>();
    } catch (const json::exception& e) {
        throw ConfigError("backend config " + path.string() + ": " + e.what());
    }
    return cfg;
}

} // namespace gatehouse
