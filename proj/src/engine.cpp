// Orchestrator run loop: leader setup, staged dispatch, signal handling,
// shipping and the run.json journal.

#include <algorithm>
#include <exception>
#include <future>
#include <set>
#include <sstream>
#include <thread>
#include <variant>

#include "gatehouse/errors.hpp"
#include "gatehouse/orchestrator.hpp"
#include "json.hpp"
#include "text.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace gatehouse {

namespace {

constexpr std::size_t kMaxCapturedOutput = 4000;

bool stage_has(const PlannedStage& st, AgentRole r) {
    return std::find(st.roles.begin(), st.roles.end(), r) != st.roles.end();
}

std::string role_name(AgentRole r) { return std::string(to_string(r)); }

const json& member(const json& j, const char* key) {
    static const json empty = json::object();
    auto it = j.find(key);
    return it != j.end() && it->is_object() ? *it : empty;
}

AgentRole role_from(const std::string& s) {
    auto r = parse_role(s);
    if (!r) throw IoError("run journal names unknown role '" + s + "'");
    return *r;
}

struct Halt {
    RunOutcome outcome;
    std::string message;
};

struct Rerun {
    std::size_t stage;
};

struct Done {};

using StepResult = std::variant<Done, Halt, Rerun>;

} // namespace

struct Orchestrator::Impl {
    EngineOptions opts;
    DispatchPlan plan;
    RunState run;
    RunDirectory dir;
    GitJournal journal;
    SystemClock system_clock;
    std::unique_ptr<LogicalClock> engine_clock;
    std::map<AgentRole, std::unique_ptr<LogicalClock>> role_clocks;
    std::map<AgentRole, std::unique_ptr<Sandbox>> sandboxes;

    // Journaled in run.json.
    std::string phase = "setup";
    std::optional<LanguageProfile> language;
    std::vector<std::string> validation;
    std::size_t stage = 0;
    std::set<AgentRole> members;
    std::optional<AgentRole> blocked_target;
    std::map<AgentRole, int> dispatches;
    std::vector<std::string> dispatch_log;
    std::map<AgentRole, std::vector<std::string>> context;
    struct Pending {
        std::string kind;  // "role", "language" or "validation"
        std::optional<AgentRole> role;
        std::string question;
    };
    std::optional<Pending> pending;
    std::vector<SignalRecord> signals;
    std::vector<Diagnostic> diagnostics;
    std::map<AgentRole, std::vector<AccessEntry>> last_access;
    std::optional<MechanicalReviewReport> review;
    std::optional<ShipReport> ship_report;
    std::vector<std::string> prior_channel;
    std::vector<RunReport> children;
    std::vector<std::string> child_ids;
    RunOutcome outcome = RunOutcome::Completed;
    std::string message;
    RunReport report;

    class BuiltinShipper;

    explicit Impl(EngineOptions o) : opts(std::move(o)), plan(DispatchPlan::compile(opts.workflow)), run(opts.workflow) {
        if (!opts.git) throw ConfigError("engine needs a git layer for the target repository");
        if (!opts.channel) throw ConfigError("engine needs a user channel");
        if (!RequestId::parse(opts.request_id))
            throw ConfigError("request id '" + opts.request_id + "' is not <date>-<slug>");
        dir = RunDirectory(opts.workspace.run_dir(opts.request_id));
        if (opts.logical_clock) engine_clock = std::make_unique<LogicalClock>();
        language = opts.language;
    }

    Clock& clock() { return engine_clock ? static_cast<Clock&>(*engine_clock) : system_clock; }

    Clock& role_clock(AgentRole r) {
        if (!opts.logical_clock) return system_clock;
        auto& c = role_clocks[r];
        if (!c) c = std::make_unique<LogicalClock>();
        return *c;
    }

    bool wrapper() const { return opts.workflow.id == 4 || opts.workflow.id == 8; }

    // -----------------------------------------------------------------------
    // Journal

    json to_journal() const {
        json j;
        j["request_id"] = opts.request_id;
        j["directive"] = opts.directive;
        j["workflow"] = opts.workflow.id;
        j["inner"] = opts.workflow.inner;
        j["target_repo"] = fs::absolute(opts.target_repo).lexically_normal().string();
        j["backend_config"] = opts.backends.source.empty() ? json(nullptr) : json(opts.backends.source.string());
        j["conforming_default"] = opts.backends.conforming_default;
        j["logical_clock"] = opts.logical_clock;
        j["validation_override"] = opts.validation_override;
        j["phase"] = phase;
        j["language"] = language ? json(std::string(to_string(language->language))) : json(nullptr);
        j["validation"] = validation;
        j["stage"] = stage;
        j["members"] = json::array();
        for (auto r : members) j["members"].push_back(role_name(r));
        j["blocked_target"] = blocked_target ? json(role_name(*blocked_target)) : json(nullptr);
        j["dispatches"] = json::object();
        for (const auto& [r, n] : dispatches) j["dispatches"][role_name(r)] = n;
        j["dispatch_log"] = dispatch_log;
        j["context"] = json::object();
        for (const auto& [r, c] : context) j["context"][role_name(r)] = c;
        if (pending) {
            j["pending"] = {{"kind", pending->kind}, {"question", pending->question}};
            if (pending->role) j["pending"]["role"] = role_name(*pending->role);
        } else {
            j["pending"] = nullptr;
        }
        j["signals"] = json::array();
        for (const auto& s : signals)
            j["signals"].push_back({{"kind", to_string(s.kind)}, {"raiser", role_name(s.raiser)},
                                    {"action", s.action}, {"detail", s.detail}});
        j["diagnostics"] = json::array();
        for (const auto& d : diagnostics) {
            json dj{{"kind", d.kind}, {"message", d.message}};
            if (d.role) dj["role"] = role_name(*d.role);
            j["diagnostics"].push_back(std::move(dj));
        }
        j["last_access"] = json::object();
        for (const auto& [r, entries] : last_access) {
            json lines = json::array();
            for (const auto& e : entries) lines.push_back(format_entry(e));
            j["last_access"][role_name(r)] = lines;
        }
        j["channel"] = channel_transcript();
        j["children"] = child_ids;
        j["outcome"] = to_string(outcome);
        j["message"] = message;
        return j;
    }

    void from_journal(const json& j) {
        phase = j.value("phase", std::string("setup"));
        if (j.contains("language") && !j["language"].is_null()) {
            auto l = parse_language(j["language"].get<std::string>());
            if (l) language = profile_for(*l);
        }
        validation = j.value("validation", std::vector<std::string>{});
        stage = j.value("stage", std::size_t{0});
        for (const auto& r : j.value("members", std::vector<std::string>{})) members.insert(role_from(r));
        if (j.contains("blocked_target") && !j["blocked_target"].is_null())
            blocked_target = role_from(j["blocked_target"].get<std::string>());
        for (const auto& [r, n] : member(j, "dispatches").items()) dispatches[role_from(r)] = n.get<int>();
        dispatch_log = j.value("dispatch_log", std::vector<std::string>{});
        for (const auto& [r, c] : member(j, "context").items())
            context[role_from(r)] = c.get<std::vector<std::string>>();
        if (j.contains("pending") && !j["pending"].is_null()) {
            Pending p;
            p.kind = j["pending"].value("kind", std::string("role"));
            p.question = j["pending"].value("question", std::string{});
            if (j["pending"].contains("role")) p.role = role_from(j["pending"]["role"].get<std::string>());
            pending = p;
        }
        for (const auto& s : j.value("signals", json::array())) {
            auto kind = parse_signal_kind(s.value("kind", std::string{}));
            if (!kind) throw IoError("run journal has a malformed signal record");
            signals.push_back({*kind, role_from(s.value("raiser", std::string{})), s.value("action", std::string{}),
                               s.value("detail", std::string{})});
        }
        for (const auto& d : j.value("diagnostics", json::array())) {
            Diagnostic diag{std::nullopt, d.value("kind", std::string{}), d.value("message", std::string{})};
            if (d.contains("role")) diag.role = role_from(d["role"].get<std::string>());
            diagnostics.push_back(std::move(diag));
        }
        for (const auto& [r, lines] : member(j, "last_access").items()) {
            std::string body;
            for (const auto& l : lines) body += l.get<std::string>() + "\n";
            last_access[role_from(r)] = parse_access_log(body);
        }
        prior_channel = j.value("channel", std::vector<std::string>{});
        child_ids = j.value("children", std::vector<std::string>{});
        if (auto o = parse_run_outcome(j.value("outcome", std::string{}))) outcome = *o;
        message = j.value("message", std::string{});
    }

    void persist(const std::optional<RunReport>& run_report = std::nullopt) {
        auto j = to_journal();
        auto path = dir.root() / "run.json";
        if (!run_report) {
            // Keep the recorded run-phase report across ship and status rewrites.
            std::error_code ec;
            if (fs::exists(path, ec)) {
                try {
                    auto old = json::parse(read_file(path));
                    if (old.contains("run_report")) j["run_report"] = old["run_report"];
                } catch (const json::exception&) {
                }
            }
        } else {
            j["run_report"] = json::parse(run_report->to_json());
        }
        write_file(path, j.dump(2) + "\n");
    }

    std::vector<std::string> channel_transcript() const {
        auto out = prior_channel;
        const auto& now = opts.channel->transcript();
        out.insert(out.end(), now.begin(), now.end());
        return out;
    }

    void write_status() { dir.write(ArtifactKind::Status, render_status(run)); }

    // -----------------------------------------------------------------------
    // Reports

    RunReport build_report() const {
        RunReport r;
        r.request_id = opts.request_id;
        r.workflow_id = opts.workflow.id;
        r.workflow_name = opts.workflow.name;
        r.final_state = run.current;
        r.outcome = outcome;
        const auto status = render_status(run);
        for (auto line : text::split_lines(status)) r.history.emplace_back(line);
        r.retries = run.retries;
        r.dispatches = dispatches;
        r.dispatch_log = dispatch_log;
        r.signals = signals;
        for (auto k : kAllArtifacts)
            if (dir.exists(k)) r.artifacts.emplace_back(file_name(k));
        r.review = review;
        r.diagnostics = diagnostics;
        r.channel = channel_transcript();
        r.ship = ship_report;
        r.children = children;
        r.message = message;
        return r;
    }

    RunReport finish(RunOutcome o, std::string msg, bool run_phase = true) {
        outcome = o;
        message = std::move(msg);
        if (o == RunOutcome::Shipped || o == RunOutcome::PartiallyShipped) phase = "done";
        else if (o == RunOutcome::AwaitingAuthorization) phase = "ready";
        else if (o == RunOutcome::Completed) phase = "complete";
        else if (o == RunOutcome::AwaitingAnswer) phase = pending && pending->kind != "role" ? "setup" : "stages";
        else phase = "halted";
        if (o != RunOutcome::Completed && o != RunOutcome::AwaitingAuthorization && o != RunOutcome::Shipped &&
            o != RunOutcome::AwaitingAnswer && !message.empty()) {
            opts.channel->notify(AgentRole::Leader, std::string(to_string(o)) + ": " + message);
        }
        report = build_report();
        std::error_code ec;
        fs::create_directories(dir.root(), ec);
        write_file(dir.root() / "report.json", report.to_json());
        write_file(dir.root() / "report.txt", report.to_text());
        persist(run_phase ? std::optional<RunReport>(report) : std::nullopt);
        return report;
    }

    RunReport halt_for(std::optional<AgentRole> role, std::exception_ptr eptr) {
        auto diag = [&](const char* kind, const std::string& msg, RunOutcome o) {
            diagnostics.push_back({role, kind, msg});
            return finish(o, msg);
        };
        try {
            std::rethrow_exception(eptr);
        } catch (const ContractViolation& e) {
            return diag("contract-violation", e.what(), RunOutcome::GateViolation);
        } catch (const ProtocolViolation& e) {
            return diag("protocol-violation", e.what(), RunOutcome::GateViolation);
        } catch (const BarrierViolation& e) {
            return diag("barrier-violation", e.what(), RunOutcome::GateViolation);
        } catch (const TimeoutError& e) {
            return diag("timeout", e.what(), RunOutcome::Failed);
        } catch (const DispatchFailure& e) {
            auto captured = e.captured_output();
            if (captured.size() > kMaxCapturedOutput) captured = captured.substr(captured.size() - kMaxCapturedOutput);
            return diag("crash", std::string(e.what()) + (captured.empty() ? "" : "\n" + captured), RunOutcome::Failed);
        } catch (const EnvironmentError& e) {
            return diag("environment", e.what(), RunOutcome::EnvironmentFailure);
        } catch (const IoError& e) {
            return diag("io", e.what(), RunOutcome::EnvironmentFailure);
        } catch (const ConfigError& e) {
            return diag("config", e.what(), RunOutcome::UsageError);
        } catch (const std::exception& e) {
            return diag("internal", e.what(), RunOutcome::Failed);
        }
    }

    // -----------------------------------------------------------------------
    // State

    std::optional<GateViolation> advance_to(WorkflowState target) {
        while (state_order(run.current, target) < 0) {
            auto out = advance(run, dir, clock());
            run = std::move(out.run);
            write_status();
            if (out.violation) {
                diagnostics.push_back({AgentRole::Leader, "gate-violation", out.violation->describe()});
                return out.violation;
            }
        }
        return std::nullopt;
    }

    // -----------------------------------------------------------------------
    // Leader setup

    std::optional<std::string> ask_leader(const std::string& kind, const std::string& question) {
        opts.channel->ask(AgentRole::Leader, question);
        auto a = opts.channel->await_answer();
        if (!a) pending = Pending{kind, std::nullopt, question};
        return a;
    }

    bool needs_validation() const {
        return opts.workflow.dispatches(AgentRole::Builder) || opts.workflow.dispatches(AgentRole::Tester);
    }

    // Returns false when the run has to wait for an answer.
    bool resolve_language(std::optional<std::string> answer) {
        if (!language) {
            auto detected = detect_language(opts.target_repo);
            if (detected.known() || !needs_validation()) {
                language = detected;
            } else {
                if (!answer)
                    answer = ask_leader("language", "No language marker found in " +
                                                        opts.target_repo.filename().string() +
                                                        ". Which profile applies (R, Python, TypeScript, Stata, "
                                                        "Go, Rust, C, C++), or 'none'?");
                if (!answer) return false;
                auto l = parse_language(text::trim(*answer));
                language = l ? profile_for(*l) : profile_for(Language::Unknown);
                answer.reset();
            }
        }
        if (!opts.validation_override.empty()) {
            validation = opts.validation_override;
        } else if (language->known() && needs_validation_override(*language) && needs_validation()) {
            if (validation.empty()) {
                if (!answer)
                    answer = ask_leader("validation", "Which command runs the unit tests for this " +
                                                          std::string(to_string(language->language)) +
                                                          " repository?");
                if (!answer) return false;
                validation = {std::string(text::trim(*answer))};
            }
        } else {
            validation = language->known() ? validation_commands(*language) : std::vector<std::string>{};
        }
        return true;
    }

    std::string render_request() const {
        std::ostringstream ss;
        ss << "# Request\n\nrequest id: " << opts.request_id << "\n\n## Directive\n\n" << opts.directive << "\n";
        return ss.str();
    }

    std::string render_impact() const {
        std::ostringstream ss;
        ss << "# Impact\n\nworkflow: " << opts.workflow.id << " " << opts.workflow.name << "\n";
        ss << "language: " << (language ? std::string(to_string(language->language)) : "n/a") << "\n";
        if (!validation.empty()) ss << "validation: " << text::join(validation, "; ") << "\n";
        ss << "\n## Stages\n\n";
        for (const auto& st : plan.stages) {
            std::vector<std::string> names;
            for (auto r : st.roles) names.push_back(role_name(r));
            ss << st.index + 1 << ". " << text::join(names, " | ") << "\n";
        }
        ss << "\n## Expected artifacts\n\n";
        for (auto k : expected_artifacts(opts.workflow)) ss << "- " << file_name(k) << "\n";
        return ss.str();
    }

    std::string render_credentials() {
        std::ostringstream ss;
        auto remote = opts.git->remote_url(opts.target_repo, "origin");
        ss << "# Credentials\n\nrepository: " << opts.target_repo.filename().string() << "\n";
        ss << "remote: " << (remote ? *remote : std::string("(none)")) << "\n";
        ss << "access: verified\n";
        return ss.str();
    }

    std::optional<RunReport> setup(std::optional<std::string> answer) {
        std::error_code ec;
        if (!fs::is_directory(opts.target_repo, ec))
            throw EnvironmentError("target repository " + opts.target_repo.string() + " not found");
        opts.workspace.ensure();
        dir.create();
        if (!opts.git->is_repository(opts.target_repo))
            throw EnvironmentError(opts.target_repo.string() + " is not a git checkout");
        if (!resolve_language(std::move(answer)))
            return finish(RunOutcome::AwaitingAnswer, "waiting for an answer: " + pending->question);
        pending.reset();

        write_file(opts.workspace.context_md(),
                   render_context(opts.target_repo, *opts.git, language ? *language : profile_for(Language::Unknown)));
        dir.write(ArtifactKind::Credentials, render_credentials());
        if (auto v = advance_to(WorkflowState::New)) return finish(RunOutcome::GateViolation, v->describe());
        dir.write(ArtifactKind::Request, render_request());
        dir.write(ArtifactKind::Impact, render_impact());
        if (auto v = advance_to(WorkflowState::Planned)) return finish(RunOutcome::GateViolation, v->describe());
        phase = "stages";
        stage = 0;
        persist();
        return std::nullopt;
    }

    // -----------------------------------------------------------------------
    // Dispatch

    Sandbox& ensure_sandbox(AgentRole r) {
        auto& slot = sandboxes[r];
        if (slot) return *slot;
        SandboxOptions o;
        o.root = opts.workspace.sandbox_dir(opts.request_id) / role_name(r);
        o.base_repo = opts.target_repo;
        o.request_id = opts.request_id;
        o.git = opts.git;
        o.journal = &journal;
        o.run_dir = dir;
        o.clock = &role_clock(r);
        o.materialize = std::vector<ArtifactKind>{};
        const auto m = AccessMatrix::canonical();
        slot = std::make_unique<Sandbox>(uses_worktree(r) ? create_sandbox(r, o, m) : create_view(r, o, m));
        return *slot;
    }

    WorkflowState dispatch_state(AgentRole r) const {
        if (r == AgentRole::Shipper) return WorkflowState::ReadyToShip;
        return plan.stage_of(r).entry;
    }

    Briefing make_briefing(AgentRole r, const Sandbox& box) {
        Briefing b;
        std::ostringstream d;
        d << "role: " << role_name(r) << "\nrequest: " << opts.request_id << "\nworkflow: " << opts.workflow.id
          << " " << opts.workflow.name << "\n\n"
          << opts.directive;
        b.directive = d.str();
        for (auto k : box.visible_artifacts()) b.granted_paths.emplace_back(file_name(k));
        if (box.worktree_path()) b.granted_paths.emplace_back("repo");
        if (language && language->known())
            b.language_notes = std::string(to_string(language->language)) + "; docs: " + language->doc_convention;
        if (r == AgentRole::Builder || r == AgentRole::Tester) b.validation_commands = validation;
        b.attempt = dispatches[r];
        auto it = context.find(r);
        if (it != context.end()) b.context = it->second;
        return b;
    }

    struct Prepared {
        AgentRole role{};
        AccessMatrix matrix;
        DispatchRequest req;
        std::shared_ptr<AgentBackend> backend;
        std::size_t audit_start = 0;
        std::exception_ptr setup_error;
    };

    using WaveResult = std::pair<AgentRole, std::variant<AgentOutcome, std::exception_ptr>>;

    std::vector<WaveResult> dispatch_wave(const std::vector<AgentRole>& wave,
                                          std::shared_ptr<AgentBackend> override_backend = nullptr) {
        std::vector<Prepared> prepared(wave.size());
        for (std::size_t i = 0; i < wave.size(); ++i) {
            auto r = wave[i];
            auto& p = prepared[i];
            p.role = r;
            try {
                auto& box = ensure_sandbox(r);
                p.matrix = AccessMatrix::canonical(dispatch_state(r));
                p.audit_start = box.audit().size();
                box.refresh(p.matrix, dir, role_clock(r));
                ++dispatches[r];
                dispatch_log.push_back(role_name(r) + "#" + std::to_string(dispatches[r]));
                p.backend = override_backend ? override_backend : opts.backends.backend_for(r, opts.workflow);
                p.req.role = r;
                p.req.sandbox = &box;
                p.req.briefing = make_briefing(r, box);
                p.req.deadline = opts.backends.deadline;
                p.req.workflow = opts.workflow;
                p.req.matrix = &p.matrix;
                p.req.clock = &role_clock(r);
                p.req.log_path = dir.logs_dir() / (role_name(r) + ".log");
            } catch (...) {
                p.setup_error = std::current_exception();
            }
        }

        std::vector<std::future<AgentOutcome>> futures(wave.size());
        for (std::size_t i = 0; i < wave.size(); ++i) {
            auto& p = prepared[i];
            if (p.setup_error) continue;
            futures[i] = std::async(std::launch::async, [&p] { return dispatch(p.req, *p.backend); });
        }

        std::vector<WaveResult> results;
        for (std::size_t i = 0; i < wave.size(); ++i) {
            auto& p = prepared[i];
            if (p.setup_error) {
                results.emplace_back(p.role, p.setup_error);
                continue;
            }
            try {
                results.emplace_back(p.role, futures[i].get());
            } catch (...) {
                results.emplace_back(p.role, std::current_exception());
            }
            auto entries = p.req.sandbox->audit().entries();
            std::vector<AccessEntry> slice(entries.begin() + static_cast<std::ptrdiff_t>(p.audit_start), entries.end());
            std::string body;
            for (const auto& e : slice) body += format_entry(e) + "\n";
            append_file(dir.access_log_dir() / (role_name(p.role) + ".log"), body);
            last_access[p.role] = std::move(slice);
        }
        write_merged_access_log();
        return results;
    }

    void write_merged_access_log() {
        std::string body;
        for (auto r : kAllRoles) {
            std::error_code ec;
            auto p = dir.access_log_dir() / (role_name(r) + ".log");
            if (fs::exists(p, ec)) body += read_file(p);
        }
        write_file(dir.root() / "access.log", body);
    }

    void publish(AgentRole r, const AgentOutcome& outcome) {
        const auto& root = sandboxes.at(r)->root();
        for (auto k : outcome.produced) {
            std::error_code ec;
            auto p = root / std::string(file_name(k));
            if (!fs::is_regular_file(p, ec) && k == ArtifactKind::Architecture) p = root / "ARCHITECTURE.md";
            dir.write(k, read_file(p));
        }
    }

    std::vector<AccessLog> access_logs() const {
        std::vector<AccessLog> logs;
        for (const auto& [r, entries] : last_access) logs.push_back({r, entries});
        return logs;
    }

    // -----------------------------------------------------------------------
    // Signals

    StepResult handle_signal(const Signal& s) {
        auto action = route_signal(s, plan, run, clock());
        write_status();
        signals.push_back({s.kind, s.raiser, std::string(to_string(action.kind)), action.reason});
        switch (action.kind) {
        case RouteKind::Escalate:
            return Halt{RunOutcome::Escalated, "escalated to the user: " + action.reason};
        case RouteKind::AskUser: {
            auto question = "[" + role_name(s.raiser) + "] " + std::string(text::trim(s.payload));
            opts.channel->ask(AgentRole::Leader, question);
            auto answer = opts.channel->await_answer();
            if (!answer) {
                pending = Pending{"role", s.raiser, question};
                return Halt{RunOutcome::AwaitingAnswer, "waiting for an answer: " + question};
            }
            context[s.raiser].push_back("Question: " + std::string(text::trim(s.payload)) + "\nAnswer: " + *answer);
            members.insert(s.raiser);
            return Done{};
        }
        case RouteKind::Redispatch:
            for (auto r : action.redispatch) {
                context[r].push_back("Validation failure reported by the tester:\n" + std::string(text::trim(s.payload)));
                members.insert(r);
            }
            blocked_target = action.redispatch.front();
            return Done{};
        case RouteKind::RerunFrom:
            context[action.redispatch.front()].push_back("Review routed back to you:\n" +
                                                         std::string(text::trim(s.payload)));
            return Rerun{*action.rerun_from};
        }
        return Done{};
    }

    std::variant<Done, Halt, Rerun, RunReport> run_stage(const PlannedStage& st) {
        if (members.empty()) members.insert(st.roles.begin(), st.roles.end());
        while (!members.empty()) {
            std::vector<AgentRole> wave;
            for (auto r : members) {
                bool waits = blocked_target && r == AgentRole::Tester && *blocked_target != AgentRole::Tester &&
                             members.count(*blocked_target);
                if (!waits) wave.push_back(r);
            }
            auto results = dispatch_wave(wave);
            for (auto& [role, res] : results)
                if (auto* e = std::get_if<std::exception_ptr>(&res)) return halt_for(role, *e);

            for (auto& [role, res] : results) {
                auto& outcome = std::get<AgentOutcome>(res);
                if (outcome.status == OutcomeStatus::Signaled) {
                    auto step = handle_signal(*outcome.signal);
                    if (auto* h = std::get_if<Halt>(&step)) return *h;
                    if (auto* rr = std::get_if<Rerun>(&step)) return *rr;
                    continue;
                }
                publish(role, outcome);
                members.erase(role);
                if (blocked_target == role) blocked_target.reset();
                if (role == AgentRole::Reviewer) {
                    auto body = dir.try_read(ArtifactKind::Review);
                    auto verdict = body ? try_parse_review_verdict(*body) : std::nullopt;
                    if (verdict && verdict->value == Verdict::Stop) {
                        Signal stop{SignalKind::Stop, AgentRole::Reviewer, *body};
                        if (!signal_owner_check(stop))
                            return Halt{RunOutcome::GateViolation, "review verdict STOP names no legal route"};
                        auto step = handle_signal(stop);
                        if (auto* h = std::get_if<Halt>(&step)) return *h;
                        if (auto* rr = std::get_if<Rerun>(&step)) return *rr;
                    }
                }
            }
            persist();
        }
        return Done{};
    }

    // Forced STOP after a failed mechanical review.
    StepResult after_review() {
        review = mechanical_review(dir, access_logs(), plan);
        if (review->passed()) return Done{};
        auto at = review->at_fault();
        auto target = at ? forced_stop_target(*at, opts.workflow) : std::nullopt;
        std::string detail;
        for (const auto& c : review->checks)
            if (c.status == CheckStatus::Fail) detail += "(" + std::to_string(c.number) + ") " + c.name + ": " + c.detail + "\n";
        if (!target) {
            signals.push_back({SignalKind::Stop, AgentRole::Reviewer, "escalate", "mechanical review failed"});
            return Halt{RunOutcome::Escalated, "mechanical review failed with no routing target:\n" + detail};
        }
        Signal stop{SignalKind::Stop, AgentRole::Reviewer,
                    "route: " + role_name(*target) + "\nmechanical review failed\n" + detail};
        return handle_signal(stop);
    }

    RunReport execute() {
        while (stage < plan.stages.size()) {
            const auto& st = plan.stages[stage];
            if (stage_has(st, AgentRole::Shipper)) break;
            if (auto v = advance_to(st.entry)) return finish(RunOutcome::GateViolation, v->describe());
            persist();
            auto res = run_stage(st);
            if (auto* rep = std::get_if<RunReport>(&res)) return *rep;
            if (auto* h = std::get_if<Halt>(&res)) return finish(h->outcome, h->message);
            if (auto* rr = std::get_if<Rerun>(&res)) {
                stage = rr->stage;
                members.clear();
                blocked_target.reset();
                persist();
                continue;
            }
            if (stage_has(st, AgentRole::Reviewer)) {
                auto step = after_review();
                if (auto* h = std::get_if<Halt>(&step)) return finish(h->outcome, h->message);
                if (auto* rr = std::get_if<Rerun>(&step)) {
                    stage = rr->stage;
                    members.clear();
                    blocked_target.reset();
                    persist();
                    continue;
                }
            }
            if (auto v = advance_to(st.exit)) return finish(RunOutcome::GateViolation, v->describe());
            ++stage;
            members.clear();
            blocked_target.reset();
            persist();
        }
        if (opts.workflow.ships) {
            if (auto v = advance_to(WorkflowState::ReadyToShip)) return finish(RunOutcome::GateViolation, v->describe());
            opts.channel->notify(AgentRole::Leader, "review passed; shipping awaits your authorization");
            return finish(RunOutcome::AwaitingAuthorization, "ready to ship; authorization required");
        }
        if (auto v = advance_to(opts.workflow.terminal_state()))
            return finish(RunOutcome::GateViolation, v->describe());
        return finish(RunOutcome::Completed, "");
    }

    // -----------------------------------------------------------------------
    // Entry points

    RunReport start() {
        if (wrapper()) return run_children();
        try {
            if (auto halted = setup(std::nullopt)) return *halted;
            return execute();
        } catch (...) {
            return halt_for(AgentRole::Leader, std::current_exception());
        }
    }

    RunReport resume(const std::string& answer) {
        if (!pending) return finish(RunOutcome::UsageError, "run has no pending question", false);
        try {
            auto p = *pending;
            opts.channel->supply(answer);
            opts.channel->ask(AgentRole::Leader, p.question);
            auto a = opts.channel->await_answer();
            pending.reset();
            if (p.kind != "role") {
                if (auto halted = setup(a)) return *halted;
                return execute();
            }
            context[*p.role].push_back("Question: " + p.question + "\nAnswer: " + *a);
            members.insert(*p.role);
            return execute();
        } catch (...) {
            return halt_for(AgentRole::Leader, std::current_exception());
        }
    }

    RunReport ship(bool authorized);
    RunReport run_children();
};

// ---------------------------------------------------------------------------
// Built-in shipper: git work and the workspace sync, inside the SHIPPER dispatch.

class Orchestrator::Impl::BuiltinShipper final : public AgentBackend {
public:
    explicit BuiltinShipper(Impl& impl) : impl_(impl) {}
    BackendKind kind() const noexcept override { return BackendKind::Builtin; }

    std::optional<SyncReport> sync;

    AgentOutcome run(const DispatchRequest& req) override {
        auto& im = impl_;
        auto& git = *im.opts.git;
        const auto& id = im.opts.request_id;
        GitParams p;
        p.actor = AgentRole::Shipper;
        p.run_dir = im.dir.root();

        std::vector<std::string> branches;
        for (auto r : {AgentRole::Builder, AgentRole::Tester, AgentRole::Scriber}) {
            if (!im.opts.workflow.dispatches(r)) continue;
            auto wt = im.opts.workspace.sandbox_dir(id) / role_name(r) / "repo";
            std::error_code ec;
            if (!fs::is_directory(wt, ec)) continue;
            p.worktree = wt;
            p.paths.clear();
            p.message = role_name(r) + ": " + id;
            auto staged = git_ops(git, wt, GitAction::Stage, p, &im.journal);
            if (!staged.ok()) throw DispatchFailure("staging " + role_name(r) + " changes failed: " + staged.message, "");
            auto committed = git_ops(git, wt, GitAction::Commit, p, &im.journal);
            if (!committed.ok())
                throw DispatchFailure("committing " + role_name(r) + " changes failed: " + committed.message, "");
            branches.push_back(agent_branch(r, id));
        }

        const auto integration = req.sandbox->root() / "repo";
        const auto branch = agent_branch(AgentRole::Shipper, id);
        std::error_code ec;
        if (!fs::exists(integration, ec)) {
            GitParams w = p;
            w.worktree = integration;
            w.branch = branch;
            auto added = git_ops(git, im.opts.target_repo, GitAction::WorktreeAdd, w, &im.journal);
            if (!added.ok()) throw EnvironmentError("integration worktree failed: " + added.message);
        }
        for (const auto& b : branches) {
            auto merged = git.merge(integration, b);
            im.journal.record({AgentRole::Shipper, GitAction::Commit, integration.string(), "merge " + b, merged.status});
            if (!merged.ok())
                throw DispatchFailure("merging " + b + " failed (" + std::string(to_string(merged.status)) +
                                          "): " + merged.message,
                                      "");
        }

        auto remote = git.remote_url(im.opts.target_repo, "origin");
        if (remote) {
            GitParams push = p;
            push.branch = branch;
            auto pushed = git_ops(git, integration, GitAction::Push, push, &im.journal);
            if (!pushed.ok())
                throw DispatchFailure("push of " + branch + " failed (" + std::string(to_string(pushed.status)) +
                                          "): " + pushed.message,
                                      "");
        }

        sync = sync_workspace(im.opts.workspace, im.dir, id,
                              {im.opts.workspace_git, &im.journal, AgentRole::Shipper, "origin"});

        std::ostringstream md;
        md << "# Shipper\n\nbranch: " << branch << "\nremote: " << (remote ? *remote : std::string("(none)")) << "\n";
        md << "\n## Git actions\n\n";
        for (const auto& e : im.journal.entries())
            if (e.actor == AgentRole::Shipper)
                md << "- " << to_string(e.action) << " " << e.detail << ": " << to_string(e.status) << "\n";
        md << "\n## Workspace sync\n\n" << to_string(sync->status);
        if (!sync->message.empty()) md << ": " << sync->message;
        md << "\n";
        write_file(req.sandbox->resolve("shipper.md"), md.str());
        return AgentOutcome::completed();
    }

private:
    Impl& impl_;
};

RunReport Orchestrator::Impl::ship(bool authorized) {
    if (wrapper())
        return finish(RunOutcome::UsageError, "authorize the per-issue or per-iteration runs individually", false);
    if (run.current == WorkflowState::Done) return finish(RunOutcome::Shipped, "already shipped", false);
    if (run.current != WorkflowState::ReadyToShip)
        return finish(RunOutcome::GateViolation,
                      "shipping requires READY_TO_SHIP; run is at " + std::string(to_string(run.current)), false);

    auto body = dir.try_read(ArtifactKind::Review);
    auto verdict = body ? try_parse_review_verdict(*body) : std::nullopt;
    auto gate = ship_gate(verdict, authorized);
    ShipReport sr;
    sr.reason = gate.reason;
    if (!gate.allowed) {
        ship_report = sr;
        bool only_auth = verdict && verdict->permits_shipping() && !authorized;
        if (only_auth) opts.channel->notify(AgentRole::Leader, gate.reason);
        return finish(only_auth ? RunOutcome::AwaitingAuthorization : RunOutcome::GateViolation, gate.reason, false);
    }

    std::shared_ptr<AgentBackend> backend;
    std::shared_ptr<BuiltinShipper> builtin;
    auto it = opts.backends.backends.find(AgentRole::Shipper);
    if (it != opts.backends.backends.end()) {
        backend = it->second;
    } else {
        builtin = std::make_shared<BuiltinShipper>(*this);
        backend = builtin;
    }

    auto results = dispatch_wave({AgentRole::Shipper}, backend);
    auto collect_actions = [&] {
        for (const auto& e : journal.entries())
            if (e.actor == AgentRole::Shipper)
                sr.git_actions.push_back(std::string(to_string(e.action)) + " " + e.detail + ": " +
                                         std::string(to_string(e.status)));
        if (builtin) sr.sync = builtin->sync;
    };
    auto& [role, res] = results.front();
    if (auto* e = std::get_if<std::exception_ptr>(&res)) {
        collect_actions();
        sr.partial = !sr.git_actions.empty();
        sr.reason = "shipper failed";
        ship_report = sr;
        RunReport r = halt_for(role, *e);
        return r;
    }
    publish(AgentRole::Shipper, std::get<AgentOutcome>(res));
    collect_actions();
    if (auto v = advance_to(WorkflowState::Done)) {
        ship_report = sr;
        return finish(RunOutcome::GateViolation, v->describe(), false);
    }
    sr.shipped = true;
    sr.partial = sr.sync && !sr.sync->ok();
    ship_report = sr;
    if (sr.partial)
        return finish(RunOutcome::PartiallyShipped, "code shipped; workspace sync " +
                                                        std::string(to_string(sr.sync->status)) + ": " + sr.sync->message,
                      false);
    return finish(RunOutcome::Shipped, "shipped", false);
}

RunReport Orchestrator::Impl::run_children() {
    try {
        opts.workspace.ensure();
        dir.create();
        dir.write(ArtifactKind::Request, render_request());
        language = profile_for(Language::Unknown);
        dir.write(ArtifactKind::Impact, render_impact());
        phase = "children";
        persist();

        struct Job {
            std::string id;
            std::string directive;
        };
        std::vector<Job> jobs;
        if (opts.workflow.id == 4) {
            auto issues = opts.issues;
            if (issues.empty()) issues.push_back({"1", opts.directive, ""});
            for (const auto& i : issues) {
                auto slug = text::slugify(i.id);
                jobs.push_back({opts.request_id + "-issue-" + (slug.empty() ? "x" : slug),
                                i.title + (i.body.empty() ? "" : "\n\n" + i.body)});
            }
        } else {
            for (int k = 1; k <= std::max(1, opts.iterations); ++k)
                jobs.push_back({opts.request_id + "-iter-" + std::to_string(k), opts.directive});
        }

        for (std::size_t i = 0; i < jobs.size(); ++i) {
            if (i > 0 && opts.interval.count() > 0) std::this_thread::sleep_for(opts.interval);
            EngineOptions child = opts;
            child.workflow = workflow_by_id(opts.workflow.inner);
            child.request_id = jobs[i].id;
            child.directive = jobs[i].directive;
            child.issues.clear();
            Orchestrator o(std::move(child));
            children.push_back(o.run());
            child_ids.push_back(jobs[i].id);
            persist();
        }
    } catch (...) {
        return halt_for(AgentRole::Leader, std::current_exception());
    }

    // Worst child decides; DONE-less children report their own terminal state.
    RunOutcome worst = RunOutcome::Completed;
    WorkflowState lowest = WorkflowState::Done;
    for (const auto& c : children) {
        if (exit_code_for(c.outcome) > exit_code_for(worst) ||
            (exit_code_for(c.outcome) == exit_code_for(worst) && c.outcome == RunOutcome::AwaitingAuthorization))
            worst = c.outcome;
        if (state_order(c.final_state, lowest) < 0) lowest = c.final_state;
        for (const auto& [r, n] : c.dispatches) dispatches[r] += n;
        for (const auto& d : c.dispatch_log) dispatch_log.push_back(c.request_id + ":" + d);
    }
    run.current = children.empty() ? WorkflowState::CredentialsVerified : lowest;
    auto rep = finish(worst, std::to_string(children.size()) + " inner run(s) of workflow " +
                                 std::to_string(opts.workflow.inner));
    return rep;
}

// ---------------------------------------------------------------------------

Orchestrator::Orchestrator(EngineOptions opts) : impl_(std::make_unique<Impl>(std::move(opts))) {}
Orchestrator::Orchestrator(std::unique_ptr<Impl> impl) : impl_(std::move(impl)) {}
Orchestrator::~Orchestrator() = default;

std::unique_ptr<Orchestrator> Orchestrator::reopen(EngineOptions base, const std::string& request_id) {
    auto path = run_journal_path(base.workspace, request_id);
    std::error_code ec;
    if (!fs::is_regular_file(path, ec)) throw IoError("no run '" + request_id + "' in " + base.workspace.dir().string());
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw IoError("run journal " + path.string() + ": " + e.what());
    }
    base.request_id = request_id;
    base.directive = j.value("directive", std::string{});
    int inner = j.value("inner", 0);
    base.workflow = workflow_by_id(j.value("workflow", 0), inner > 0 && j.value("workflow", 0) == 8 ? inner : kDefaultScheduledInner);
    base.target_repo = j.value("target_repo", std::string{});
    base.logical_clock = j.value("logical_clock", false);
    base.validation_override = j.value("validation_override", std::vector<std::string>{});
    if (j.contains("backend_config") && !j["backend_config"].is_null()) {
        auto deadline = base.backends.deadline;
        base.backends = load_backend_config(j["backend_config"].get<std::string>());
        (void)deadline;
    } else {
        base.backends.conforming_default = j.value("conforming_default", true);
    }

    auto impl = std::make_unique<Impl>(std::move(base));
    impl->from_journal(j);
    if (auto status = impl->dir.try_read(ArtifactKind::Status)) impl->run = parse_status(*status, impl->opts.workflow);
    if (impl->opts.logical_clock) {
        auto start = LogicalClock::default_epoch();
        if (!impl->run.history.empty()) start = impl->run.history.back().at + std::chrono::seconds(1);
        impl->engine_clock = std::make_unique<LogicalClock>(start);
    }
    return std::unique_ptr<Orchestrator>(new Orchestrator(std::move(impl)));
}

RunReport Orchestrator::run() { return impl_->start(); }
RunReport Orchestrator::resume(const std::string& answer) { return impl_->resume(answer); }
RunReport Orchestrator::ship(bool authorized) {
    try {
        return impl_->ship(authorized);
    } catch (...) {
        return impl_->halt_for(AgentRole::Leader, std::current_exception());
    }
}

const RunState& Orchestrator::state() const noexcept { return impl_->run; }
const DispatchPlan& Orchestrator::plan() const noexcept { return impl_->plan; }
RunDirectory Orchestrator::run_dir() const { return impl_->dir; }
GitJournal& Orchestrator::journal() noexcept { return impl_->journal; }
const RunReport& Orchestrator::report() const noexcept { return impl_->report; }

} // namespace gatehouse
