#include "gatehouse/cli.hpp"

#include <cstdlib>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "gatehouse/errors.hpp"
#include "json.hpp"
#include "text.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace gatehouse {

namespace {

/// Everything printed goes to the terminal and into the run's cli.log.
class Console {
public:
    Console(std::ostream& out, std::ostream& err) : out_(out), err_(err) {}

    void print(const std::string& s) {
        out_ << s;
        buf_ << s;
    }
    void error(const std::string& s) {
        err_ << s;
        buf_ << s;
    }
    void mirror_to(const fs::path& run_dir) {
        std::error_code ec;
        if (!fs::is_directory(run_dir, ec)) return;
        append_file(run_dir / "logs" / "cli.log", buf_.str());
    }

private:
    std::ostream& out_;
    std::ostream& err_;
    std::ostringstream buf_;
};

std::vector<std::string> read_answers(const fs::path& p) {
    std::vector<std::string> out;
    for (auto line : text::split_lines(read_file(p))) {
        auto t = text::trim(line);
        if (!t.empty() && t.front() != '#') out.emplace_back(t);
    }
    return out;
}

std::string unique_request_id(const WorkspaceLayout& ws, std::string id) {
    std::error_code ec;
    if (!fs::exists(ws.run_dir(id), ec)) return id;
    for (int k = 2;; ++k) {
        auto candidate = id + "-" + std::to_string(k);
        if (!fs::exists(ws.run_dir(candidate), ec)) return candidate;
    }
}

// History lines without their timestamps when the clock was not logical.
std::vector<std::string> comparable_history(const json& history, bool logical) {
    std::vector<std::string> out;
    for (const auto& h : history) {
        auto line = h.get<std::string>();
        if (!logical) {
            auto tab = line.find('\t');
            if (tab != std::string::npos) line = line.substr(tab + 1);
        }
        out.push_back(line);
    }
    return out;
}

json diagnostic_kinds(const json& diags) {
    json out = json::array();
    for (const auto& d : diags) out.push_back(d.value("role", std::string{}) + ":" + d.value("kind", std::string{}));
    return out;
}

struct Common {
    std::string workspace;
};

int report_exit(Console& con, const RunReport& r, const fs::path& run_dir) {
    con.print(r.to_text());
    con.mirror_to(run_dir);
    return r.exit_code();
}

std::unique_ptr<Orchestrator> reopen_run(const fs::path& root, const std::string& id, SystemGit& git,
                                         SystemGit& ws_git, UserChannel& channel, WorkspaceLayout& layout) {
    auto found = find_run(root, id);
    if (!found) throw ConfigError("no run '" + id + "' under " + root.string());
    layout = *found;
    EngineOptions base;
    base.workspace = layout;
    base.git = &git;
    base.workspace_git = git.is_repository(layout.root) ? &ws_git : nullptr;
    base.channel = &channel;
    return Orchestrator::reopen(base, id);
}

} // namespace

fs::path default_workspace_root() {
    if (const char* env = std::getenv("GATEHOUSE_WORKSPACE"); env && *env) return env;
    return fs::current_path() / "workspace";
}

std::optional<WorkspaceLayout> find_run(const fs::path& root, const std::string& request_id) {
    std::error_code ec;
    if (!fs::is_directory(root, ec)) return std::nullopt;
    for (const auto& e : fs::directory_iterator(root, ec)) {
        if (!e.is_directory()) continue;
        WorkspaceLayout layout{root, e.path().filename().string()};
        if (fs::is_regular_file(run_journal_path(layout, request_id), ec)) return layout;
    }
    return std::nullopt;
}

ReplayResult replay_run(const WorkspaceLayout& layout, const std::string& request_id) {
    auto j = json::parse(read_file(run_journal_path(layout, request_id)));
    if (!j.contains("run_report")) throw ConfigError("run '" + request_id + "' has no recorded report");
    const auto& recorded = j["run_report"];

    std::vector<std::string> answers;
    for (const auto& line : j.value("channel", std::vector<std::string>{}))
        if (text::starts_with(line, "user: ")) answers.push_back(line.substr(6));
    auto channel = UserChannel::scripted(answers);

    fs::path target = j.value("target_repo", std::string{});
    FakeGit git;
    SystemGit probe;
    git.init(target, probe.remote_url(target, "origin"));

    WorkspaceLayout scratch{layout.tmp_dir() / "replay" / request_id, layout.repo_name};
    std::error_code ec;
    fs::remove_all(scratch.root, ec);

    EngineOptions o;
    o.target_repo = target;
    o.workspace = scratch;
    o.request_id = request_id;
    o.directive = j.value("directive", std::string{});
    int wf = j.value("workflow", 0);
    o.workflow = workflow_by_id(wf, wf == 8 ? j.value("inner", kDefaultScheduledInner) : kDefaultScheduledInner);
    if (j.contains("backend_config") && !j["backend_config"].is_null())
        o.backends = load_backend_config(j["backend_config"].get<std::string>());
    else
        o.backends.conforming_default = j.value("conforming_default", true);
    o.git = &git;
    o.channel = &channel;
    o.logical_clock = j.value("logical_clock", false);
    if (j.contains("language") && !j["language"].is_null())
        if (auto l = parse_language(j["language"].get<std::string>())) o.language = profile_for(*l);
    o.validation_override = j.value("validation", std::vector<std::string>{});

    ReplayResult result;
    Orchestrator engine(std::move(o));
    result.replayed = engine.run();
    auto replayed = json::parse(result.replayed.to_json());

    const bool logical = j.value("logical_clock", false);
    auto compare = [&](const std::string& field, const json& a, const json& b) {
        if (a != b) result.differences.push_back(field + ": " + a.dump() + " != " + b.dump());
    };
    for (const char* f : {"final_state", "outcome", "retries", "dispatches", "dispatch_log", "signals", "artifacts"})
        compare(f, recorded.value(f, json()), replayed.value(f, json()));
    compare("history", comparable_history(recorded.value("history", json::array()), logical),
            comparable_history(replayed.value("history", json::array()), logical));
    compare("diagnostics", diagnostic_kinds(recorded.value("diagnostics", json::array())),
            diagnostic_kinds(replayed.value("diagnostics", json::array())));
    compare("mechanical_review", recorded.value("mechanical_review", json()), replayed.value("mechanical_review", json()));
    result.matched = result.differences.empty();
    return result;
}

int run_cli(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err) {
    Console con(out, err);
    CLI::App app{"gatehouse: gated multi-agent workflow runner"};
    app.require_subcommand(1);
    std::string workspace = default_workspace_root().string();
    app.add_option("--workspace", workspace, "Workspace root (default $GATEHOUSE_WORKSPACE or ./workspace)");

    // run
    auto* run_cmd = app.add_subcommand("run", "Start a run against a target repository");
    std::string repo, directive, backends_path, answers_path, issues_path, language_name, request_id;
    std::optional<int> workflow_id;
    int inner = kDefaultScheduledInner, iterations = 1, interval_ms = 0;
    bool logical = false, interactive = false;
    std::vector<std::string> validation;
    run_cmd->add_option("--repo", repo, "Target git repository")->required();
    run_cmd->add_option("--workflow", workflow_id, "Workflow id 1-10")->check(CLI::Range(1, kWorkflowCount));
    run_cmd->add_option("--directive", directive, "What to do");
    run_cmd->add_option("--backends", backends_path, "Backend config (JSON)");
    run_cmd->add_option("--answers", answers_path, "Scripted answers, one per line");
    run_cmd->add_flag("--interactive", interactive, "Ask questions on the terminal");
    run_cmd->add_flag("--logical-clock", logical, "Deterministic timestamps");
    run_cmd->add_option("--inner", inner, "Inner workflow for workflow 8")->check(CLI::Range(1, kWorkflowCount));
    run_cmd->add_option("--iterations", iterations, "Workflow 8 iterations")->check(CLI::PositiveNumber);
    run_cmd->add_option("--interval-ms", interval_ms, "Workflow 8 pause between iterations");
    run_cmd->add_option("--issues", issues_path, "Workflow 4 issue list (JSON)");
    run_cmd->add_option("--language", language_name, "Skip language detection");
    run_cmd->add_option("--validation", validation, "Validation command override (repeatable)");
    run_cmd->add_option("--request-id", request_id, "Explicit <date>-<slug> id");

    // answer
    auto* answer_cmd = app.add_subcommand("answer", "Answer a pending question and continue");
    std::string id, answer_text;
    answer_cmd->add_option("id", id)->required();
    answer_cmd->add_option("text", answer_text)->required();

    // authorize
    auto* auth_cmd = app.add_subcommand("authorize", "Authorize shipping a run at READY_TO_SHIP");
    bool yes = false;
    auth_cmd->add_option("id", id)->required();
    auth_cmd->add_flag("--yes,-y", yes, "Do not prompt");

    // status
    auto* status_cmd = app.add_subcommand("status", "Show a run's state");
    status_cmd->add_option("id", id)->required();

    // validate
    auto* validate_cmd = app.add_subcommand("validate", "Lint a workspace repository");
    std::string validate_path;
    validate_cmd->add_option("path", validate_path, "Workspace root (default: --workspace)");

    // replay
    auto* replay_cmd = app.add_subcommand("replay", "Re-run a recorded run and compare");
    replay_cmd->add_option("id", id)->required();

    std::vector<std::string> argv_store{"gatehouse"};
    argv_store.insert(argv_store.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& s : argv_store) argv.push_back(s.data());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e, out, err);
        return code == 0 ? 0 : 1;
    }

    const fs::path root = fs::absolute(workspace).lexically_normal();
    SystemGit git;
    SystemGit ws_git;

    try {
        if (run_cmd->parsed()) {
            if (directive.empty() && !workflow_id) {
                con.error("error: run needs --directive or --workflow\n");
                return 1;
            }
            auto channel = interactive ? UserChannel::interactive(in, out)
                                       : UserChannel::scripted(answers_path.empty() ? std::vector<std::string>{}
                                                                                    : read_answers(answers_path));
            auto selection = select_workflow(directive, workflow_id, inner);
            WorkflowType wf;
            if (selection.held()) {
                channel.ask(AgentRole::Leader, *selection.question);
                auto a = channel.await_answer();
                if (!a) {
                    con.print("HOLD: " + *selection.question + "\nRe-run with --workflow <id>.\n");
                    return exit_code_for(RunOutcome::AwaitingAnswer);
                }
                wf = resolve_selection(selection, *a, inner);
            } else {
                wf = *selection.workflow;
            }

            fs::path target = fs::absolute(repo).lexically_normal();
            if (target.filename().empty()) target = target.parent_path();
            WorkspaceLayout layout{root, target.filename().string()};

            EngineOptions o;
            o.target_repo = target;
            o.workspace = layout;
            o.directive = directive.empty() ? std::string(wf.name) : directive;
            o.workflow = wf;
            if (!backends_path.empty()) {
                o.backends = load_backend_config(backends_path);
            } else {
                o.backends.conforming_default = true;
                con.print("note: no --backends given; every role uses the conforming scripted agent\n");
            }
            if (!issues_path.empty()) o.issues = load_issues(issues_path);
            else if (o.backends.issues) o.issues = load_issues(*o.backends.issues);
            o.git = &git;
            o.workspace_git = git.is_repository(root) ? &ws_git : nullptr;
            o.channel = &channel;
            o.logical_clock = logical;
            if (!language_name.empty()) {
                auto l = parse_language(language_name);
                if (!l) {
                    con.error("error: unknown language '" + language_name + "'\n");
                    return 1;
                }
                o.language = profile_for(*l);
            }
            o.validation_override = validation;
            o.iterations = iterations;
            o.interval = std::chrono::milliseconds(interval_ms);
            if (request_id.empty()) {
                SystemClock sys;
                LogicalClock lc;
                auto date = format_date(logical ? lc.now() : sys.now());
                request_id = unique_request_id(layout, make_request_id(date, o.directive));
            }
            o.request_id = request_id;

            Orchestrator engine(std::move(o));
            auto report = engine.run();
            return report_exit(con, report, layout.run_dir(request_id));
        }

        if (answer_cmd->parsed()) {
            auto channel = UserChannel::scripted();
            WorkspaceLayout layout;
            auto engine = reopen_run(root, id, git, ws_git, channel, layout);
            auto report = engine->resume(answer_text);
            return report_exit(con, report, layout.run_dir(id));
        }

        if (auth_cmd->parsed()) {
            auto channel = yes ? UserChannel::scripted({"y"}) : UserChannel::interactive(in, out);
            WorkspaceLayout layout;
            auto engine = reopen_run(root, id, git, ws_git, channel, layout);
            bool ok = channel.confirm(AgentRole::Leader, "Ship " + id + "?");
            auto report = engine->ship(ok);
            return report_exit(con, report, layout.run_dir(id));
        }

        if (status_cmd->parsed()) {
            auto layout = find_run(root, id);
            if (!layout) {
                con.error("error: no run '" + id + "' under " + root.string() + "\n");
                return 1;
            }
            RunDirectory dir(layout->run_dir(id));
            auto j = json::parse(read_file(run_journal_path(*layout, id)));
            int wfid = j.value("workflow", 0);
            auto wf = workflow_by_id(wfid, wfid == 8 ? j.value("inner", kDefaultScheduledInner) : kDefaultScheduledInner);
            RunState run(wf);
            if (auto s = dir.try_read(ArtifactKind::Status)) run = parse_status(*s, wf);
            std::ostringstream ss;
            ss << "run " << id << "\nworkflow: " << wf.id << " " << wf.name << "\n";
            ss << "state: " << to_string(run.current) << "\n";
            ss << "outcome: " << j.value("outcome", std::string("?")) << "\n";
            ss << "retries:";
            for (auto k : kAllSignalKinds) {
                auto it = run.retries.find(k);
                ss << " " << to_string(k) << "=" << (it == run.retries.end() ? 0 : it->second);
            }
            ss << "\n";
            if (j.contains("pending") && !j["pending"].is_null())
                ss << "pending question: " << j["pending"].value("question", std::string{}) << "\n";
            if (j.value("outcome", std::string{}) == std::string(to_string(RunOutcome::Escalated)))
                ss << "escalated: " << j.value("message", std::string{}) << "\n";
            ss << "artifacts:\n";
            for (auto k : kAllArtifacts)
                ss << "  [" << (dir.exists(k) ? 'x' : ' ') << "] " << file_name(k) << "\n";
            for (const auto& c : j.value("children", std::vector<std::string>{})) ss << "child run: " << c << "\n";
            con.print(ss.str());
            return 0;
        }

        if (validate_cmd->parsed()) {
            fs::path p = validate_path.empty() ? root : fs::path(validate_path);
            auto lint = validate_workspace(p, git.is_repository(p) ? &git : nullptr);
            for (const auto& v : lint.violations) con.print(v.kind + "\t" + v.path + "\t" + v.message + "\n");
            con.print(lint.clean() ? "workspace is clean\n"
                                   : std::to_string(lint.violations.size()) + " violation(s)\n");
            return lint.clean() ? 0 : 2;
        }

        if (replay_cmd->parsed()) {
            auto layout = find_run(root, id);
            if (!layout) {
                con.error("error: no run '" + id + "' under " + root.string() + "\n");
                return 1;
            }
            auto result = replay_run(*layout, id);
            for (const auto& d : result.differences) con.print("mismatch " + d + "\n");
            con.print(result.matched ? "replay matches the recorded run\n" : "replay differs from the recorded run\n");
            con.mirror_to(layout->run_dir(id));
            return result.matched ? 0 : 1;
        }
    } catch (const ConfigError& e) {
        con.error(std::string("error: ") + e.what() + "\n");
        return 1;
    } catch (const EnvironmentError& e) {
        con.error(std::string("environment error: ") + e.what() + "\n");
        return 4;
    } catch (const IoError& e) {
        con.error(std::string("io error: ") + e.what() + "\n");
        return 4;
    } catch (const json::exception& e) {
        con.error(std::string("error: malformed run journal: ") + e.what() + "\n");
        return 4;
    } catch (const Error& e) {
        con.error(std::string("error: ") + e.what() + "\n");
        return 2;
    }
    return 1;
}

} // namespace gatehouse
