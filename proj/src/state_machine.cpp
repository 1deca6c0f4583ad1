#include "gatehouse/state_machine.hpp"

#include <sstream>

#include "gatehouse/errors.hpp"
#include "text.hpp"

namespace gatehouse {

std::string describe(const Requirement& r) {
    std::string out(file_name(r.artifact));
    out += r.predicate == Predicate::Exists ? " EXISTS" : " HAS_VERDICT";
    return out;
}

PreconditionSet preconditions(WorkflowState state, const WorkflowType& wf) {
    PreconditionSet set{state, {}};
    auto need = [&](ArtifactKind k, Predicate p = Predicate::Exists) {
        auto owner = producer(k);
        if (owner == AgentRole::Leader || wf.dispatches(owner)) set.required.push_back({k, p});
    };
    auto owed_by_planner = [&](ArtifactKind k) {
        auto owed = contracted_artifacts(AgentRole::Planner, wf);
        if (owed.count(k)) set.required.push_back({k, Predicate::Exists});
    };

    switch (state) {
    case WorkflowState::CredentialsVerified: break;
    case WorkflowState::New: need(ArtifactKind::Credentials); break;
    case WorkflowState::Planned:
        need(ArtifactKind::Request);
        need(ArtifactKind::Impact);
        break;
    case WorkflowState::SpecReady:
        owed_by_planner(ArtifactKind::Comprehension);
        owed_by_planner(ArtifactKind::Spec);
        owed_by_planner(ArtifactKind::TestSpec);
        owed_by_planner(ArtifactKind::SimSpec);
        break;
    case WorkflowState::PipelinesComplete:
        need(ArtifactKind::Implementation);
        need(ArtifactKind::Audit);
        need(ArtifactKind::Simulation);
        break;
    case WorkflowState::Documented:
        need(ArtifactKind::Architecture);
        need(ArtifactKind::LogEntry);
        break;
    case WorkflowState::ReviewPassed:
    case WorkflowState::ReadyToShip:
        need(ArtifactKind::Review, Predicate::HasVerdict);
        break;
    case WorkflowState::Done: need(ArtifactKind::Shipper); break;
    }
    return set;
}

GateResult check_preconditions(WorkflowState state, const WorkflowType& wf,
                               const RunDirectory& run_dir) {
    run_dir.ensure_readable();
    GateResult result;
    for (const auto& req : preconditions(state, wf).required) {
        bool ok = false;
        if (req.predicate == Predicate::Exists) {
            ok = run_dir.exists(req.artifact);
        } else if (auto body = run_dir.try_read(req.artifact)) {
            auto v = try_parse_review_verdict(*body);
            ok = v && v->permits_shipping();
        }
        if (!ok) result.missing.push_back(req);
    }
    return result;
}

std::string GateViolation::describe() const {
    std::ostringstream ss;
    if (reason == Reason::NotSuccessor) {
        ss << "cannot enter " << to_string(attempted) << ": not the immediate successor";
        return ss.str();
    }
    ss << "gate " << to_string(attempted) << " blocked; missing:";
    for (const auto& m : missing) ss << ' ' << gatehouse::describe(m);
    return ss.str();
}

AdvanceOutcome advance(RunState run, const RunDirectory& run_dir, Clock& clock) {
    auto next = successor(run.current);
    if (!next) throw TerminalStateError("run is in DONE; no transition leaves it");
    auto gate = check_preconditions(*next, run.workflow, run_dir);
    if (!gate.satisfied()) {
        GateViolation v{GateViolation::Reason::MissingArtifacts, *next, std::move(gate.missing)};
        return {std::move(run), std::move(v)};
    }
    run.history.push_back({clock.now(), run.current, *next, std::nullopt, std::nullopt, "gate satisfied"});
    run.current = *next;
    return {std::move(run), std::nullopt};
}

AdvanceOutcome transition_to(RunState run, WorkflowState target, const RunDirectory& run_dir,
                             Clock& clock) {
    auto next = successor(run.current);
    if (!next) throw TerminalStateError("run is in DONE; no transition leaves it");
    if (*next != target) {
        GateViolation v{GateViolation::Reason::NotSuccessor, target, {}};
        return {std::move(run), std::move(v)};
    }
    return advance(std::move(run), run_dir, clock);
}

RetryDecision record_signal(RunState& run, const Signal& s, Clock& clock) {
    if (!signal_owner_check(s)) {
        throw ProtocolViolation(std::string(to_string(s.kind)) + " raised by " +
                                std::string(to_string(s.raiser)) + " is not permitted");
    }
    int& count = run.retries[s.kind];
    RetryDecision decision;
    std::string cause;
    if (count < kMaxRetries) {
        ++count;
        decision = RetryDecision::Retry;
        cause = "retry " + std::to_string(count);
    } else {
        decision = RetryDecision::EscalateToUser;
        cause = "escalate";
    }
    run.history.push_back({clock.now(), run.current, std::nullopt, s.kind, s.raiser, cause});
    return decision;
}

bool history_is_contiguous(const RunState& run) {
    auto at = WorkflowState::CredentialsVerified;
    for (const auto& h : run.history) {
        if (h.from != at) return false;
        if (!h.is_transition()) continue;
        auto next = successor(at);
        if (!next || *h.to != *next) return false;
        at = *h.to;
    }
    return at == run.current;
}

namespace {

std::string sanitize(std::string_view s) {
    std::string out(s);
    for (auto& c : out)
        if (c == '\t' || c == '\n' || c == '\r') c = ' ';
    return out;
}

} // namespace

std::string render_status(const RunState& run) {
    std::ostringstream ss;
    for (const auto& h : run.history) {
        ss << format_iso8601(h.at) << '\t';
        if (h.is_transition()) {
            ss << "transition\t" << to_string(h.from) << '\t' << to_string(*h.to);
        } else {
            ss << "signal\t" << to_string(*h.signal) << '\t' << to_string(*h.raiser) << '\t'
               << to_string(h.from);
        }
        ss << '\t' << sanitize(h.cause) << '\n';
    }
    return ss.str();
}

RunState parse_status(const std::string& status_md, WorkflowType workflow) {
    RunState run(std::move(workflow));
    int line_no = 0;
    for (auto line : text::split_lines(status_md)) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        auto f = text::split(line, '\t');
        auto bad = [&] {
            return IoError("status.md line " + std::to_string(line_no) + " is malformed");
        };
        if (f.size() < 2) throw bad();
        auto ts = parse_iso8601(f[0]);
        if (!ts) throw bad();
        HistoryEntry h;
        h.at = *ts;
        if (f[1] == "transition" && f.size() >= 5) {
            auto from = parse_state(f[2]);
            auto to = parse_state(f[3]);
            if (!from || !to) throw bad();
            h.from = *from;
            h.to = *to;
            h.cause = f[4];
            run.current = *to;
        } else if (f[1] == "signal" && f.size() >= 6) {
            auto kind = parse_signal_kind(f[2]);
            auto role = parse_role(f[3]);
            auto from = parse_state(f[4]);
            if (!kind || !role || !from) throw bad();
            h.from = *from;
            h.signal = *kind;
            h.raiser = *role;
            h.cause = f[5];
            if (text::starts_with(h.cause, "retry")) {
                auto& c = run.retries[*kind];
                c = std::min(c + 1, kMaxRetries);
            }
        } else {
            throw bad();
        }
        run.history.push_back(std::move(h));
    }
    return run;
}

} // namespace gatehouse
