#pragma once

#include <stdexcept>
#include <string>

namespace gatehouse {

/// Base of every error the engine throws. Gate failures are *not* errors;
/// they come back as values (see GateResult).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Run directory, workspace or repository could not be read or written.
class IoError : public Error {
public:
    using Error::Error;
};

/// A signal was raised by a role that does not own it, or an agent broke the
/// dispatch protocol in some other way.
class ProtocolViolation : public Error {
public:
    using Error::Error;
};

/// An artifact or path crossed an information barrier.
class BarrierViolation : public Error {
public:
    using Error::Error;
};

/// A backend reported COMPLETED without delivering everything it owes.
class ContractViolation : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class TimeoutError : public Error {
public:
    using Error::Error;
};

/// Backend crashed or produced no recognizable outcome.
class DispatchFailure : public Error {
public:
    DispatchFailure(const std::string& what, std::string captured)
        : Error(what), captured_(std::move(captured)) {}

    const std::string& captured_output() const noexcept { return captured_; }

private:
    std::string captured_;
};

class TerminalStateError : public Error {
public:
    using Error::Error;
};

/// Worktree creation, git binary or credential problems.
class EnvironmentError : public Error {
public:
    using Error::Error;
};

/// review.md has no parseable verdict header.
class VerdictParseError : public Error {
public:
    using Error::Error;
};

/// An isolation audit could not be completed because a dispatched role left no log.
class IncompleteAuditError : public Error {
public:
    using Error::Error;
};

} // namespace gatehouse
