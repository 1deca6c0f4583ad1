#include "gatehouse/process.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <cerrno>
#include <cstring>

#include "gatehouse/errors.hpp"

extern char** environ;

namespace gatehouse {

namespace {

struct Pipe {
    int fd[2] = {-1, -1};

    Pipe() {
        if (::pipe2(fd, O_CLOEXEC) != 0)
            throw EnvironmentError(std::string("pipe: ") + std::strerror(errno));
    }
    ~Pipe() {
        close_read();
        close_write();
    }
    Pipe(const Pipe&) = delete;
    Pipe& operator=(const Pipe&) = delete;

    void close_read() {
        if (fd[0] >= 0) ::close(fd[0]);
        fd[0] = -1;
    }
    void close_write() {
        if (fd[1] >= 0) ::close(fd[1]);
        fd[1] = -1;
    }
};

} // namespace

ProcessResult run_process(const std::vector<std::string>& argv, const ProcessOptions& opts) {
    if (argv.empty()) throw EnvironmentError("run_process: empty argv");

    std::vector<std::string> env_store;
    for (char** e = environ; e && *e; ++e) env_store.emplace_back(*e);
    env_store.insert(env_store.end(), opts.env.begin(), opts.env.end());
    std::vector<char*> envp;
    for (auto& e : env_store) envp.push_back(e.data());
    envp.push_back(nullptr);

    std::vector<std::string> args_store(argv);
    std::vector<char*> args;
    for (auto& a : args_store) args.push_back(a.data());
    args.push_back(nullptr);

    Pipe in, out, err, exec_err;
    pid_t pid = ::fork();
    if (pid < 0) throw EnvironmentError(std::string("fork: ") + std::strerror(errno));
    if (pid == 0) {
        ::dup2(in.fd[0], STDIN_FILENO);
        ::dup2(out.fd[1], STDOUT_FILENO);
        ::dup2(err.fd[1], STDERR_FILENO);
        if (opts.cwd && ::chdir(opts.cwd->c_str()) != 0) {
            int e = errno;
            [[maybe_unused]] auto n = ::write(exec_err.fd[1], &e, sizeof e);
            ::_exit(127);
        }
        ::environ = envp.data();
        ::execvp(args[0], args.data());
        int e = errno;
        [[maybe_unused]] auto n = ::write(exec_err.fd[1], &e, sizeof e);
        ::_exit(127);
    }

    in.close_read();
    out.close_write();
    err.close_write();
    exec_err.close_write();

    int child_errno = 0;
    if (::read(exec_err.fd[0], &child_errno, sizeof child_errno) == sizeof child_errno) {
        ::waitpid(pid, nullptr, 0);
        throw EnvironmentError("cannot start '" + argv[0] + "': " + std::strerror(child_errno));
    }

    ::signal(SIGPIPE, SIG_IGN);
    ProcessResult result;
    std::size_t written = 0;
    if (opts.input.empty()) in.close_write();
    const auto start = std::chrono::steady_clock::now();

    std::array<char, 4096> buf{};
    while (out.fd[0] >= 0 || err.fd[0] >= 0) {
        std::array<pollfd, 3> fds{};
        nfds_t n = 0;
        if (out.fd[0] >= 0) fds[n++] = {out.fd[0], POLLIN, 0};
        if (err.fd[0] >= 0) fds[n++] = {err.fd[0], POLLIN, 0};
        if (in.fd[1] >= 0) fds[n++] = {in.fd[1], POLLOUT, 0};

        int wait_ms = -1;
        if (opts.timeout) {
            auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
                std::chrono::steady_clock::now() - start);
            auto left = *opts.timeout - elapsed;
            if (left.count() <= 0) {
                result.timed_out = true;
                break;
            }
            wait_ms = static_cast<int>(left.count());
        }
        int rc = ::poll(fds.data(), n, wait_ms);
        if (rc < 0 && errno == EINTR) continue;
        if (rc < 0) break;
        if (rc == 0) continue;

        for (nfds_t i = 0; i < n; ++i) {
            if (fds[i].revents == 0) continue;
            if (fds[i].fd == in.fd[1]) {
                auto w = ::write(in.fd[1], opts.input.data() + written, opts.input.size() - written);
                if (w > 0) written += static_cast<std::size_t>(w);
                if (w < 0 || written >= opts.input.size()) in.close_write();
                continue;
            }
            auto r = ::read(fds[i].fd, buf.data(), buf.size());
            auto& sink = fds[i].fd == out.fd[0] ? result.out : result.err;
            if (r > 0) {
                sink.append(buf.data(), static_cast<std::size_t>(r));
            } else {
                if (fds[i].fd == out.fd[0]) out.close_read();
                else err.close_read();
            }
        }
    }
    in.close_write();

    if (result.timed_out) ::kill(pid, SIGKILL);
    int status = 0;
    while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
    }
    if (WIFEXITED(status)) result.exit_code = WEXITSTATUS(status);
    else if (WIFSIGNALED(status)) result.exit_code = 128 + WTERMSIG(status);
    return result;
}

ProcessResult run_shell(const std::string& command, const ProcessOptions& opts) {
    return run_process({"/bin/sh", "-c", command}, opts);
}

} // namespace gatehouse
