#include "physr/process.hpp"

#include <cerrno>
#include <csignal>
#include <cstring>

#include <fcntl.h>
#include <poll.h>
#include <sys/wait.h>
#include <unistd.h>

#include <fmt/format.h>

#include "physr/error.hpp"

namespace physr {

namespace {

void append_capped(std::string& dst, const char* data, std::size_t n, std::size_t cap, bool& truncated) {
    if (dst.size() >= cap) {
        truncated = truncated || n > 0;
        return;
    }
    const std::size_t take = std::min(n, cap - dst.size());
    dst.append(data, take);
    if (take < n) truncated = true;
}

} // namespace

ProcessResult run_process(const std::vector<std::string>& argv, const std::filesystem::path& cwd,
                          std::chrono::milliseconds timeout, std::size_t capture_limit) {
    if (argv.empty()) throw ArgumentError("empty command line");
    int out_pipe[2];
    int err_pipe[2];
    int exec_pipe[2]; // reports exec failure; closed on success by O_CLOEXEC
    if (pipe(out_pipe) != 0 || pipe(err_pipe) != 0 || pipe2(exec_pipe, O_CLOEXEC) != 0)
        throw Error(fmt::format("pipe failed: {}", std::strerror(errno)));

    std::vector<char*> args;
    for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
    args.push_back(nullptr);
    const std::string dir = cwd.string();

    const pid_t pid = fork();
    if (pid < 0) throw Error(fmt::format("fork failed: {}", std::strerror(errno)));
    if (pid == 0) {
        setpgid(0, 0);
        const int devnull = open("/dev/null", O_RDONLY);
        if (devnull >= 0) dup2(devnull, 0);
        dup2(out_pipe[1], 1);
        dup2(err_pipe[1], 2);
        close(out_pipe[0]);
        close(err_pipe[0]);
        close(exec_pipe[0]);
        int code = 0;
        if (chdir(dir.c_str()) != 0) {
            code = errno;
        } else {
            execvp(args[0], args.data());
            code = errno;
        }
        [[maybe_unused]] auto w = write(exec_pipe[1], &code, sizeof code);
        _exit(127);
    }
    setpgid(pid, pid);
    close(out_pipe[1]);
    close(err_pipe[1]);
    close(exec_pipe[1]);

    int exec_errno = 0;
    if (read(exec_pipe[0], &exec_errno, sizeof exec_errno) == static_cast<ssize_t>(sizeof exec_errno)) {
        close(exec_pipe[0]);
        close(out_pipe[0]);
        close(err_pipe[0]);
        waitpid(pid, nullptr, 0);
        throw Error(fmt::format("cannot run '{}': {}", argv[0], std::strerror(exec_errno)));
    }
    close(exec_pipe[0]);

    ProcessResult result;
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    pollfd fds[2] = {{out_pipe[0], POLLIN, 0}, {err_pipe[0], POLLIN, 0}};
    int open_fds = 2;
    char buf[4096];
    while (open_fds > 0) {
        const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
        if (left.count() <= 0) {
            result.timed_out = true;
            break;
        }
        const int ready = poll(fds, 2, static_cast<int>(std::min<long long>(left.count(), 1000)));
        if (ready < 0) {
            if (errno == EINTR) continue;
            break;
        }
        for (int i = 0; i < 2; ++i) {
            if (fds[i].fd < 0 || !(fds[i].revents & (POLLIN | POLLHUP | POLLERR))) continue;
            const ssize_t n = read(fds[i].fd, buf, sizeof buf);
            if (n <= 0) {
                close(fds[i].fd);
                fds[i].fd = -1;
                --open_fds;
                continue;
            }
            if (i == 0) append_capped(result.out, buf, static_cast<std::size_t>(n), capture_limit, result.out_truncated);
            else append_capped(result.err, buf, static_cast<std::size_t>(n), capture_limit, result.err_truncated);
        }
    }
    if (result.timed_out) kill(-pid, SIGKILL);
    for (auto& f : fds) {
        if (f.fd >= 0) close(f.fd);
    }
    int status = 0;
    while (waitpid(pid, &status, 0) < 0 && errno == EINTR) {
    }
    if (result.timed_out) result.exit_code = -1;
    else if (WIFEXITED(status)) result.exit_code = WEXITSTATUS(status);
    else if (WIFSIGNALED(status)) result.exit_code = 128 + WTERMSIG(status);
    return result;
}

} // namespace physr
