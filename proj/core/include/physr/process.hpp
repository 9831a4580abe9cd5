#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

namespace physr {

struct ProcessResult {
    int exit_code = -1;
    bool timed_out = false;
    /// Captured output, cut at the capture limit.
    std::string out;
    std::string err;
    bool out_truncated = false;
    bool err_truncated = false;
};

/// Run argv[0] (searched on PATH) in `cwd` with stdin closed. The process
/// group is killed when `timeout` elapses. Throws Error when the program
/// cannot be started.
ProcessResult run_process(const std::vector<std::string>& argv, const std::filesystem::path& cwd,
                          std::chrono::milliseconds timeout, std::size_t capture_limit = 1 << 20);

} // namespace physr
