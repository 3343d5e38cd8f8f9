#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace dataiq::cli {

enum ExitCode : int { ok = 0, input_error = 2, numeric_error = 3, internal_error = 4 };

struct RunOptions {
    // Skip the DATAIQ_SEED override (used when replaying a manifest).
    bool ignore_env = false;
};

/// Runs one command line (args[0] is the subcommand) and returns its exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const RunOptions& opts = {});

std::string sha256_hex(std::string_view bytes);

} // namespace dataiq::cli
