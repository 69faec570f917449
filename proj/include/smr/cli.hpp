#pragma once

namespace smr {

/// Full command-line entry point: parses argv, dispatches the subcommand,
/// maps exceptions to exit codes (0 ok, 2 config, 3 data, 4 numeric) with a
/// one-line machine-parsable message on stderr. Reentrant, so tests can call
/// it in-process.
int run_cli(int argc, const char* const* argv);

} // namespace smr
