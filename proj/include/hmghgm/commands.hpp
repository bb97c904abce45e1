#pragma once

// Subcommands of the command-line tool. Each reads its settings from a
// RunConfig and writes its artifacts under the `out` directory.

#include <iosfwd>
#include <string>

#include "hmghgm/io.hpp"

namespace hmghgm {

enum ExitCode : int { kExitOk = 0, kExitUsage = 2, kExitNumerical = 3 };

/// Runs one of simulate, fit, select, decode, graph, montecarlo. Input and
/// usage problems return 2, numerical failures 3; messages go to `err`.
int run_command(const std::string& command, const RunConfig& cfg, std::ostream& out, std::ostream& err);

void cmd_simulate(const RunConfig& cfg, std::ostream& out);
void cmd_fit(const RunConfig& cfg, std::ostream& out);
void cmd_select(const RunConfig& cfg, std::ostream& out);
void cmd_decode(const RunConfig& cfg, std::ostream& out);
void cmd_graph(const RunConfig& cfg, std::ostream& out);
void cmd_montecarlo(const RunConfig& cfg, std::ostream& out);

}  // namespace hmghgm
