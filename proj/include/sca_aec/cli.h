#pragma once

// Command-line front end. RunCli is the whole program; the binary in tools/
// only forwards argv, so tests can drive every subcommand in-process.

#include <ostream>
#include <string>
#include <vector>

namespace sca_aec {

// args excludes the program name. Returns the process exit code:
// 0 success, 1 usage error, 2 data error, 3 numerical failure.
int RunCli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Worker threads: hardware concurrency capped by SCA_AEC_THREADS.
std::size_t ThreadBudget();

}  // namespace sca_aec
