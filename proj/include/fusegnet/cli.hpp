#pragma once

// Command-line front end: train, predict, evaluate, report.

#include <iosfwd>
#include <string>
#include <vector>

namespace fusegnet {

// args excludes the program name. Returns the process exit status; failures
// print a one-line diagnostic to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace fusegnet
