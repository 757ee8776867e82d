#ifndef CDRA_CLI_HPP
#define CDRA_CLI_HPP

#include <iosfwd>
#include <string>
#include <vector>

#include "cdra/error.hpp"

namespace cdra::cli {

enum ExitCode : int {
    kOk = 0,
    kInternal = 1,
    kParse = 2,
    kSemantic = 3,
    kIo = 4,
    kSupport = 5,
};

int exit_code_for(ErrorCode code);

/// Runs one subcommand. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace cdra::cli

#endif  // CDRA_CLI_HPP
