#ifndef SCIDT_TOOLS_CLI_HPP
#define SCIDT_TOOLS_CLI_HPP

#include <iosfwd>
#include <string>
#include <vector>

namespace scidt::cli {

    inline constexpr int exit_ok = 0;
    inline constexpr int exit_usage = 2;     // bad flags, unreadable input, config or data errors
    inline constexpr int exit_runtime = 3;   // model mismatch, divergence, anything else

    // args excludes the program name.
    int run(std::vector<std::string> const& args, std::ostream& out, std::ostream& err);

}

#endif
