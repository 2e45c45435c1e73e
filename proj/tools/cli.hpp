#ifndef LVMOGP_TOOLS_CLI_HPP
#define LVMOGP_TOOLS_CLI_HPP

#include <iosfwd>
#include <vector>
#include <string>

namespace lvmogp::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumerical = 3;
inline constexpr int kExitOther = 1;

/// Entry point of the `lvmogp` tool; args excludes the program name.
/// Diagnostics go to `err`, results that are not written to files go to `out`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace lvmogp::cli

#endif  // LVMOGP_TOOLS_CLI_HPP
