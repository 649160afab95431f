#pragma once

#include <string>
#include <vector>

namespace dmpc::cli {

/// Entry point shared by the binary and the tests. Returns the process exit
/// code: 0 iff the command ran and every certification/audit it performed
/// passed.
int run_cli(const std::vector<std::string>& args);

} // namespace dmpc::cli
