#pragma once

#include <iosfwd>
#include <optional>

#include "irdb/session_server.hpp"

namespace irdb {

// Terminal debugger driving a session purely through protocol requests.
// With `launch` set the program is launched (stopped on entry) first.
// Returns the program exit code if it exited, 0 otherwise.
int runRepl(ProtocolClient& client, std::istream& in, std::ostream& out, const std::optional<LaunchConfig>& launch);

}  // namespace irdb
