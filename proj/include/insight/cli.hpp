#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace insight::cli {

// Exit codes: 0 success, 1 validation/config error, 2 partial run failures,
// 3 total failure.
int dispatch(std::vector<std::string> args, std::ostream& out, std::ostream& err);

} // namespace insight::cli
