#pragma once

#include <string>
#include <vector>

namespace defdis::cli {

// Entry point behind the defdis binary. Returns 0 on success, 1 on runtime
// failure, 2 on usage errors (unknown flags, missing files, bad config).
int run(const std::vector<std::string>& args);
int run(int argc, const char* const* argv);

}  // namespace defdis::cli
