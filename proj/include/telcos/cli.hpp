#pragma once

namespace telcos::cli {

// Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
int run(int argc, const char* const* argv);

}  // namespace telcos::cli
