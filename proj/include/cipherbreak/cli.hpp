#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace cipherbreak::cli {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kDataRootEnv = "CIPHERBREAK_DATA_ROOT";

// Exit codes: 0 success, 1 usage, 2 data, 3 numeric failure.
enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

// args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace cipherbreak::cli
