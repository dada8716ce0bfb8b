#pragma once

#include <string>
#include <vector>

namespace qgen::cli {

inline constexpr const char* kVersion = "0.1.0";

// Runs one subcommand: augment, overgenerate, train-ranker, rank, eval,
// rouge. Returns the process exit status: 0 on success, 1 on validation
// errors, 2 on backend/transport errors.
int dispatch(const std::vector<std::string>& args);

}  // namespace qgen::cli
