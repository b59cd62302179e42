#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace ergolab::cli {

/// Exit status contract: verdicts passed, a verdict failed, error.
enum ExitCode : int { kPass = 0, kFail = 1, kError = 2 };

std::vector<std::string> command_names();

/**
 * Parse a config file into a JSON tree. Files ending in .json (or whose first
 * non-blank character is '{') are JSON; anything else is the sectioned
 * key = value format described in the README.
 */
nlohmann::json load_config(const std::string& path);

/// Full command line entry point; returns the exit status.
int run(int argc, char** argv);

}  // namespace ergolab::cli
