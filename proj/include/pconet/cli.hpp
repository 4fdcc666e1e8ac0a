#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace pconet::cli {

enum ExitCode : int {
    kOk = 0,
    kAllFailed = 1,  // predict: no image could be classified
    kUsage = 2,
    kData = 3,
    kTraining = 4,
    kCheckpoint = 5,
};

/// Flat `key = value` file; '#' starts a comment. Throws std::runtime_error
/// with the line number on a line without '='.
std::map<std::string, std::string> read_config(const std::filesystem::path& path);

/// Splices config values into `args` (after the subcommand) as `--key=value`
/// for every key not already given on the command line. Boolean flags take
/// true/false/on/off/1/0.
std::vector<std::string> merge_config(const std::vector<std::string>& args,
                                      const std::map<std::string, std::string>& config);

/// Entry point without the program name, e.g. {"train", "--data", "ds"}.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace pconet::cli
