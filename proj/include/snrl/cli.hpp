// Command-line front end: train, eval, verify, bench.
#ifndef SNRL_CLI_HPP_
#define SNRL_CLI_HPP_

#include <snrl/config.hpp>

#include <iosfwd>
#include <string>
#include <vector>

namespace snrl {

/// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitCheckpoint = 3;
inline constexpr int kExitAborted = 4;
inline constexpr int kExitVerifyFailed = 5;

int cmd_train(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_eval(const RunConfig& cfg, const std::filesystem::path& checkpoint, std::ostream& out,
             std::ostream& err);
int cmd_verify(const RunConfig& cfg, const std::filesystem::path& checkpoint, std::ostream& out,
               std::ostream& err);
int cmd_bench(const RunConfig& cfg, std::ostream& out, std::ostream& err);

/// Parses argv (args[0] is the program name) and dispatches.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Worker count after applying the SNRL_THREADS cap.
int effective_workers(int configured);

}  // namespace snrl

#endif  // SNRL_CLI_HPP_
