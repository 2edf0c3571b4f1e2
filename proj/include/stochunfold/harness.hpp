// Config-driven command line front end. Strict JSON configs (unknown keys are
// errors), deterministic outputs via write_study, exit codes 0 (all checks
// pass), 1 (usage or config error), 2 (failed checks, results still written).
#pragma once

#include <string>

#include "stochunfold/study.hpp"

namespace stochunfold {

// Runs one subcommand against the config file; throws ConfigError on bad
// input. The result carries every check that was evaluated.
StudyResult run_subcommand(const std::string& name, const std::string& config_path,
                           int workers);

// Parses argv, runs the subcommand, writes outputs under --out (default from
// STOCH_UNFOLD_OUT, else the working directory), prints one line per check.
int run_cli(int argc, const char* const* argv);

}  // namespace stochunfold
