#pragma once

#include <chrono>
#include <cstdint>
#include <ostream>
#include <string>

#include "cli/config.hpp"

namespace swapcalc::cli {

struct RunOptions {
  std::string out_path;
  std::uint64_t seed = 1;
  int threads = 1;
};

/// Exit status contract: 0 success, 1 validation error, 2 verification
/// failure.  Validation problems are thrown as exceptions and mapped by the
/// caller; these functions return 0 or 2.
int cmd_fidelity_chain(const Config& cfg, const RunOptions& run, std::ostream& log);
int cmd_link_efficiency(const Config& cfg, const RunOptions& run, std::ostream& log);
int cmd_imbalance_map(const Config& cfg, const RunOptions& run, std::ostream& log);
int cmd_type2_report(const Config& cfg, const RunOptions& run, std::ostream& log);
int cmd_verify(const Config& cfg, const RunOptions& run, std::ostream& log);

}  // namespace swapcalc::cli
