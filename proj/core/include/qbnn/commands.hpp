#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace qbnn::cli {

// process exit codes
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitConfig = 3;
inline constexpr int kExitNumeric = 4;
inline constexpr int kExitIo = 5;

/// Dispatches one command (gen-data, train, qat, ptq, eval, fidelity, sweep,
/// select, reproduce, verify). args excludes the program name. Every command
/// validates its configuration before touching the filesystem and emits a
/// run manifest alongside its outputs. Returns the process exit code.
int run(const std::vector<std::string>& args);

/// Runs a pinned desk-scale experiment pipeline and writes its data bundle
/// into out_dir. Known ids: fig4a, fig4b, fig5, fig7, fig8.
void reproduce(const std::string& experiment, uint64_t seed, const std::string& out_dir);

} // namespace qbnn::cli
