#pragma once

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "kmf/solver.hpp"

namespace kmf {

/// Config-file parse failure; `line` is 1-based.
class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& what, std::size_t line) : std::runtime_error(what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// `key = value` lines, one per SolverConfig field, 17 significant digits.
std::string format_config(const SolverConfig& config);

/// Reads `key = value` lines over `base`; '#' starts a comment, blank lines
/// are skipped, unknown keys and malformed values throw ConfigError.
/// Keys: mach, aoa_deg, gamma, cfl, n_outer, n_inner, mode, threads,
/// convergence_tol (a number or "none"). The result is not validated.
SolverConfig parse_config(std::istream& in, SolverConfig base = {});
SolverConfig parse_config_text(const std::string& text, SolverConfig base = {});
SolverConfig read_config_file(const std::string& path, SolverConfig base = {});

/// Entry point of the `kmf` tool: generate, solve, bench, validate, info.
/// Returns the process exit status.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_command(int argc, char** argv);

}  // namespace kmf
