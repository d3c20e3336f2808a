#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace uktl {

/// One acceptance criterion's outcome. The measured value passes against
/// the tolerance from below (<=) or, when at_least is set, from above (>=).
struct OracleReport {
    std::string name;
    double measured = 0.0;
    double tolerance = 0.0;
    bool at_least = false;
    double seconds = 0.0;
    double time_limit = 0.0;  // 0 = no limit
    bool pass = false;
    std::string detail;
};

/// Runs the full acceptance suite. work_dir is scratch space for the
/// end-to-end benchmark (created if missing).
std::vector<OracleReport> run_acceptance(const std::filesystem::path& work_dir);

void print_reports(std::ostream& os, const std::vector<OracleReport>& reports);
bool all_pass(const std::vector<OracleReport>& reports);

}  // namespace uktl
