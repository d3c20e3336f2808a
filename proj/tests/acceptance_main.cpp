#include "uktl/verify.hpp"

#include <filesystem>
#include <iostream>

int main(int argc, char** argv) {
    const std::filesystem::path work_dir =
        argc > 1 ? std::filesystem::path(argv[1])
                 : std::filesystem::temp_directory_path() / "uktl-acceptance";
    const auto reports = uktl::run_acceptance(work_dir);
    uktl::print_reports(std::cout, reports);
    return uktl::all_pass(reports) ? 0 : 1;
}
