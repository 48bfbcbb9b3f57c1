// Acceptance runner: `acceptance [--quick] [criterion...]`. With no criteria
// every check runs. One PASS/FAIL line per criterion; exit status 1 if any fails.

#include <cstdlib>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include "asgd/verify.hpp"

int main(int argc, char** argv) {
    asgd::verify::Options opts;
    opts.log = &std::cerr;
    std::vector<int> which;
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg == "--quick") {
            opts.quick = true;
        } else {
            try {
                which.push_back(std::stoi(arg));
            } catch (const std::exception&) {
                std::cerr << "acceptance: bad argument \"" << arg << "\"\n";
                return 2;
            }
        }
    }
    if (which.empty())
        for (int c = 1; c <= asgd::verify::kCriteria; ++c) which.push_back(c);

    int failed = 0;
    for (int c : which) {
        try {
            const auto check = asgd::verify::run(c, opts);
            std::cout << asgd::verify::format(check) << std::endl;
            failed += !check.passed;
        } catch (const std::exception& e) {
            std::cout << "FAIL " << c << " error: " << e.what() << std::endl;
            ++failed;
        }
    }
    return failed ? 1 : 0;
}
