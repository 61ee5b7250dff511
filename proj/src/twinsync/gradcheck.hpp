#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace twinsync::gradcheck {

struct Options {
    std::uint64_t seed = 1;
    std::size_t networks = 20;
    std::size_t max_parameters = 200;
    double step = 1e-4;
    // Denominator floor, as a fraction of max(1, largest gradient entry).
    // Coordinates far below the gradient's scale sit under the round-off
    // noise of the difference quotient and are judged on absolute error.
    double floor = 1e-6;
};

struct SuiteResult {
    std::string name;
    std::size_t networks = 0;
    std::size_t coordinates = 0;
    double max_relative_error = 0.0;
};

double relative_error(double analytic, double numeric, double floor);

// Suites: "toy" (the 6-parameter 1-1-2 network), "data_loss", "ewc_penalty"
// and "ewcpp_penalty" over random networks.
std::vector<SuiteResult> run(const Options& options);

}  // namespace twinsync::gradcheck
