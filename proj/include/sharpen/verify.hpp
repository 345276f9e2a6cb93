#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace sharpen {

struct SuiteResult {
    std::string name;
    int criterion = 0;
    bool passed = false;
    /// Measured values behind the verdict.
    nlohmann::json measured;
    double seconds = 0.0;
};

/// Suite names in criterion order.
const std::vector<std::string>& suite_names();

/// Runs one acceptance suite. Unknown names are InputErrors.
SuiteResult run_suite(const std::string& name);

} // namespace sharpen
