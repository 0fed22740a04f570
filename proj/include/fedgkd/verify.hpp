#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fedgkd {

struct CheckResult {
    std::string suite;
    std::string name;
    bool passed = false;
    std::string detail;
};

struct VerifyOptions {
    std::optional<std::string> suite;           // all suites when unset
    std::optional<std::size_t> corrupt_layer;   // sensitivity fixture for the gradient suite
    std::size_t grad_points = 20;
};

/// gradients, kl, reductions, partition, algebra
std::span<const std::string_view> verify_suite_names();

/// Runs the built-in self checks. Throws ConfigError for an unknown suite name.
std::vector<CheckResult> verify(const VerifyOptions& opts = {});

}  // namespace fedgkd
