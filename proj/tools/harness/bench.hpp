#pragma once

#include "selfdbg/config.hpp"

#include "json.hpp"

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace harness {

enum class Aspect { Init, RemoteRead, RemoteWrite, SwitchTrap, SwitchSegvRW, SwitchSegvX };

std::string_view to_string(Aspect a) noexcept;
// Reference execution time from the original ARM measurements, in nanoseconds.
double reference_ns(Aspect a) noexcept;
std::size_t minimum_samples(Aspect a) noexcept;

struct BenchResult {
    Aspect aspect{};
    std::size_t samples = 0;
    double median = 0;  // nanoseconds
    double p10 = 0;
    double p90 = 0;
};

struct Summary {
    double median = 0;
    double p10 = 0;
    double p90 = 0;
};

// Linear interpolation between closest ranks.
double percentile(std::vector<double> values, double q);
Summary summarize(const std::vector<double>& values);

class InsufficientSamples : public std::runtime_error {
public:
    InsufficientSamples(Aspect a, std::size_t got);
};

// Throws InsufficientSamples when `values` is below the aspect's minimum.
BenchResult make_result(Aspect a, const std::vector<double>& values);

struct DerivedCheck {
    std::string name;
    std::string numerator;
    std::string denominator;
    double ratio = 0;
    bool evaluated = false;
    bool passed = false;
};

struct BenchReport {
    std::vector<BenchResult> rows;
    std::vector<DerivedCheck> checks;

    const BenchResult* find(Aspect a) const noexcept;
    bool all_checks_passed() const noexcept;
};

// Fills the cross-row checks from whatever rows are present.
void derive_checks(BenchReport& report);

struct BenchRunOptions {
    std::string demo_path;
    std::string trap_path;
    std::optional<selfdbg::SwitchMethod> only;  // restricts the switch rows
    std::size_t iterations = 200;
    std::size_t init_runs = 30;
    std::size_t warmup = 10;
};

BenchReport run_bench(const BenchRunOptions& options);

std::string render_table(const BenchReport& report);
nlohmann::json to_json(const BenchReport& report);

}  // namespace harness
