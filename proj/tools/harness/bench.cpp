#include "bench.hpp"
#include "process.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace harness {

namespace {

std::string format_time(double ns) {
    char buf[32];
    if (ns >= 1e6) std::snprintf(buf, sizeof buf, "%.3f ms", ns / 1e6);
    else if (ns >= 1e3) std::snprintf(buf, sizeof buf, "%.2f us", ns / 1e3);
    else std::snprintf(buf, sizeof buf, "%.0f ns", ns);
    return buf;
}

std::vector<double> as_doubles(const nlohmann::json& arr) {
    std::vector<double> v;
    for (const auto& x : arr) v.push_back(x.get<double>());
    return v;
}

nlohmann::json run_json(const std::vector<std::string>& argv) {
    const auto r = run_capture(argv, Millis(120000));
    if (!r.exited_ok()) {
        std::string cmd;
        for (const auto& a : argv) cmd += a + " ";
        throw std::runtime_error("bench worker failed: " + cmd + "\n" + r.err);
    }
    const auto nl = r.out.find_last_of('{');
    const auto j = nlohmann::json::parse(r.out.substr(nl == std::string::npos ? 0 : nl), nullptr, false);
    if (j.is_discarded()) throw std::runtime_error("bench worker printed no JSON: " + r.out);
    return j;
}

Aspect switch_aspect(selfdbg::SwitchMethod m) {
    switch (m) {
        case selfdbg::SwitchMethod::Trap: return Aspect::SwitchTrap;
        case selfdbg::SwitchMethod::SegvLoadStore: return Aspect::SwitchSegvRW;
        case selfdbg::SwitchMethod::SegvExec: return Aspect::SwitchSegvX;
    }
    return Aspect::SwitchSegvRW;
}

void ratio_check(BenchReport& rep, const std::string& name, Aspect num, Aspect den, double lo, double hi) {
    DerivedCheck c;
    c.name = name;
    c.numerator = std::string(to_string(num));
    c.denominator = std::string(to_string(den));
    const BenchResult* a = rep.find(num);
    const BenchResult* b = rep.find(den);
    if (a != nullptr && b != nullptr && b->median > 0) {
        c.evaluated = true;
        c.ratio = a->median / b->median;
        c.passed = c.ratio >= lo && c.ratio <= hi;
    }
    rep.checks.push_back(c);
}

}  // namespace

std::string_view to_string(Aspect a) noexcept {
    switch (a) {
        case Aspect::Init: return "Init";
        case Aspect::RemoteRead: return "RemoteRead";
        case Aspect::RemoteWrite: return "RemoteWrite";
        case Aspect::SwitchTrap: return "SwitchTrap";
        case Aspect::SwitchSegvRW: return "SwitchSegvRW";
        case Aspect::SwitchSegvX: return "SwitchSegvX";
    }
    return "?";
}

double reference_ns(Aspect a) noexcept {
    switch (a) {
        case Aspect::Init: return 16e6;
        case Aspect::RemoteRead: return 4.4e3;
        case Aspect::RemoteWrite: return 4.8e3;
        case Aspect::SwitchTrap: return 7.9e6;
        case Aspect::SwitchSegvRW: return 0.065e6;
        case Aspect::SwitchSegvX: return 0.060e6;
    }
    return 0;
}

std::size_t minimum_samples(Aspect a) noexcept { return a == Aspect::Init ? 30 : 100; }

double percentile(std::vector<double> values, double q) {
    if (values.empty()) return 0;
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = static_cast<std::size_t>(std::ceil(pos));
    return values[lo] + (values[hi] - values[lo]) * (pos - static_cast<double>(lo));
}

Summary summarize(const std::vector<double>& values) {
    return {percentile(values, 0.5), percentile(values, 0.1), percentile(values, 0.9)};
}

InsufficientSamples::InsufficientSamples(Aspect a, std::size_t got)
    : std::runtime_error("InsufficientSamples: " + std::string(to_string(a)) + " has " + std::to_string(got) +
                         " samples, needs " + std::to_string(minimum_samples(a))) {}

BenchResult make_result(Aspect a, const std::vector<double>& values) {
    if (values.size() < minimum_samples(a)) throw InsufficientSamples(a, values.size());
    const Summary s = summarize(values);
    return {a, values.size(), s.median, s.p10, s.p90};
}

const BenchResult* BenchReport::find(Aspect a) const noexcept {
    for (const auto& r : rows)
        if (r.aspect == a) return &r;
    return nullptr;
}

bool BenchReport::all_checks_passed() const noexcept {
    return std::all_of(checks.begin(), checks.end(), [](const DerivedCheck& c) { return !c.evaluated || c.passed; });
}

void derive_checks(BenchReport& rep) {
    rep.checks.clear();
    ratio_check(rep, "segv_rw_vs_segv_x_within_2x", Aspect::SwitchSegvRW, Aspect::SwitchSegvX, 0.5, 2.0);
    ratio_check(rep, "read_vs_write_within_2x", Aspect::RemoteRead, Aspect::RemoteWrite, 0.5, 2.0);
    ratio_check(rep, "trap_at_least_segv_rw", Aspect::SwitchTrap, Aspect::SwitchSegvRW, 1.0, INFINITY);
    ratio_check(rep, "trap_at_least_segv_x", Aspect::SwitchTrap, Aspect::SwitchSegvX, 1.0, INFINITY);
}

BenchReport run_bench(const BenchRunOptions& o) {
    BenchReport rep;
    const std::string iters = std::to_string(o.iterations);
    const std::string warm = std::to_string(o.warmup);

    std::vector<double> init;
    for (std::size_t i = 0; i < o.init_runs; ++i)
        init.push_back(run_json({o.demo_path, "bench-init"})["init_ns"].get<double>());
    rep.rows.push_back(make_result(Aspect::Init, init));

    const selfdbg::SwitchMethod methods[] = {selfdbg::SwitchMethod::SegvLoadStore, selfdbg::SwitchMethod::SegvExec,
                                             selfdbg::SwitchMethod::Trap};
    bool memory_done = false;
    for (const auto m : methods) {
        if (o.only && *o.only != m) continue;
        const std::string name(selfdbg::to_string(m));
        const auto j = m == selfdbg::SwitchMethod::Trap
                           ? run_json({o.trap_path, "bench-worker", "--iterations", iters, "--warmup", warm})
                           : run_json({o.demo_path, "bench-worker", "--method", name, "--iterations", iters,
                                       "--warmup", warm});
        if (!j.value("protected", false)) throw std::runtime_error(name + " worker ran unprotected");
        rep.rows.push_back(make_result(switch_aspect(m), as_doubles(j.at("switch_ns"))));
        if (!memory_done) {
            rep.rows.push_back(make_result(Aspect::RemoteRead, as_doubles(j.at("read_ns"))));
            rep.rows.push_back(make_result(Aspect::RemoteWrite, as_doubles(j.at("write_ns"))));
            memory_done = true;
        }
    }
    std::stable_sort(rep.rows.begin(), rep.rows.end(),
                     [](const BenchResult& a, const BenchResult& b) { return a.aspect < b.aspect; });
    derive_checks(rep);
    return rep;
}

std::string render_table(const BenchReport& rep) {
    std::ostringstream out;
    char line[160];
    std::snprintf(line, sizeof line, "%-14s %8s %12s %12s %12s %12s\n", "Aspect", "Samples", "Median", "P10", "P90",
                  "Reference");
    out << line;
    for (const auto& r : rep.rows) {
        std::snprintf(line, sizeof line, "%-14s %8zu %12s %12s %12s %12s\n", std::string(to_string(r.aspect)).c_str(),
                      r.samples, format_time(r.median).c_str(), format_time(r.p10).c_str(),
                      format_time(r.p90).c_str(), format_time(reference_ns(r.aspect)).c_str());
        out << line;
    }
    for (const auto& c : rep.checks) {
        if (!c.evaluated) {
            out << "check " << c.name << ": skipped\n";
            continue;
        }
        std::snprintf(line, sizeof line, "check %s: ratio %.3f %s\n", c.name.c_str(), c.ratio,
                      c.passed ? "PASS" : "FAIL");
        out << line;
    }
    return out.str();
}

nlohmann::json to_json(const BenchReport& rep) {
    nlohmann::json j;
    j["rows"] = nlohmann::json::array();
    for (const auto& r : rep.rows)
        j["rows"].push_back({{"aspect", to_string(r.aspect)},
                             {"samples", r.samples},
                             {"median_ns", r.median},
                             {"p10_ns", r.p10},
                             {"p90_ns", r.p90},
                             {"reference_ns", reference_ns(r.aspect)}});
    j["checks"] = nlohmann::json::array();
    for (const auto& c : rep.checks) {
        nlohmann::json cj{{"name", c.name},
                          {"numerator", c.numerator},
                          {"denominator", c.denominator},
                          {"evaluated", c.evaluated},
                          {"passed", c.passed}};
        cj["ratio"] = c.evaluated ? nlohmann::json(c.ratio) : nlohmann::json(nullptr);
        j["checks"].push_back(cj);
    }
    j["all_checks_passed"] = rep.all_checks_passed();
    return j;
}

}  // namespace harness
