#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "padain/tensor.hpp"
#include "padain/verify.hpp"

namespace verify = padain::verify;

namespace {

struct FaultGuard {
    explicit FaultGuard(const char* value) { setenv("PADAIN_FAULT", value, 1); }
    ~FaultGuard() { unsetenv("PADAIN_FAULT"); }
};

int failed_in(const std::vector<verify::CheckResult>& rows, const std::string& suite) {
    int n = 0;
    for (const auto& r : rows) {
        if (!r.pass && r.suite == suite) ++n;
    }
    return n;
}

}  // namespace

TEST_CASE("every suite passes cleanly and reports distinct checks") {
    const auto all = verify::run_suite("all");
    CHECK(verify::all_pass(all));
    CHECK(all.size() >= 40);
    std::set<std::string> names;
    std::set<std::string> suites;
    for (const auto& r : all) {
        names.insert(r.suite + "/" + r.name);
        suites.insert(r.suite);
        CHECK_FALSE(r.name.empty());
    }
    CHECK(names.size() == all.size());  // no duplicate check ids
    CHECK(suites == std::set<std::string>{"grad", "stats", "bn-interaction", "perm"});

    // Named suites partition the full run.
    std::size_t total = 0;
    for (const char* s : {"grad", "stats", "bn-interaction", "perm"}) {
        const auto rows = verify::run_suite(s);
        CHECK(verify::all_pass(rows));
        for (const auto& r : rows) CHECK(r.suite == s);
        total += rows.size();
    }
    CHECK(total == all.size());
}

TEST_CASE("suites are reproducible between invocations") {
    const auto a = verify::run_suite("stats");
    const auto b = verify::run_suite("stats");
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].name == b[i].name);
        CHECK(a[i].measured == b[i].measured);
        CHECK(a[i].threshold == b[i].threshold);
    }
}

TEST_CASE("unknown suite names are usage errors") {
    CHECK_THROWS_AS((void)verify::run_suite("everything"), padain::UsageError);
    CHECK_THROWS_AS((void)verify::run_suite(""), padain::UsageError);
}

TEST_CASE("the report prints one line per check with the verdict") {
    const auto rows = verify::run_suite("perm");
    std::ostringstream os;
    verify::print_report(rows, os);
    const std::string text = os.str();
    std::size_t lines = 0;
    std::stringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) {
        if (!line.empty()) ++lines;
    }
    CHECK(lines >= rows.size());
    CHECK(text.find("PASS") != std::string::npos);
    for (const auto& r : rows) {
        CHECK(text.find(r.name) != std::string::npos);
    }
}

TEST_CASE("each negative control breaks exactly its own suite") {
    {
        FaultGuard guard("grad-backward");
        const auto rows = verify::run_suite("all");
        CHECK_FALSE(verify::all_pass(rows));
        CHECK(failed_in(rows, "grad") > 0);
        CHECK(failed_in(rows, "stats") == 0);
        CHECK(failed_in(rows, "bn-interaction") == 0);
        CHECK(failed_in(rows, "perm") == 0);
    }
    {
        FaultGuard guard("stats-shift");
        const auto rows = verify::run_suite("all");
        CHECK(failed_in(rows, "stats") > 0);
        CHECK(failed_in(rows, "grad") == 0);
    }
    {
        FaultGuard guard("bn-residual");
        const auto rows = verify::run_suite("all");
        CHECK(failed_in(rows, "bn-interaction") > 0);
        CHECK(failed_in(rows, "perm") == 0);
    }
    {
        FaultGuard guard("perm-bias");
        const auto rows = verify::run_suite("all");
        CHECK(failed_in(rows, "perm") > 0);
        CHECK(failed_in(rows, "bn-interaction") == 0);
    }
    // The guard restores a clean environment.
    CHECK(verify::all_pass(verify::run_suite("all")));
}
