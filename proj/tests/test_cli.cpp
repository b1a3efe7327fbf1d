#include <doctest.h>

#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "support.hpp"

using namespace btpriv;
using test::run_cli;
using test::slurp;
namespace fs = std::filesystem;

namespace {

std::string scenario(const std::string& name) { return test::source_path("scenarios/" + name + ".json").string(); }

std::vector<nlohmann::json> lines(const fs::path& p) {
    std::vector<nlohmann::json> out;
    std::istringstream in(slurp(p));
    for (std::string line; std::getline(in, line);) {
        if (!line.empty()) out.push_back(nlohmann::json::parse(line));
    }
    return out;
}

std::map<std::string, std::string> file_map(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::directory_iterator(dir)) out[e.path().filename().string()] = slurp(e.path());
    return out;
}

// threat -> "precision,recall"
std::map<std::string, std::string> csv_rows(const fs::path& p, std::size_t skip_columns) {
    std::map<std::string, std::string> out;
    std::istringstream in(slurp(p));
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
        out[cells[skip_columns]] = cells[skip_columns + 1] + "," + cells[skip_columns + 2];
    }
    return out;
}

}  // namespace

TEST_CASE("simulate is reproducible and writes a manifest") {
    const fs::path dir = test::scratch_dir("cli-sim");
    REQUIRE(run_cli("simulate --scenario " + scenario("demo") + " --seed 1 --out " + (dir / "a").string()) == 0);
    const auto first = file_map(dir / "a");
    CHECK(first.size() == 3);
    REQUIRE(run_cli("simulate --scenario " + scenario("demo") + " --seed 1 --out " + (dir / "a").string()) == 0);
    CHECK(file_map(dir / "a") == first);

    const auto manifest = nlohmann::json::parse(first.at("manifest.json"));
    CHECK(manifest["command"] == "simulate");
    CHECK(manifest["seed"] == 1);
    CHECK(manifest["config_digest"].get<std::string>().size() == 16);
    CHECK(manifest.contains("tool_version"));

    REQUIRE(run_cli("simulate --scenario " + scenario("demo") + " --seed 2 --out " + (dir / "b").string()) == 0);
    CHECK(slurp(dir / "b" / "trace.jsonl") != first.at("trace.jsonl"));
    for (const auto& e : fs::directory_iterator(dir / "a")) CHECK(e.path().extension() != ".tmp");
}

TEST_CASE("usage and validation failures exit 2") {
    const fs::path dir = test::scratch_dir("cli-errors");
    const fs::path log = dir / "log.txt";
    {
        std::ofstream bad(dir / "bad.json");
        bad << R"({"horizon": 10, "sites": [], "scanners": [{"id": "s", "site": "nowhere"}]})";
    }
    CHECK(run_cli("simulate --scenario " + (dir / "bad.json").string() + " --out " + (dir / "x").string(), log) == 2);
    CHECK(slurp(log).find("scanners[0].site") != std::string::npos);
    CHECK_FALSE(fs::exists(dir / "x" / "manifest.json"));

    CHECK(run_cli("simulate --out " + (dir / "x").string()) == 2);  // missing --scenario
    CHECK(run_cli("frobnicate") == 2);
    CHECK(run_cli("simulate --scenario " + (dir / "missing.json").string() + " --out " + (dir / "x").string()) == 2);

    REQUIRE(run_cli("simulate --scenario " + scenario("demo") + " --out " + (dir / "sim").string()) == 0);
    const std::string trace = (dir / "sim" / "trace.jsonl").string();
    CHECK(run_cli("attack --trace " + trace + " --threats gossip --out " + (dir / "atk").string(), log) == 2);
    CHECK(slurp(log).find("gossip") != std::string::npos);
    CHECK(run_cli("attack --trace " + trace + " --window 0 --out " + (dir / "atk").string()) == 2);
    CHECK(run_cli("attack --trace " + trace + " --incident nowhere --out " + (dir / "atk").string()) == 2);
    CHECK(run_cli("defense-matrix --scenario " + scenario("demo") + " --defenses tinfoil --out " + (dir / "dm").string()) == 2);

    {
        std::ofstream salt(dir / "salt");
        salt << "0x1234\n";
    }
    const std::string csi = "csi presence --trace " + trace + " --salt-file " + (dir / "salt").string() + " --scanner s-park";
    CHECK(run_cli(csi + " --window 50:10 --out " + (dir / "p").string()) == 2);
    CHECK(run_cli(csi + " --window soon --out " + (dir / "p").string()) == 2);
    CHECK(run_cli("csi dance --trace " + trace + " --out " + (dir / "p").string()) == 2);
    CHECK(run_cli(csi + " --window 10:50 --out " + (dir / "p").string()) == 0);
}

TEST_CASE("attack writes one report per threat and metrics only with truth") {
    const fs::path dir = test::scratch_dir("cli-attack");
    REQUIRE(run_cli("simulate --scenario " + scenario("demo") + " --out " + (dir / "sim").string()) == 0);
    const std::string trace = (dir / "sim" / "trace.jsonl").string();
    const std::string pos = (dir / "sim" / "pos_db.txt").string();

    REQUIRE(run_cli("attack --trace " + trace + " --pos-db " + pos + " --threats all --out " + (dir / "atk").string()) == 0);
    std::set<std::string> threats;
    for (const auto& r : lines(dir / "atk" / "report.jsonl")) {
        CHECK(r["kind"] == "report");
        threats.insert(r["threat"].get<std::string>());
    }
    CHECK(threats == std::set<std::string>{"association", "location", "preference", "constellation", "transaction",
                                           "breadcrumb"});
    CHECK(fs::exists(dir / "atk" / "metrics.csv"));
    const auto first = file_map(dir / "atk");
    REQUIRE(run_cli("attack --trace " + trace + " --pos-db " + pos + " --threats all --out " + (dir / "atk").string()) == 0);
    CHECK(file_map(dir / "atk") == first);

    // The baseline column of the defense matrix agrees with the attack command.
    REQUIRE(run_cli("defense-matrix --scenario " + scenario("demo") + " --defenses baseline --out " + (dir / "dm").string()) == 0);
    const auto metrics = csv_rows(dir / "atk" / "metrics.csv", 0);
    const auto matrix = csv_rows(dir / "dm" / "matrix.csv", 1);
    for (const auto& [threat, cells] : metrics) {
        CAPTURE(threat);
        REQUIRE(matrix.count(threat) == 1);
        CHECK(matrix.at(threat) == cells);
    }

    // Without a ledger the association report says so.
    REQUIRE(run_cli("attack --trace " + trace + " --threats association --out " + (dir / "nopos").string()) == 0);
    const auto records = lines(dir / "nopos" / "report.jsonl");
    REQUIRE(records.size() == 1);
    CHECK(records[0]["note"].get<std::string>().find("precondition unmet") != std::string::npos);

    // A truth-free log gets reports but no metrics.
    {
        std::ifstream in(trace);
        std::ofstream out(dir / "external.jsonl");
        for (std::string line; std::getline(in, line);) {
            if (line.find("\"kind\":\"sighting\"") != std::string::npos) out << line << '\n';
        }
    }
    REQUIRE(run_cli("attack --trace " + (dir / "external.jsonl").string() + " --out " + (dir / "ext").string()) == 0);
    CHECK(lines(dir / "ext" / "report.jsonl").size() == 6);
    CHECK_FALSE(fs::exists(dir / "ext" / "metrics.csv"));
}

TEST_CASE("csi commands chain through the hashed store") {
    const fs::path dir = test::scratch_dir("cli-csi");
    REQUIRE(run_cli("simulate --scenario " + scenario("breadcrumb") + " --out " + (dir / "sim").string()) == 0);
    {
        std::ofstream salt(dir / "salt");
        salt << "987654321\n";
    }
    const std::string salt = " --salt-file " + (dir / "salt").string();
    REQUIRE(run_cli("csi ingest --trace " + (dir / "sim" / "trace.jsonl").string() + salt + " --out " +
                    (dir / "ing").string()) == 0);
    const fs::path store = dir / "ing" / "store.jsonl";
    const std::string text = slurp(store);
    CHECK(text.find("00:19:C1:70:00:01") == std::string::npos);
    CHECK(text.find("987654321") == std::string::npos);

    REQUIRE(run_cli("csi match --store " + store.string() + salt + " --candidate 00:19:C1:70:00:01 --out " +
                    (dir / "m").string()) == 0);
    const auto matches = lines(dir / "m" / "matches.jsonl");
    CHECK_FALSE(matches.empty());

    REQUIRE(run_cli("csi presence --store " + store.string() + " --scanner s-plaza --window 4700:5300 --out " +
                    (dir / "p").string()) == 0);
    const auto witnesses = lines(dir / "p" / "presence.jsonl");
    CHECK(witnesses.size() >= 2);
    bool found = false;
    for (const auto& w : witnesses) found |= w["digest"] == matches[0]["digest"];
    CHECK(found);

    REQUIRE(run_cli("csi classify --store " + store.string() + " --out " + (dir / "c").string()) == 0);
    for (const auto& r : lines(dir / "c" / "roles.jsonl")) CHECK(r["kind"] == "role");
}

TEST_CASE("print-schema emits JSON") {
    const fs::path dir = test::scratch_dir("cli-schema");
    REQUIRE(run_cli("--print-schema", dir / "schema.json") == 0);
    const auto schema = nlohmann::json::parse(slurp(dir / "schema.json"));
    CHECK(schema.contains("sighting"));
    CHECK(schema.contains("hashed-sighting"));
}
