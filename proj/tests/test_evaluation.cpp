#include <doctest.h>

#include <sstream>

#include "btpriv/commands.hpp"
#include "btpriv/error.hpp"
#include "btpriv/evaluation.hpp"
#include "btpriv/scenario.hpp"
#include "btpriv/simulation.hpp"
#include "support.hpp"

using namespace btpriv;

namespace {

TraceBundle sale_only() {
    TraceBundle b;
    b.truth.push_back({0, truth::PointOfSale{"p", "Pat", test::id(1), "shop"}});
    return b;
}

}  // namespace

TEST_CASE("scores leave undefined ratios absent") {
    const Score s = make_score(2, 4, 3, 3);
    CHECK(*s.precision == 0.5);
    CHECK(*s.recall == 1.0);
    const Score none = make_score(0, 0, 0, 5);
    CHECK_FALSE(none.precision);
    CHECK(*none.recall == 0.0);
    CHECK_FALSE(make_score(0, 0, 0, 0).recall);
    CHECK(format_metric(std::nullopt).empty());
    CHECK(format_metric(0.25) == "0.250000");
}

TEST_CASE("threat names parse") {
    CHECK(parse_threat("breadcrumb") == Threat::Breadcrumb);
    CHECK(parse_threat_list("all").size() == 6);
    CHECK(parse_threat_list("location,association") == std::set<Threat>{Threat::Location, Threat::Association});
    CHECK_THROWS_AS(parse_threat("gossip"), ArgumentError);
    CHECK_THROWS_AS(parse_threat_list(""), ArgumentError);
}

TEST_CASE("matching output scores one, empty output has no precision") {
    const TraceBundle truth = sale_only();
    const std::vector<Sighting> log = {test::sighting("s", 5, 1)};

    AttackOutputs perfect;
    perfect.selected = {Threat::Association};
    perfect.association = {{test::id(1), "Pat"}};
    const Metrics m = evaluate_against_truth(perfect, log, truth);
    REQUIRE(m.find("association"));
    CHECK(*m.find("association")->precision == 1.0);
    CHECK(*m.find("association")->recall == 1.0);

    AttackOutputs empty;
    empty.selected = {Threat::Association};
    const Metrics e = evaluate_against_truth(empty, log, truth);
    CHECK_FALSE(e.find("association")->precision);
    CHECK(*e.find("association")->recall == 0.0);

    AttackOutputs wrong = perfect;
    wrong.association = {{test::id(1), "Sam"}};
    CHECK(*evaluate_against_truth(wrong, log, truth).find("association")->precision == 0.0);
}

TEST_CASE("outputs from another run are refused") {
    TraceBundle truth = sale_only();
    truth.config_digest = "aaaaaaaaaaaaaaaa";
    AttackOutputs o;
    o.selected = {Threat::Association};
    o.config_digest = "bbbbbbbbbbbbbbbb";
    CHECK_THROWS_AS(evaluate_against_truth(o, {}, truth), RefusalError);
    o.config_digest = truth.config_digest;
    CHECK_NOTHROW(evaluate_against_truth(o, {}, truth));
}

TEST_CASE("association without a ledger reports its unmet precondition") {
    const std::vector<Sighting> log = {test::sighting("s", 5, 1)};
    const AttackOutputs o = run_attacks(log, std::nullopt, {Threat::Association}, {}, {});
    CHECK_FALSE(o.association_precondition_met);
    CHECK(o.association.empty());
    const auto records = report_records(o);
    REQUIRE(records.size() == 1);
    CHECK(records[0]["kind"] == "report");
    CHECK(records[0]["threat"] == "association");
    CHECK(records[0]["note"].get<std::string>().find("precondition unmet") != std::string::npos);
}

TEST_CASE("metrics csv has fixed columns") {
    Metrics m;
    m.rows.push_back({"association", make_score(1, 1, 1, 2)});
    m.rows.push_back({"location", make_score(0, 0, 0, 0)});
    m.linkability = LinkabilityScore{1.0, 0.5, 1.0, 4};
    std::ostringstream out;
    write_metrics_csv(out, m);
    CHECK(out.str() ==
          "threat,precision,recall,linkability\n"
          "association,1.000000,0.500000,\n"
          "location,,,1.000000\n");
}

TEST_CASE("a full attack run on the demo scores perfectly on association") {
    const ScenarioConfig cfg = load_scenario(test::source_path("scenarios/demo.json"));
    const TraceBundle b = run(cfg, default_seed(cfg));
    const PosDatabase pos = PosDatabase::from_sales(b.truth);
    AttackInputs in;
    in.pos = &pos;
    in.incidents = incident_queries(b.truth, 300);
    const AttackOutputs o = run_attacks(b.sightings, std::nullopt, parse_threat_list("all"), {}, in);
    CHECK(o.association_precondition_met);
    const Metrics m = evaluate_against_truth(o, b.sightings, b);
    CHECK(*m.find("association")->precision == 1.0);
    CHECK(*m.find("association")->recall == 1.0);
    CHECK(*m.find("location")->recall == 1.0);
    REQUIRE(m.linkability);
    CHECK(m.linkability->raw == 1.0);
    CHECK(report_records(o).size() == 6);
}

TEST_CASE("renaming drives id-equality linkability to chance") {
    const ScenarioConfig base = load_scenario(test::source_path("scenarios/reference.json"));
    const TraceBundle b = run(apply_defense(base, Defense::Renaming), 7);
    const AttackOutputs o = run_attacks(b.sightings, std::nullopt, {Threat::Location}, {}, {});
    const Metrics m = evaluate_against_truth(o, b.sightings, b);
    REQUIRE(m.linkability);
    CHECK(m.linkability->pairs > 0);
    CHECK(std::abs(m.linkability->raw - m.linkability->chance) <= 0.05);
    CHECK(m.linkability->score <= 0.05);

    const TraceBundle plain = run(base, 7);
    const AttackOutputs p = run_attacks(plain.sightings, std::nullopt, {Threat::Location}, {}, {});
    CHECK(evaluate_against_truth(p, plain.sightings, plain).linkability->score == 1.0);
}
