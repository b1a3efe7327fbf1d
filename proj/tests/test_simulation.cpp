#include <doctest.h>

#include <map>
#include <set>

#include <json.hpp>

#include "btpriv/scenario.hpp"
#include "btpriv/simulation.hpp"
#include "btpriv/trace_io.hpp"
#include "support.hpp"

using namespace btpriv;
using nlohmann::json;

namespace {

ScenarioConfig two_site_world() {
    return parse_scenario(json::parse(R"({
        "horizon": 200,
        "sites": [{"id": "a", "x": 0, "y": 0}, {"id": "b", "x": 1000, "y": 0}],
        "edges": [{"from": "a", "to": "b", "travel": 50}],
        "scanners": [{"id": "s", "site": "a", "period": 10}],
        "people": [
          {"id": "p", "name": "P", "itinerary": [{"tick": 0, "site": "a"}, {"tick": 100, "site": "b"}],
           "devices": [{"address": "00:00:00:00:00:01", "class": "0x5A0204", "name": "phone"}]},
          {"id": "q", "name": "Q", "itinerary": [{"tick": 0, "site": "a"}], "devices": []}
        ],
        "events": [{"tick": 40, "kind": "transfer", "device": "00:00:00:00:00:01", "person": "p", "to": "q"}]
    })"));
}

const ScenarioConfig& reference() {
    static const ScenarioConfig cfg = load_scenario(test::source_path("scenarios/reference.json"));
    return cfg;
}

}  // namespace

TEST_CASE("an empty world steps without output") {
    const ScenarioConfig cfg = parse_scenario(json::parse(R"({"horizon": 5, "sites": [{"id": "a", "x": 0, "y": 0}],
                                                              "scanners": [{"id": "s", "site": "a", "period": 1}]})"));
    World w(cfg, 1);
    const StepOutput out = w.step();
    CHECK(out.sightings.empty());
    CHECK(out.truth.empty());
    CHECK(w.clock() == 1);
}

TEST_CASE("one device in range is sighted once per scan") {
    World w(two_site_world(), 1);
    const StepOutput out = w.step();
    REQUIRE(out.sightings.size() == 1);
    CHECK(out.sightings[0].scanner_id == "s");
    CHECK(out.sightings[0].observed_id == DeviceId(1));
    CHECK(out.sightings[0].observed_class == DeviceClass(0x5A0204));
    CHECK(out.sightings[0].observed_name.str() == "phone");
    CHECK(w.step().sightings.empty());  // tick 1 is not a scan tick
}

TEST_CASE("a transfer changes holders from the next tick") {
    World w(two_site_world(), 1);
    while (w.clock() < 40) w.step();
    CHECK(w.carried_by("p") == std::vector<DeviceId>{DeviceId(1)});
    const StepOutput at = w.step();
    bool logged = false;
    for (const auto& e : at.truth) logged |= std::holds_alternative<truth::Transfer>(e.payload) && e.tick == 40;
    CHECK(logged);
    CHECK(w.carried_by("p").empty());
    CHECK(w.carried_by("q") == std::vector<DeviceId>{DeviceId(1)});
    CHECK(w.location_of(DeviceId(1)).person == "q");

    // p leaves at 100; the phone stays with q at a and keeps being sighted.
    while (w.clock() < 160) w.step();
    CHECK(w.site_of_person("p") == "b");
    CHECK(w.step().sightings.size() == 1);
}

TEST_CASE("movement follows travel time along edges") {
    World w(two_site_world(), 1);
    while (w.clock() < 150) {
        w.step();
        const Tick t = w.clock() - 1;
        CHECK(w.site_of_person("p") == (t < 150 ? "a" : "b"));
    }
    w.step();
    CHECK(w.site_of_person("p") == "b");
}

TEST_CASE("horizon zero produces only the final patch state") {
    ScenarioConfig cfg = two_site_world();
    cfg.horizon = 0;
    cfg.events.clear();
    const TraceBundle b = run(cfg, 1);
    CHECK(b.sightings.empty());
    REQUIRE(b.truth.size() == 1);
    CHECK(std::holds_alternative<truth::PatchState>(b.truth[0].payload));
}

TEST_CASE("runs are deterministic in the seed") {
    const std::string a = serialize_trace(run(reference(), 7));
    CHECK(a == serialize_trace(run(reference(), 7)));
    CHECK(a != serialize_trace(run(reference(), 8)));
}

TEST_CASE("devices are conserved and truth replays to the final holders") {
    World w(reference(), 7);
    const std::size_t n = w.devices().size();
    std::map<DeviceId, std::string> holder;  // empty string: lying at a site
    for (Tick t = 0; t < reference().horizon; ++t) {
        for (const auto& e : w.step().truth) {
            std::visit([&](const auto& p) {
                using T = std::decay_t<decltype(p)>;
                if constexpr (std::is_same_v<T, truth::Carry>) holder[p.device] = p.person;
                if constexpr (std::is_same_v<T, truth::Transfer>) holder[p.device] = p.to_person;
                if constexpr (std::is_same_v<T, truth::Discard>) holder[p.device] = "";
                if constexpr (std::is_same_v<T, truth::Pickup>) holder[p.device] = p.by_person;
            }, e.payload);
        }
        std::size_t held = 0;
        for (const auto& pid : w.person_ids()) held += w.carried_by(pid).size();
        std::size_t lying = 0;
        for (const auto& d : w.devices()) lying += w.location_of(d.desc.id).site ? 1 : 0;
        REQUIRE(held + lying == n);
    }
    CHECK(holder.size() == n);
    for (const auto& [dev, who] : holder) {
        const DeviceLocation loc = w.location_of(dev);
        if (who.empty()) {
            CHECK(loc.site.has_value());
        } else {
            CHECK(loc.person == who);
        }
    }
}

TEST_CASE("every sighting is explained by a presence record") {
    const TraceBundle b = run(reference(), 7);
    std::set<std::tuple<std::string, Tick, DeviceId>> present;
    for (const auto& e : b.truth) {
        if (const auto* p = std::get_if<truth::Presence>(&e.payload)) present.insert({p->scanner, e.tick, p->wire});
    }
    REQUIRE_FALSE(b.sightings.empty());
    for (const auto& s : b.sightings) CHECK(present.count({s.scanner_id, s.tick, s.observed_id}) == 1);
}

TEST_CASE("friendly-name-only devices share names but not ids") {
    json doc = json::parse(R"({
        "horizon": 120,
        "sites": [{"id": "a", "x": 0, "y": 0}],
        "scanners": [{"id": "s", "site": "a", "period": 30}],
        "people": [
          {"id": "p", "itinerary": [{"tick": 0, "site": "a"}],
           "devices": [{"address": "00:00:00:00:00:01", "class": "0x5A0204", "name": "phone",
                        "policy": {"names": {"mode": "friendly_name_only"}}}]},
          {"id": "q", "itinerary": [{"tick": 0, "site": "a"}],
           "devices": [{"address": "00:00:00:00:00:02", "class": "0x5A0204", "name": "phone",
                        "policy": {"names": {"mode": "friendly_name_only"}}}]}
        ]})");
    const TraceBundle b = run(parse_scenario(doc), 3);
    REQUIRE(b.sightings.size() == 8);
    std::set<DeviceId> ids;
    for (const auto& s : b.sightings) {
        CHECK(s.observed_name.str() == "phone");
        CHECK(s.observed_id != DeviceId(1));
        CHECK(s.observed_id != DeviceId(2));
        ids.insert(s.observed_id);
    }
    CHECK(ids.size() == 8);
}

TEST_CASE("scanners get distinct default addresses") {
    World w(reference(), 7);
    std::set<DeviceId> addrs;
    for (const auto& s : w.scanners()) addrs.insert(s.address);
    CHECK(addrs.size() == w.scanners().size());
    CHECK(w.scanners()[0].address == DeviceId(0x020000000001ull));
}

TEST_CASE("discoverable fraction only touches undeclared modes") {
    const ScenarioConfig pop = load_scenario(test::source_path("scenarios/population.json"));
    World w(pop, default_seed(pop));
    std::size_t discoverable = 0;
    for (const auto& d : w.devices()) discoverable += d.desc.mode == VisibilityMode::Discoverable;
    CHECK(discoverable > 0);
    CHECK(discoverable < w.devices().size());

    json doc = json::parse(R"({
        "horizon": 1, "discoverable_fraction": 0.0,
        "sites": [{"id": "a", "x": 0, "y": 0}], "scanners": [{"id": "s", "site": "a"}],
        "people": [{"id": "p", "itinerary": [{"tick": 0, "site": "a"}],
                    "devices": [{"address": "00:00:00:00:00:01", "class": "0x000200", "mode": "discoverable"},
                                {"address": "00:00:00:00:00:02", "class": "0x000200"}]}]})");
    World w2(parse_scenario(doc), 1);
    CHECK(w2.device(DeviceId(1)).desc.mode == VisibilityMode::Discoverable);
    CHECK(w2.device(DeviceId(2)).desc.mode == VisibilityMode::Stealth);
}
