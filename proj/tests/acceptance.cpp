// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "btpriv/adversary.hpp"
#include "btpriv/btstack.hpp"
#include "btpriv/commands.hpp"
#include "btpriv/csi.hpp"
#include "btpriv/evaluation.hpp"
#include "btpriv/rng.hpp"
#include "btpriv/scenario.hpp"
#include "btpriv/simulation.hpp"
#include "btpriv/trace_io.hpp"
#include "oracles/cooccurrence.hpp"
#include "support.hpp"

using namespace btpriv;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Pinned tolerances and expectations.
constexpr std::size_t kPopulation = 1000;
constexpr double kDiscoverableFraction = 0.075;
constexpr double kBinomialTail = 0.005;             // two-sided 99%
constexpr std::size_t kPinnedPopulationCount = 81;  // recorded on first computation
constexpr double kLinkabilityTolerance = 0.05;
constexpr Tick kSwitchTolerance = 600;
constexpr double kKnobFraction = 0.25;
constexpr std::uint64_t kMixZero = 0xE220A8397B1DCDAFull;  // from the stand-alone reference mixer
constexpr int kOracleSeeds = 100;

struct Outcome {
    bool pass = true;
    std::string summary;
    std::string failures;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            failures += (failures.empty() ? "" : "; ") + what;
        }
    }
    std::string text() const { return failures.empty() ? summary : summary + " | " + failures; }
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

ScenarioConfig scenario(const std::string& name) {
    return load_scenario(test::source_path("scenarios/" + name + ".json"));
}

const OuiTable& oui() {
    static const OuiTable t = OuiTable::load(test::source_path("data/oui.txt"));
    return t;
}

const ValueTable& values() {
    static const ValueTable t = ValueTable::load(test::source_path("data/values.txt"));
    return t;
}

MatrixInputs matrix_inputs() {
    MatrixInputs in;
    in.oui = &oui();
    in.values = &values();
    return in;
}

const MatrixCell* cell(const std::vector<MatrixCell>& cells, std::string_view defense, std::string_view threat) {
    for (const auto& c : cells) {
        if (c.defense == defense && c.threat == threat) return &c;
    }
    return nullptr;
}

bool is_value(const std::optional<double>& v, double expected) { return v && *v == expected; }

// Smallest x with P(X <= x) > tail, and smallest x with P(X <= x) >= 1 - tail.
std::pair<std::size_t, std::size_t> binomial_interval(std::size_t n, double p, double tail) {
    double cdf = 0.0;
    std::optional<std::size_t> lo;
    for (std::size_t x = 0; x <= n; ++x) {
        const double log_pmf = std::lgamma(n + 1.0) - std::lgamma(x + 1.0) - std::lgamma(n - x + 1.0) +
                               x * std::log(p) + (n - x) * std::log1p(-p);
        cdf += std::exp(log_pmf);
        if (!lo && cdf > tail) lo = x;
        if (cdf >= 1.0 - tail) return {*lo, x};
    }
    return {*lo, n};
}

Outcome population_statistic() {
    Outcome o;
    const ScenarioConfig cfg = scenario("population");
    o.require(cfg.discoverable_fraction && *cfg.discoverable_fraction == kDiscoverableFraction, "fraction not 0.075");
    const TraceBundle b = run(cfg, default_seed(cfg));
    std::set<DeviceId> present;
    for (const auto& e : b.truth) {
        if (const auto* p = std::get_if<truth::Presence>(&e.payload)) present.insert(p->device);
    }
    o.require(present.size() == kPopulation, "coverage " + std::to_string(present.size()) + " of 1000");
    const std::size_t seen = observed_ids(inquiry_sightings(b.sightings)).size();
    const auto [lo, hi] = binomial_interval(kPopulation, kDiscoverableFraction, kBinomialTail);
    o.require(seen >= lo && seen <= hi, "outside interval");
    o.require(seen == kPinnedPopulationCount, "count drifted from pinned value");
    o.summary = "distinct ids " + std::to_string(seen) + ", 99% interval [" + std::to_string(lo) + ", " +
               std::to_string(hi) + "]";
    return o;
}

Outcome stealth_asymmetry() {
    Outcome o;
    const ScenarioConfig cfg = scenario("stealth");
    o.require(cfg.horizon == 10000, "horizon is not 10000");
    const DeviceId target = parse_device_id("00:1D:6E:40:00:01");
    const TraceBundle b = run(cfg, default_seed(cfg));
    std::size_t inquiry_hits = 0;
    std::size_t page_hits = 0;
    for (const auto& s : b.sightings) {
        if (s.observed_id != target) continue;
        (s.via == SightingSource::Inquiry ? inquiry_hits : page_hits) += 1;
    }
    const auto cells = score_run(b, "baseline", matrix_inputs());
    const MatrixCell* paging = cell(cells, "baseline", "location_paging");
    o.require(inquiry_hits == 0, std::to_string(inquiry_hits) + " inquiry sightings");
    o.require(paging && is_value(paging->recall, 1.0), "paging recall below 1");
    o.summary = "inquiry sightings " + std::to_string(inquiry_hits) + ", page sightings " + std::to_string(page_hits) +
               ", paging recall " + (paging ? format_metric(paging->recall) : "n/a");
    return o;
}

Outcome defense_matrix_columns() {
    Outcome o;
    const ScenarioConfig cfg = scenario("reference");
    const std::uint64_t seed = default_seed(cfg);
    const auto cells = defense_matrix(cfg, seed, parse_defense_list("all"), matrix_inputs());

    // Stealth: every inquiry-fed threat recovers nothing.
    for (Threat t : kAllThreats) {
        const MatrixCell* c = cell(cells, "stealth", to_string(t));
        o.require(c && (!c->recall || *c->recall == 0.0), "stealth " + std::string(to_string(t)) + " recall > 0");
    }

    // Renaming: id-equality linking at chance, paired paging unaffected.
    const MatrixCell* loc = cell(cells, "renaming", "location");
    const MatrixCell* paired = cell(cells, "renaming", "paired_paging");
    const bool at_chance = loc && loc->link_raw && loc->link_chance &&
                           std::abs(*loc->link_raw - *loc->link_chance) <= kLinkabilityTolerance;
    o.require(at_chance, "renaming linkability not within 0.05 of chance");
    o.require(paired && is_value(paired->recall, 1.0), "renaming paired paging below 1");

    // Knob: the discovered set shrinks strictly.
    const TraceBundle base = run(cfg, seed);
    const TraceBundle knob = run(apply_defense(cfg, Defense::Knob), seed);
    const auto base_ids = observed_ids(inquiry_sightings(base.sightings));
    const auto knob_ids = observed_ids(inquiry_sightings(knob.sightings));
    const bool subset = std::includes(base_ids.begin(), base_ids.end(), knob_ids.begin(), knob_ids.end());
    o.require(subset && knob_ids.size() < base_ids.size(), "knob discovered set not a strict subset");

    // Knob: an adversary whose scanners only reach 25 m sees the same world,
    // so every threat scores as it would without the knob.
    ScenarioConfig close = cfg;
    for (auto& s : close.scanners) s.range = kDefaultRangeMeters * kKnobFraction;
    const auto close_cells = score_run(run(close, seed), "knob", matrix_inputs());
    std::size_t compared = 0;
    for (const auto& c : close_cells) {
        const MatrixCell* k = cell(cells, "knob", c.threat);
        const bool same = k && k->precision == c.precision && k->recall == c.recall && k->linkability == c.linkability;
        o.require(same, "knob " + c.threat + " differs from the 25 m adversary");
        ++compared;
    }
    o.require(compared > 0, "no knob cells compared");

    // Knob at 1.0 changes nothing.
    ScenarioConfig unity = cfg;
    DevicePolicy p;
    p.knob.fraction = 1.0;
    for (auto& person : unity.people) person.policy = p;
    TraceBundle unity_run = run(unity, seed);
    unity_run.config_digest = base.config_digest;  // the documents differ, the runs must not
    o.require(serialize_trace(unity_run) == serialize_trace(base), "knob 1.0 changed the run");

    o.summary = "renaming raw " + (loc ? format_metric(loc->link_raw) : "n/a") + " vs chance " +
               (loc ? format_metric(loc->link_chance) : "n/a") + ", paired paging " +
               (paired ? format_metric(paired->recall) : "n/a") + ", knob ids " + std::to_string(knob_ids.size()) + "/" +
               std::to_string(base_ids.size());
    return o;
}

Outcome oracle_equivalences() {
    Outcome o;
    int mining_ok = 0;
    for (int seed = 0; seed < kOracleSeeds; ++seed) {
        const auto t = oracle::random_trace(static_cast<std::uint32_t>(seed));
        const auto& p = t.params;
        if (oracle::as_partition(mine_constellations(t.log, p)) ==
            oracle::clusters(t.log, p.window, p.min_cooccurrences, p.min_similarity)) {
            ++mining_ok;
        }
    }
    o.require(mining_ok == kOracleSeeds, "mining differs from oracle");

    int match_ok = 0;
    int match_total = 0;
    for (int seed = 0; seed < kOracleSeeds; ++seed) {
        const auto t = oracle::random_trace(static_cast<std::uint32_t>(seed));
        const std::uint64_t salt = mix(static_cast<std::uint64_t>(seed));
        const TraceStore store = ingest(t.log, salt);
        for (std::uint64_t v = 1; v <= 11; ++v) {
            std::vector<StoredSighting> expected;
            for (const auto& row : store.rows()) {
                if (row.digest.digest == mix(salt ^ v)) expected.push_back(row);
            }
            ++match_total;
            match_ok += match_candidate(DeviceId(v), store) == expected;
        }
    }
    o.require(match_ok == match_total, "match_candidate differs from linear scan");
    o.summary = "mining " + std::to_string(mining_ok) + "/" + std::to_string(kOracleSeeds) + ", matching " +
               std::to_string(match_ok) + "/" + std::to_string(match_total);
    return o;
}

Outcome transaction_scenario() {
    Outcome o;
    const ScenarioConfig cfg = scenario("transaction");
    const TraceBundle b = run(cfg, default_seed(cfg));
    std::vector<std::pair<Tick, DeviceId>> transfers;
    for (const auto& e : b.truth) {
        if (const auto* t = std::get_if<truth::Transfer>(&e.payload)) transfers.push_back({e.tick, t->device});
    }
    o.require(transfers.size() == 1, "scenario must script exactly one transfer");

    const auto log = inquiry_sightings(b.sightings);
    const ConstellationSet cs = mine_constellations(log, {60, 3, 0.5, 4});
    const auto events = detect_transactions(log, cs, {600, 2});
    const auto cells = score_run(b, "baseline", matrix_inputs());
    const MatrixCell* c = cell(cells, "baseline", "transaction");
    o.require(c && is_value(c->precision, 1.0) && is_value(c->recall, 1.0), "precision/recall not 1");
    o.require(events.size() == 1, std::to_string(events.size()) + " events");
    Tick error = -1;
    if (events.size() == 1 && transfers.size() == 1) {
        error = std::llabs(events[0].switch_tick - transfers[0].first);
        o.require(events[0].device == transfers[0].second, "wrong device");
        o.require(error <= kSwitchTolerance, "switch tick off by " + std::to_string(error));
    }
    o.summary = "P " + (c ? format_metric(c->precision) : "n/a") + " R " + (c ? format_metric(c->recall) : "n/a") +
               ", switch error " + std::to_string(error) + " ticks";
    return o;
}

Outcome breadcrumb_scenario() {
    Outcome o;
    const ScenarioConfig cfg = scenario("breadcrumb");
    const TraceBundle b = run(cfg, default_seed(cfg));
    const PosDatabase pos = PosDatabase::from_sales(b.truth);
    AttackInputs in;
    in.pos = &pos;
    in.incidents = incident_queries(b.truth, 300);
    const AttackOutputs out = run_attacks(b.sightings, std::nullopt, {Threat::Breadcrumb}, {}, in);
    const auto records = report_records(out);
    const json expected = json::parse(test::slurp(test::source_path("tests/fixtures/breadcrumb_expected.json")));
    json got;
    if (records.size() == 1 && records[0]["incidents"].size() == 1) {
        const json& inc = records[0]["incidents"][0];
        got = {{"incident", {{"scanner_id", inc["scanner_id"]}, {"tick", inc["tick"]}, {"window", inc["window"]}}},
               {"implicated", inc["implicated"]}};
    }
    o.require(got == expected, "report differs from fixture: " + got.dump());
    const Metrics m = evaluate_against_truth(out, b.sightings, b);
    const Score* s = m.find("breadcrumb");
    o.require(s && is_value(s->precision, 1.0) && is_value(s->recall, 1.0), "breadcrumb precision/recall not 1");
    o.summary = std::to_string(expected["implicated"].size()) + " implicated ids expected";
    return o;
}

Outcome csi_fixtures() {
    Outcome o;
    const ScenarioConfig cfg = scenario("csi_fixture");
    const TraceBundle b = run(cfg, default_seed(cfg));
    const std::uint64_t salt = 0x5EED5A17ull;
    const TraceStore store = ingest(b.sightings, salt);
    const auto taxi = appearance_features(store, hash_id(parse_device_id("00:0D:18:A0:00:01"), salt));
    const auto sweeper = appearance_features(store, hash_id(parse_device_id("00:1D:6E:B0:00:01"), salt));
    o.require(classify_role(taxi) == RoleLabel::FixedSiteFrequenter, "taxi not FixedSiteFrequenter");
    o.require(classify_role(sweeper) == RoleLabel::NocturnalRover, "sweeper not NocturnalRover");
    o.require(sweeper.night_fraction == 1.0, "sweeper seen outside 22:00-03:00");

    std::ostringstream s;
    store.write(s);
    const std::string text = s.str();
    std::size_t raw_hits = 0;
    for (DeviceId id : observed_ids(b.sightings)) {
        const std::string colon = format_device_id(id);
        std::string bare;
        for (char ch : colon) {
            if (ch != ':') bare += ch;
        }
        std::string lower = bare;
        for (auto& ch : lower) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
        for (const std::string& needle : {colon, bare, lower, std::to_string(id.value())}) {
            raw_hits += text.find(needle) != std::string::npos;
        }
    }
    o.require(raw_hits == 0, std::to_string(raw_hits) + " raw identifiers in the store");
    o.summary = "taxi " + std::string(to_string(classify_role(taxi))) + ", sweeper " +
               std::string(to_string(classify_role(sweeper))) + " (night fraction " +
               fmt("%.2f", sweeper.night_fraction) + "), raw ids in store " + std::to_string(raw_hits);
    return o;
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = test::slurp(e.path());
    }
    return out;
}

Outcome determinism() {
    Outcome o;
    const fs::path dir = test::scratch_dir("acceptance-determinism");
    {
        std::ofstream salt(dir / "salt");
        salt << "0x5EED\n";
    }
    const std::string s = (dir / "sim").string();
    const std::string store = (dir / "ingest" / "store.jsonl").string();
    const std::string salt = " --salt-file " + (dir / "salt").string();
    const std::vector<std::string> commands = {
        "simulate --scenario " + test::source_path("scenarios/reference.json").string() + " --out " + s,
        "attack --trace " + s + "/trace.jsonl --pos-db " + s + "/pos_db.txt --out " + (dir / "attack").string(),
        "defense-matrix --scenario " + test::source_path("scenarios/reference.json").string() + " --out " +
            (dir / "matrix").string(),
        "csi ingest --trace " + s + "/trace.jsonl" + salt + " --out " + (dir / "ingest").string(),
        "csi match --store " + store + salt + " --candidate 00:02:EE:A0:00:01 --out " + (dir / "match").string(),
        "csi presence --store " + store + " --scanner s-market --window 9900:10500 --out " + (dir / "presence").string(),
        "csi classify --store " + store + " --out " + (dir / "classify").string(),
    };
    std::map<std::string, std::string> first;
    for (int round = 0; round < 2; ++round) {
        for (const auto& c : commands) {
            const int code = test::run_cli(c);
            if (code != 0) o.require(false, "exit " + std::to_string(code) + ": " + c.substr(0, c.find(' ', 5)));
        }
        if (round == 0) first = snapshot(dir);
    }
    const auto second = snapshot(dir);
    o.require(first == second, "outputs changed between identical runs");
    o.require(mix(0) == kMixZero, "mixer first output differs from reference");
    std::size_t manifests = 0;
    for (const auto& [name, _] : second) manifests += name.size() >= 13 && name.ends_with("manifest.json");
    o.require(manifests == commands.size(), "missing manifests");
    char hex[32];
    std::snprintf(hex, sizeof hex, "%016llX", static_cast<unsigned long long>(mix(0)));
    o.summary = std::to_string(commands.size()) + " commands, " + std::to_string(second.size()) +
               " files byte-identical, mix(0)=0x" + hex;
    return o;
}

Outcome patch_accounting() {
    Outcome o;
    int ok_seeds = 0;
    std::size_t total_hits = 0;
    for (int seed = 0; seed < kOracleSeeds; ++seed) {
        Rng rng(static_cast<std::uint64_t>(seed));
        std::vector<DeviceRuntime> world;
        const std::size_t n = 2 + rng.below(12);
        auto pos = [&] { return Vec2{rng.uniform01() * 300.0, rng.uniform01() * 300.0}; };
        const VisibilityMode modes[] = {VisibilityMode::Off, VisibilityMode::Stealth, VisibilityMode::Discoverable};
        for (std::size_t i = 0; i < n; ++i) {
            world.push_back(test::radio(0x00AA00000000ull + i + 1, pos(), modes[rng.below(3)], 30.0 + rng.uniform01() * 100.0));
        }
        std::vector<DeviceRuntime> scanners;
        for (std::uint64_t k = 0; k < 3; ++k) scanners.push_back(test::radio(0x020000000000ull + k + 1, pos()));

        std::map<DeviceId, std::uint64_t> hits;
        std::map<DeviceId, std::vector<GuestEntry>> book;
        Rng miss_rng(mix(static_cast<std::uint64_t>(seed)));
        InquiryOptions opts{0.2, &miss_rng};
        Tick tick = 0;
        for (int step = 0; step < 200; ++step) {
            tick += static_cast<Tick>(rng.below(3));
            switch (rng.below(5)) {
                case 0:
                case 1: {
                    const DeviceRuntime& s = scanners[rng.below(scanners.size())];
                    for (const auto& r : inquiry(s, world, tick, opts)) {
                        ++hits[r.responder_id];
                        book[r.responder_id].push_back({s.wire_id, tick});
                    }
                    break;
                }
                case 2:
                    page(scanners[rng.below(scanners.size())], world[rng.below(n)].wire_id, world, tick);
                    break;
                case 3: {
                    DeviceRuntime& d = world[rng.below(n)];
                    d = set_mode(d, modes[rng.below(3)]);
                    break;
                }
                default:
                    world[rng.below(n)].position = pos();
            }
        }
        bool ok = true;
        for (const auto& d : world) {
            ok &= read_hit_counter(d) == hits[d.wire_id];
            ok &= read_guest_book(d) == book[d.wire_id];
            total_hits += read_hit_counter(d);
        }
        ok_seeds += ok;
    }
    o.require(ok_seeds == kOracleSeeds, "counter or guest book differs from replay");

    // The same bookkeeping holds end to end: every inquiry sighting in a run is
    // one guest book entry on the device behind it.
    const ScenarioConfig cfg = scenario("reference");
    const TraceBundle b = run(cfg, default_seed(cfg));
    std::map<std::tuple<std::string, Tick, DeviceId>, DeviceId> behind;
    for (const auto& e : b.truth) {
        if (const auto* p = std::get_if<truth::Presence>(&e.payload)) behind[{p->scanner, e.tick, p->wire}] = p->device;
    }
    std::map<std::string, DeviceId> address;
    for (const auto& s : b.scanners) address[s.id] = s.address;
    std::map<DeviceId, std::vector<GuestEntry>> replay;
    for (const auto& s : b.sightings) {
        if (s.via == SightingSource::Inquiry) replay[behind.at({s.scanner_id, s.tick, s.observed_id})].push_back({address.at(s.scanner_id), s.tick});
    }
    bool run_ok = true;
    for (const auto& e : b.truth) {
        if (const auto* p = std::get_if<truth::PatchState>(&e.payload)) {
            run_ok &= p->hits == replay[p->device].size() && p->guest_book == replay[p->device];
        }
    }
    o.require(run_ok, "reference run patch state differs from its sightings");
    o.summary = std::to_string(ok_seeds) + "/" + std::to_string(kOracleSeeds) + " random sequences exact (" +
               std::to_string(total_hits) + " hits), reference run " + (run_ok ? "exact" : "differs");
    return o;
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"1 population statistic", population_statistic},
        {"2 stealth asymmetry", stealth_asymmetry},
        {"3 defense matrix", defense_matrix_columns},
        {"4 oracle equivalences", oracle_equivalences},
        {"5 transaction scenario", transaction_scenario},
        {"6 breadcrumb scenario", breadcrumb_scenario},
        {"7 csi fixtures", csi_fixtures},
        {"8 determinism", determinism},
        {"9 patch accounting", patch_accounting},
    };
    int failed = 0;
    for (const auto& [name, check] : criteria) {
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o.require(false, std::string("exception: ") + e.what());
        }
        std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.text().c_str());
        std::fflush(stdout);
        failed += !o.pass;
    }
    return failed;
}
