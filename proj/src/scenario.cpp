#include "btpriv/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <map>
#include <set>

#include "btpriv/error.hpp"

namespace btpriv {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
    throw ValidationError(path + ": " + what);
}

void check_keys(const json& obj, const std::string& path, std::initializer_list<std::string_view> allowed) {
    if (!obj.is_object()) fail(path, "expected an object");
    for (const auto& [key, value] : obj.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) fail(path, "unknown key '" + key + "'");
    }
}

const json& require(const json& obj, const std::string& path, const char* key) {
    if (!obj.contains(key)) fail(path, std::string("missing required key '") + key + "'");
    return obj.at(key);
}

std::string get_string(const json& obj, const std::string& path, const char* key, std::optional<std::string> fallback = {}) {
    if (!obj.contains(key)) {
        if (fallback) return *fallback;
        fail(path, std::string("missing required key '") + key + "'");
    }
    const json& v = obj.at(key);
    if (!v.is_string()) fail(path + "." + key, "expected a string");
    return v.get<std::string>();
}

std::int64_t get_int(const json& obj, const std::string& path, const char* key, std::optional<std::int64_t> fallback = {}) {
    if (!obj.contains(key)) {
        if (fallback) return *fallback;
        fail(path, std::string("missing required key '") + key + "'");
    }
    const json& v = obj.at(key);
    if (!v.is_number_integer()) fail(path + "." + key, "expected an integer");
    return v.get<std::int64_t>();
}

double get_number(const json& obj, const std::string& path, const char* key, std::optional<double> fallback = {}) {
    if (!obj.contains(key)) {
        if (fallback) return *fallback;
        fail(path, std::string("missing required key '") + key + "'");
    }
    const json& v = obj.at(key);
    if (!v.is_number()) fail(path + "." + key, "expected a number");
    return v.get<double>();
}

const json& get_array(const json& obj, const std::string& path, const char* key) {
    static const json empty = json::array();
    if (!obj.contains(key)) return empty;
    const json& v = obj.at(key);
    if (!v.is_array()) fail(path + "." + key, "expected an array");
    return v;
}

double fraction_in_unit(double v, const std::string& path) {
    if (!(v >= 0.0 && v <= 1.0)) fail(path, "must lie in [0,1]");
    return v;
}

DeviceId id_at(const json& obj, const std::string& path, const char* key) {
    try {
        return parse_device_id(get_string(obj, path, key));
    } catch (const ParseError& e) {
        fail(path + "." + key, e.what());
    }
}

DeviceClass class_at(const json& obj, const std::string& path, const char* key) {
    const json& v = require(obj, path, key);
    try {
        if (v.is_number_integer()) return DeviceClass{v.get<std::uint32_t>()};
        if (v.is_string()) return parse_device_class(v.get<std::string>());
    } catch (const Error& e) {
        fail(path + "." + key, e.what());
    }
    fail(path + "." + key, "expected a hex string or integer");
}

std::vector<Waypoint> parse_itinerary(const json& arr, const std::string& path) {
    std::vector<Waypoint> out;
    for (std::size_t i = 0; i < arr.size(); ++i) {
        const std::string p = path + "[" + std::to_string(i) + "]";
        check_keys(arr[i], p, {"tick", "site"});
        out.push_back({get_int(arr[i], p, "tick"), get_string(arr[i], p, "site")});
    }
    return out;
}

std::string hex_oui(std::uint32_t oui) {
    char buf[7];
    std::snprintf(buf, sizeof buf, "%06X", static_cast<unsigned>(oui));
    return buf;
}

json itinerary_json(const std::vector<Waypoint>& itinerary) {
    json arr = json::array();
    for (const auto& w : itinerary) arr.push_back({{"tick", w.tick}, {"site", w.site}});
    return arr;
}

std::string name_mode_string(NameMode m) { return m == NameMode::StableId ? "stable_id" : "friendly_name_only"; }

EventKind parse_event_kind(const std::string& text, const std::string& path) {
    if (text == "point_of_sale") return EventKind::PointOfSale;
    if (text == "transfer") return EventKind::Transfer;
    if (text == "discard") return EventKind::Discard;
    if (text == "pickup") return EventKind::Pickup;
    if (text == "incident") return EventKind::Incident;
    fail(path, "unknown event kind '" + text + "'");
}

DeviceSpec parse_device(const json& j, const std::string& path) {
    check_keys(j, path, {"address", "class", "name", "mode", "services", "value", "policy"});
    DeviceSpec d;
    d.desc.id = id_at(j, path, "address");
    d.desc.cls = class_at(j, path, "class");
    try {
        d.desc.name = FriendlyName{get_string(j, path, "name", std::string{})};
    } catch (const ValidationError& e) {
        fail(path + ".name", e.what());
    }
    if (j.contains("mode")) {
        try {
            d.desc.mode = parse_visibility_mode(get_string(j, path, "mode"));
        } catch (const ParseError& e) {
            fail(path + ".mode", e.what());
        }
        d.mode_declared = true;
    }
    for (const auto& s : get_array(j, path, "services")) {
        if (!s.is_string()) fail(path + ".services", "expected strings");
        d.desc.services.push_back(s.get<std::string>());
    }
    if (j.contains("value")) d.desc.value_hint = get_int(j, path, "value");
    if (j.contains("policy")) d.policy = parse_policy(j.at("policy"), path + ".policy");
    try {
        validate(d.desc);
    } catch (const ValidationError& e) {
        fail(path, e.what());
    }
    return d;
}

json device_json(const DeviceSpec& d) {
    json j = {{"address", format_device_id(d.desc.id)},
              {"class", format_device_class(d.desc.cls)},
              {"name", d.desc.name.str()},
              {"services", d.desc.services}};
    if (d.mode_declared) j["mode"] = std::string(to_string(d.desc.mode));
    if (d.desc.value_hint) j["value"] = *d.desc.value_hint;
    if (d.policy) j["policy"] = to_json(*d.policy);
    return j;
}

void validate_itinerary(const std::vector<Waypoint>& itinerary, const std::set<std::string>& sites, const std::string& path) {
    for (std::size_t i = 0; i < itinerary.size(); ++i) {
        const std::string p = path + "[" + std::to_string(i) + "]";
        if (!sites.contains(itinerary[i].site)) fail(p + ".site", "undefined site '" + itinerary[i].site + "'");
        if (itinerary[i].tick < 0) fail(p + ".tick", "must be >= 0");
        if (i > 0 && itinerary[i].tick < itinerary[i - 1].tick) fail(p + ".tick", "waypoints must be in tick order");
    }
}

void validate_policy_at(const DevicePolicy& policy, const std::string& path) {
    try {
        validate(policy);
    } catch (const ValidationError& e) {
        fail(path, e.what());
    }
}

}  // namespace

std::string_view to_string(EventKind kind) {
    switch (kind) {
        case EventKind::PointOfSale: return "point_of_sale";
        case EventKind::Transfer: return "transfer";
        case EventKind::Discard: return "discard";
        case EventKind::Pickup: return "pickup";
        case EventKind::Incident: return "incident";
    }
    return "incident";
}

DevicePolicy parse_policy(const json& j, const std::string& path) {
    check_keys(j, path, {"visibility", "renaming", "knob", "names"});
    DevicePolicy policy;
    const json& vis = get_array(j, path, "visibility");
    for (std::size_t i = 0; i < vis.size(); ++i) {
        const std::string p = path + ".visibility[" + std::to_string(i) + "]";
        check_keys(vis[i], p, {"from", "to", "mode"});
        VisibilityWindow w;
        w.begin = get_int(vis[i], p, "from");
        w.end = get_int(vis[i], p, "to");
        try {
            w.mode = parse_visibility_mode(get_string(vis[i], p, "mode"));
        } catch (const ParseError& e) {
            fail(p + ".mode", e.what());
        }
        policy.visibility.push_back(w);
    }
    if (j.contains("renaming")) {
        const std::string p = path + ".renaming";
        const json& r = j.at("renaming");
        check_keys(r, p, {"seed", "epoch_length", "rotate_name"});
        RenamingState state;
        const json& seed = require(r, p, "seed");
        if (!seed.is_number_unsigned() && !seed.is_number_integer()) fail(p + ".seed", "expected an integer");
        state.seed = seed.get<std::uint64_t>();
        state.epoch_length = get_int(r, p, "epoch_length", kDefaultEpochLength);
        if (r.contains("rotate_name")) {
            if (!r.at("rotate_name").is_boolean()) fail(p + ".rotate_name", "expected a boolean");
            state.rotate_name = r.at("rotate_name").get<bool>();
        }
        policy.renaming = state;
    }
    if (j.contains("knob")) {
        const std::string p = path + ".knob";
        check_keys(j.at("knob"), p, {"fraction"});
        policy.knob.fraction = fraction_in_unit(get_number(j.at("knob"), p, "fraction"), p + ".fraction");
    }
    if (j.contains("names")) {
        const std::string p = path + ".names";
        const json& n = j.at("names");
        check_keys(n, p, {"mode", "rename_period"});
        const std::string mode = get_string(n, p, "mode", std::string{"stable_id"});
        if (mode == "stable_id") {
            policy.names.mode = NameMode::StableId;
        } else if (mode == "friendly_name_only") {
            policy.names.mode = NameMode::FriendlyNameOnly;
        } else {
            fail(p + ".mode", "unknown name mode '" + mode + "'");
        }
        policy.names.rename_period = get_int(n, p, "rename_period", 0);
    }
    validate_policy_at(policy, path);
    return policy;
}

json to_json(const DevicePolicy& policy) {
    json vis = json::array();
    for (const auto& w : policy.visibility) {
        vis.push_back({{"from", w.begin}, {"to", w.end}, {"mode", std::string(to_string(w.mode))}});
    }
    json j = {{"visibility", vis},
              {"knob", {{"fraction", policy.knob.fraction}}},
              {"names", {{"mode", name_mode_string(policy.names.mode)}, {"rename_period", policy.names.rename_period}}}};
    if (policy.renaming) {
        j["renaming"] = {{"seed", policy.renaming->seed},
                         {"epoch_length", policy.renaming->epoch_length},
                         {"rotate_name", policy.renaming->rotate_name}};
    }
    return j;
}

ScenarioConfig parse_scenario(const json& doc) {
    check_keys(doc, "scenario",
               {"horizon", "seed", "base_range", "miss_probability", "discoverable_fraction", "sites", "edges",
                "scanners", "people", "crowds", "events", "pairings"});
    ScenarioConfig cfg;
    cfg.horizon = get_int(doc, "scenario", "horizon");
    if (doc.contains("seed")) {
        const json& seed = doc.at("seed");
        if (!seed.is_number_integer()) fail("scenario.seed", "expected an integer");
        cfg.seed = seed.get<std::uint64_t>();
    }
    cfg.base_range = get_number(doc, "scenario", "base_range", kDefaultRangeMeters);
    cfg.miss_probability = fraction_in_unit(get_number(doc, "scenario", "miss_probability", 0.0), "scenario.miss_probability");
    if (doc.contains("discoverable_fraction")) {
        cfg.discoverable_fraction = fraction_in_unit(get_number(doc, "scenario", "discoverable_fraction"),
                                                     "scenario.discoverable_fraction");
    }

    const json& sites = get_array(doc, "scenario", "sites");
    for (std::size_t i = 0; i < sites.size(); ++i) {
        const std::string p = "sites[" + std::to_string(i) + "]";
        check_keys(sites[i], p, {"id", "x", "y", "kind"});
        cfg.sites.push_back({get_string(sites[i], p, "id"),
                             {get_number(sites[i], p, "x", 0.0), get_number(sites[i], p, "y", 0.0)},
                             get_string(sites[i], p, "kind", std::string{})});
    }
    const json& edges = get_array(doc, "scenario", "edges");
    for (std::size_t i = 0; i < edges.size(); ++i) {
        const std::string p = "edges[" + std::to_string(i) + "]";
        check_keys(edges[i], p, {"from", "to", "travel"});
        cfg.edges.push_back({get_string(edges[i], p, "from"), get_string(edges[i], p, "to"), get_int(edges[i], p, "travel")});
    }
    const json& scanners = get_array(doc, "scenario", "scanners");
    for (std::size_t i = 0; i < scanners.size(); ++i) {
        const std::string p = "scanners[" + std::to_string(i) + "]";
        const json& s = scanners[i];
        check_keys(s, p, {"id", "site", "period", "offset", "range", "address", "page_targets"});
        ScannerSpec spec;
        spec.id = get_string(s, p, "id");
        spec.site = get_string(s, p, "site");
        spec.period = get_int(s, p, "period", kDefaultScanPeriod);
        spec.offset = get_int(s, p, "offset", 0);
        spec.range = get_number(s, p, "range", kDefaultRangeMeters);
        if (s.contains("address")) spec.address = id_at(s, p, "address");
        const json& targets = get_array(s, p, "page_targets");
        for (std::size_t t = 0; t < targets.size(); ++t) {
            const std::string tp = p + ".page_targets[" + std::to_string(t) + "]";
            if (!targets[t].is_string()) fail(tp, "expected a device id string");
            try {
                spec.page_targets.push_back(parse_device_id(targets[t].get<std::string>()));
            } catch (const ParseError& e) {
                fail(tp, e.what());
            }
        }
        cfg.scanners.push_back(std::move(spec));
    }
    const json& people = get_array(doc, "scenario", "people");
    for (std::size_t i = 0; i < people.size(); ++i) {
        const std::string p = "people[" + std::to_string(i) + "]";
        const json& pj = people[i];
        check_keys(pj, p, {"id", "name", "role", "itinerary", "devices", "policy"});
        PersonSpec person;
        person.id = get_string(pj, p, "id");
        person.name = get_string(pj, p, "name", person.id);
        person.role = get_string(pj, p, "role", std::string{});
        person.itinerary = parse_itinerary(get_array(pj, p, "itinerary"), p + ".itinerary");
        const json& devices = get_array(pj, p, "devices");
        for (std::size_t d = 0; d < devices.size(); ++d) {
            person.devices.push_back(parse_device(devices[d], p + ".devices[" + std::to_string(d) + "]"));
        }
        if (pj.contains("policy")) person.policy = parse_policy(pj.at("policy"), p + ".policy");
        cfg.people.push_back(std::move(person));
    }
    const json& crowds = get_array(doc, "scenario", "crowds");
    for (std::size_t i = 0; i < crowds.size(); ++i) {
        const std::string p = "crowds[" + std::to_string(i) + "]";
        const json& c = crowds[i];
        check_keys(c, p, {"prefix", "count", "oui", "class", "device_name", "role", "itinerary", "stagger",
                          "roam_sites", "dwell", "policy"});
        CrowdSpec crowd;
        crowd.prefix = get_string(c, p, "prefix");
        crowd.count = get_int(c, p, "count");
        const std::string oui = get_string(c, p, "oui");
        try {
            std::size_t used = 0;
            const unsigned long v = std::stoul(oui, &used, 16);
            if (used != oui.size() || oui.size() != 6) throw std::invalid_argument("oui");
            crowd.oui = static_cast<std::uint32_t>(v);
        } catch (const std::exception&) {
            fail(p + ".oui", "expected 6 hex digits");
        }
        crowd.cls = class_at(c, p, "class");
        crowd.device_name = get_string(c, p, "device_name", std::string{});
        crowd.role = get_string(c, p, "role", std::string{});
        crowd.itinerary = parse_itinerary(get_array(c, p, "itinerary"), p + ".itinerary");
        crowd.stagger = get_int(c, p, "stagger", 0);
        for (const auto& s : get_array(c, p, "roam_sites")) {
            if (!s.is_string()) fail(p + ".roam_sites", "expected site ids");
            crowd.roam_sites.push_back(s.get<std::string>());
        }
        crowd.dwell = get_int(c, p, "dwell", 600);
        if (c.contains("policy")) crowd.policy = parse_policy(c.at("policy"), p + ".policy");
        cfg.crowds.push_back(std::move(crowd));
    }
    const json& events = get_array(doc, "scenario", "events");
    for (std::size_t i = 0; i < events.size(); ++i) {
        const std::string p = "events[" + std::to_string(i) + "]";
        const json& e = events[i];
        check_keys(e, p, {"tick", "kind", "device", "person", "to", "seller", "site"});
        EventSpec ev;
        ev.tick = get_int(e, p, "tick");
        ev.kind = parse_event_kind(get_string(e, p, "kind"), p + ".kind");
        if (ev.kind != EventKind::Incident) ev.device = id_at(e, p, "device");
        switch (ev.kind) {
            case EventKind::PointOfSale:
                ev.person = get_string(e, p, "person");
                ev.seller = get_string(e, p, "seller");
                break;
            case EventKind::Transfer:
                ev.person = get_string(e, p, "person");
                ev.to_person = get_string(e, p, "to");
                break;
            case EventKind::Discard:
            case EventKind::Pickup:
                ev.person = get_string(e, p, "person");
                ev.site = get_string(e, p, "site");
                break;
            case EventKind::Incident: ev.site = get_string(e, p, "site"); break;
        }
        cfg.events.push_back(std::move(ev));
    }
    const json& pairings = get_array(doc, "scenario", "pairings");
    for (std::size_t i = 0; i < pairings.size(); ++i) {
        const std::string p = "pairings[" + std::to_string(i) + "]";
        check_keys(pairings[i], p, {"a", "b", "probe_period"});
        cfg.pairings.push_back({id_at(pairings[i], p, "a"), id_at(pairings[i], p, "b"),
                                get_int(pairings[i], p, "probe_period", kDefaultProbePeriod)});
    }
    validate(cfg);
    return cfg;
}

ScenarioConfig load_scenario(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open scenario " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
    return parse_scenario(doc);
}

void validate(const ScenarioConfig& cfg) {
    if (cfg.horizon < 0) fail("scenario.horizon", "must be >= 0");
    if (!(cfg.base_range > 0.0)) fail("scenario.base_range", "must be > 0");
    fraction_in_unit(cfg.miss_probability, "scenario.miss_probability");
    if (cfg.discoverable_fraction) fraction_in_unit(*cfg.discoverable_fraction, "scenario.discoverable_fraction");

    std::set<std::string> site_ids;
    for (std::size_t i = 0; i < cfg.sites.size(); ++i) {
        if (!site_ids.insert(cfg.sites[i].id).second) fail("sites[" + std::to_string(i) + "].id", "duplicate site '" + cfg.sites[i].id + "'");
    }
    for (std::size_t i = 0; i < cfg.edges.size(); ++i) {
        const std::string p = "edges[" + std::to_string(i) + "]";
        if (!site_ids.contains(cfg.edges[i].from)) fail(p + ".from", "undefined site '" + cfg.edges[i].from + "'");
        if (!site_ids.contains(cfg.edges[i].to)) fail(p + ".to", "undefined site '" + cfg.edges[i].to + "'");
        if (cfg.edges[i].travel < 1) fail(p + ".travel", "must be >= 1");
    }

    std::set<DeviceId> addresses;
    std::set<std::string> scanner_ids;
    for (std::size_t i = 0; i < cfg.scanners.size(); ++i) {
        const std::string p = "scanners[" + std::to_string(i) + "]";
        const auto& s = cfg.scanners[i];
        if (!scanner_ids.insert(s.id).second) fail(p + ".id", "duplicate scanner '" + s.id + "'");
        if (!site_ids.contains(s.site)) fail(p + ".site", "undefined site '" + s.site + "'");
        if (s.period < 1) fail(p + ".period", "must be >= 1");
        if (s.offset < 0) fail(p + ".offset", "must be >= 0");
        if (!(s.range >= 0.0)) fail(p + ".range", "must be >= 0");
        if (s.address && !addresses.insert(*s.address).second) fail(p + ".address", "duplicate address");
    }

    std::set<std::string> person_ids;
    std::map<DeviceId, std::string> owner;  // device -> person id at load time
    for (std::size_t i = 0; i < cfg.people.size(); ++i) {
        const std::string p = "people[" + std::to_string(i) + "]";
        const auto& person = cfg.people[i];
        if (person.id.empty()) fail(p + ".id", "must not be empty");
        if (!person_ids.insert(person.id).second) fail(p + ".id", "duplicate person '" + person.id + "'");
        if (person.itinerary.empty()) fail(p + ".itinerary", "needs at least one waypoint");
        validate_itinerary(person.itinerary, site_ids, p + ".itinerary");
        if (person.policy) validate_policy_at(*person.policy, p + ".policy");
        for (std::size_t d = 0; d < person.devices.size(); ++d) {
            const auto& dev = person.devices[d];
            const std::string dp = p + ".devices[" + std::to_string(d) + "]";
            if (!addresses.insert(dev.desc.id).second) fail(dp + ".address", "duplicate address " + format_device_id(dev.desc.id));
            if (dev.policy) validate_policy_at(*dev.policy, dp + ".policy");
            owner[dev.desc.id] = person.id;
        }
    }
    for (std::size_t i = 0; i < cfg.crowds.size(); ++i) {
        const std::string p = "crowds[" + std::to_string(i) + "]";
        const auto& c = cfg.crowds[i];
        if (c.count < 0 || c.count > 0xFFFFFE) fail(p + ".count", "must lie in [0, 16777214]");
        if (c.roam_sites.empty() && c.itinerary.empty()) fail(p, "needs an itinerary or roam_sites");
        if (c.dwell < 1) fail(p + ".dwell", "must be >= 1");
        if (c.stagger < 0) fail(p + ".stagger", "must be >= 0");
        validate_itinerary(c.itinerary, site_ids, p + ".itinerary");
        for (const auto& s : c.roam_sites) {
            if (!site_ids.contains(s)) fail(p + ".roam_sites", "undefined site '" + s + "'");
        }
        if (c.policy) validate_policy_at(*c.policy, p + ".policy");
        for (std::int64_t k = 0; k < c.count; ++k) {
            const DeviceId id{(std::uint64_t{c.oui} << 24) | static_cast<std::uint64_t>(k + 1)};
            if (!addresses.insert(id).second) fail(p, "generated address collides: " + format_device_id(id));
            const std::string pid = c.prefix + "-" + std::to_string(k);
            if (!person_ids.insert(pid).second) fail(p + ".prefix", "generated person id collides: " + pid);
        }
    }

    // Replay ownership so every event is checked against the state it will see.
    std::vector<std::size_t> order(cfg.events.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return cfg.events[a].tick < cfg.events[b].tick; });
    std::map<DeviceId, std::string> dropped;  // device -> site
    for (std::size_t idx : order) {
        const auto& ev = cfg.events[idx];
        const std::string p = "events[" + std::to_string(idx) + "]";
        if (ev.tick < 0 || ev.tick >= cfg.horizon) fail(p + ".tick", "must lie in [0, horizon)");
        auto need_person = [&](const std::string& id, const char* key) {
            if (!person_ids.contains(id)) fail(p + "." + key, "undefined person '" + id + "'");
        };
        auto need_holder = [&]() {
            auto it = owner.find(ev.device);
            if (it == owner.end()) {
                if (!addresses.contains(ev.device)) fail(p + ".device", "undefined device " + format_device_id(ev.device));
                fail(p + ".device", "device " + format_device_id(ev.device) + " is not carried by anyone at tick " + std::to_string(ev.tick));
            }
            if (it->second != ev.person) {
                fail(p + ".person", "device " + format_device_id(ev.device) + " is carried by '" + it->second + "', not '" + ev.person + "'");
            }
        };
        switch (ev.kind) {
            case EventKind::PointOfSale:
                need_person(ev.person, "person");
                need_holder();
                break;
            case EventKind::Transfer:
                need_person(ev.person, "person");
                need_person(ev.to_person, "to");
                if (ev.person == ev.to_person) fail(p + ".to", "transfer to the same person");
                need_holder();
                owner[ev.device] = ev.to_person;
                break;
            case EventKind::Discard:
                need_person(ev.person, "person");
                if (!site_ids.contains(ev.site)) fail(p + ".site", "undefined site '" + ev.site + "'");
                need_holder();
                owner.erase(ev.device);
                dropped[ev.device] = ev.site;
                break;
            case EventKind::Pickup: {
                need_person(ev.person, "person");
                if (!site_ids.contains(ev.site)) fail(p + ".site", "undefined site '" + ev.site + "'");
                auto it = dropped.find(ev.device);
                if (it == dropped.end() || it->second != ev.site) {
                    fail(p + ".device", "device " + format_device_id(ev.device) + " is not lying at site '" + ev.site + "'");
                }
                dropped.erase(it);
                owner[ev.device] = ev.person;
                break;
            }
            case EventKind::Incident:
                if (!site_ids.contains(ev.site)) fail(p + ".site", "undefined site '" + ev.site + "'");
                break;
        }
    }

    std::set<std::pair<DeviceId, DeviceId>> pairs;
    for (std::size_t i = 0; i < cfg.pairings.size(); ++i) {
        const std::string p = "pairings[" + std::to_string(i) + "]";
        const auto& pr = cfg.pairings[i];
        bool has_a = false;
        bool has_b = false;
        for (const auto& person : cfg.people) {
            for (const auto& d : person.devices) {
                has_a |= d.desc.id == pr.a;
                has_b |= d.desc.id == pr.b;
            }
        }
        if (!has_a) fail(p + ".a", "undefined device " + format_device_id(pr.a));
        if (!has_b) fail(p + ".b", "undefined device " + format_device_id(pr.b));
        if (pr.a == pr.b) fail(p + ".b", "a device cannot pair with itself");
        if (pr.probe_period < 1) fail(p + ".probe_period", "must be >= 1");
        if (!pairs.insert({pr.a, pr.b}).second) fail(p, "duplicate pairing");
    }
}

json to_json(const ScenarioConfig& cfg) {
    json doc = {{"horizon", cfg.horizon}, {"base_range", cfg.base_range}, {"miss_probability", cfg.miss_probability}};
    if (cfg.seed) doc["seed"] = *cfg.seed;
    if (cfg.discoverable_fraction) doc["discoverable_fraction"] = *cfg.discoverable_fraction;
    json sites = json::array();
    for (const auto& s : cfg.sites) sites.push_back({{"id", s.id}, {"x", s.position.x}, {"y", s.position.y}, {"kind", s.kind}});
    doc["sites"] = std::move(sites);
    json edges = json::array();
    for (const auto& e : cfg.edges) edges.push_back({{"from", e.from}, {"to", e.to}, {"travel", e.travel}});
    doc["edges"] = std::move(edges);
    json scanners = json::array();
    for (const auto& s : cfg.scanners) {
        json targets = json::array();
        for (DeviceId t : s.page_targets) targets.push_back(format_device_id(t));
        json sj = {{"id", s.id}, {"site", s.site}, {"period", s.period}, {"offset", s.offset}, {"range", s.range},
                   {"page_targets", targets}};
        if (s.address) sj["address"] = format_device_id(*s.address);
        scanners.push_back(std::move(sj));
    }
    doc["scanners"] = std::move(scanners);
    json people = json::array();
    for (const auto& p : cfg.people) {
        json devices = json::array();
        for (const auto& d : p.devices) devices.push_back(device_json(d));
        json pj = {{"id", p.id}, {"name", p.name}, {"role", p.role}, {"itinerary", itinerary_json(p.itinerary)},
                   {"devices", devices}};
        if (p.policy) pj["policy"] = to_json(*p.policy);
        people.push_back(std::move(pj));
    }
    doc["people"] = std::move(people);
    json crowds = json::array();
    for (const auto& c : cfg.crowds) {
        json cj = {{"prefix", c.prefix}, {"count", c.count}, {"oui", hex_oui(c.oui)}, {"class", format_device_class(c.cls)},
                   {"device_name", c.device_name}, {"role", c.role}, {"itinerary", itinerary_json(c.itinerary)},
                   {"stagger", c.stagger}, {"roam_sites", c.roam_sites}, {"dwell", c.dwell}};
        if (c.policy) cj["policy"] = to_json(*c.policy);
        crowds.push_back(std::move(cj));
    }
    doc["crowds"] = std::move(crowds);
    json events = json::array();
    for (const auto& e : cfg.events) {
        json ej = {{"tick", e.tick}, {"kind", std::string(to_string(e.kind))}};
        if (e.kind != EventKind::Incident) {
            ej["device"] = format_device_id(e.device);
            ej["person"] = e.person;
        }
        if (e.kind == EventKind::PointOfSale) ej["seller"] = e.seller;
        if (e.kind == EventKind::Transfer) ej["to"] = e.to_person;
        if (e.kind == EventKind::Discard || e.kind == EventKind::Pickup || e.kind == EventKind::Incident) ej["site"] = e.site;
        events.push_back(std::move(ej));
    }
    doc["events"] = std::move(events);
    json pairings = json::array();
    for (const auto& p : cfg.pairings) {
        pairings.push_back({{"a", format_device_id(p.a)}, {"b", format_device_id(p.b)}, {"probe_period", p.probe_period}});
    }
    doc["pairings"] = std::move(pairings);
    return doc;
}

std::string config_digest(const ScenarioConfig& config, std::uint64_t seed) {
    const std::string canonical = to_json(config).dump() + "\nseed=" + std::to_string(seed);
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : canonical) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::uint64_t default_seed(const ScenarioConfig& config) noexcept { return config.seed.value_or(1); }

}  // namespace btpriv
