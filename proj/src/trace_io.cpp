#include "btpriv/trace_io.hpp"

#include <fstream>
#include <sstream>

#include "btpriv/error.hpp"

namespace btpriv {

using nlohmann::json;

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

DeviceId id_field(const json& j, const char* key) { return parse_device_id(j.at(key).get<std::string>()); }

}  // namespace

std::string_view event_name(const TruthPayload& payload) {
    return std::visit(overloaded{
                          [](const truth::PointOfSale&) { return std::string_view{"point_of_sale"}; },
                          [](const truth::Transfer&) { return std::string_view{"transfer"}; },
                          [](const truth::Discard&) { return std::string_view{"discard"}; },
                          [](const truth::Pickup&) { return std::string_view{"pickup"}; },
                          [](const truth::Incident&) { return std::string_view{"incident"}; },
                          [](const truth::Carry&) { return std::string_view{"carry"}; },
                          [](const truth::Presence&) { return std::string_view{"presence"}; },
                          [](const truth::PageAttempt&) { return std::string_view{"page"}; },
                          [](const truth::PatchState&) { return std::string_view{"patch_state"}; },
                      },
                      payload);
}

json to_json(const Sighting& s) {
    return {{"kind", "sighting"},
            {"tick", s.tick},
            {"scanner_id", s.scanner_id},
            {"id", format_device_id(s.observed_id)},
            {"class", format_device_class(s.observed_class)},
            {"name", s.observed_name.str()},
            {"via", s.via == SightingSource::Inquiry ? "inquiry" : "page"}};
}

Sighting sighting_from_json(const json& j) {
    Sighting s;
    s.tick = j.at("tick").get<Tick>();
    s.scanner_id = j.at("scanner_id").get<std::string>();
    s.observed_id = id_field(j, "id");
    s.observed_class = parse_device_class(j.value("class", std::string{"0x000000"}));
    s.observed_name = FriendlyName{j.value("name", std::string{})};
    const std::string via = j.value("via", std::string{"inquiry"});
    if (via == "inquiry") {
        s.via = SightingSource::Inquiry;
    } else if (via == "page") {
        s.via = SightingSource::Page;
    } else {
        throw ParseError("sighting: unknown via '" + via + "'");
    }
    return s;
}

json to_json(const TruthEvent& e) {
    json j = {{"kind", "truth"}, {"tick", e.tick}, {"event", std::string(event_name(e.payload))}};
    std::visit(overloaded{
                   [&](const truth::PointOfSale& p) {
                       j["person"] = p.person;
                       j["person_name"] = p.person_name;
                       j["device"] = format_device_id(p.device);
                       j["seller"] = p.seller;
                   },
                   [&](const truth::Transfer& p) {
                       j["device"] = format_device_id(p.device);
                       j["from"] = p.from_person;
                       j["to"] = p.to_person;
                   },
                   [&](const truth::Discard& p) {
                       j["device"] = format_device_id(p.device);
                       j["site"] = p.site;
                       j["by"] = p.by_person;
                   },
                   [&](const truth::Pickup& p) {
                       j["device"] = format_device_id(p.device);
                       j["site"] = p.site;
                       j["by"] = p.by_person;
                   },
                   [&](const truth::Incident& p) {
                       j["site"] = p.site;
                       j["scanner_id"] = p.scanner ? json(*p.scanner) : json(nullptr);
                   },
                   [&](const truth::Carry& p) {
                       j["device"] = format_device_id(p.device);
                       j["person"] = p.person;
                       j["class"] = format_device_class(p.cls);
                   },
                   [&](const truth::Presence& p) {
                       j["scanner_id"] = p.scanner;
                       j["device"] = format_device_id(p.device);
                       j["wire"] = format_device_id(p.wire);
                       j["holder"] = p.holder;
                   },
                   [&](const truth::PageAttempt& p) {
                       j["from"] = format_device_id(p.from);
                       j["to"] = format_device_id(p.to);
                       j["target_wire"] = format_device_id(p.target_wire);
                       j["in_range"] = p.in_range;
                       j["reached"] = p.reached;
                   },
                   [&](const truth::PatchState& p) {
                       j["device"] = format_device_id(p.device);
                       j["hits"] = p.hits;
                       json book = json::array();
                       for (const auto& g : p.guest_book) book.push_back({format_device_id(g.inquirer), g.tick});
                       j["guest_book"] = std::move(book);
                   },
               },
               e.payload);
    return j;
}

TruthEvent truth_from_json(const json& j) {
    TruthEvent e;
    e.tick = j.at("tick").get<Tick>();
    const std::string ev = j.at("event").get<std::string>();
    if (ev == "point_of_sale") {
        e.payload = truth::PointOfSale{j.at("person").get<std::string>(), j.value("person_name", std::string{}),
                                       id_field(j, "device"), j.at("seller").get<std::string>()};
    } else if (ev == "transfer") {
        e.payload = truth::Transfer{id_field(j, "device"), j.at("from").get<std::string>(), j.at("to").get<std::string>()};
    } else if (ev == "discard") {
        e.payload = truth::Discard{id_field(j, "device"), j.at("site").get<std::string>(), j.at("by").get<std::string>()};
    } else if (ev == "pickup") {
        e.payload = truth::Pickup{id_field(j, "device"), j.at("site").get<std::string>(), j.at("by").get<std::string>()};
    } else if (ev == "incident") {
        truth::Incident inc{j.at("site").get<std::string>(), std::nullopt};
        if (j.contains("scanner_id") && !j["scanner_id"].is_null()) inc.scanner = j["scanner_id"].get<std::string>();
        e.payload = std::move(inc);
    } else if (ev == "carry") {
        e.payload = truth::Carry{id_field(j, "device"), j.at("person").get<std::string>(),
                                 parse_device_class(j.value("class", std::string{"0x000000"}))};
    } else if (ev == "presence") {
        e.payload = truth::Presence{j.at("scanner_id").get<std::string>(), id_field(j, "device"), id_field(j, "wire"),
                                    j.value("holder", std::string{})};
    } else if (ev == "page") {
        e.payload = truth::PageAttempt{id_field(j, "from"), id_field(j, "to"), id_field(j, "target_wire"),
                                       j.at("in_range").get<bool>(), j.at("reached").get<bool>()};
    } else if (ev == "patch_state") {
        truth::PatchState ps{id_field(j, "device"), j.at("hits").get<std::uint64_t>(), {}};
        for (const auto& g : j.at("guest_book")) {
            ps.guest_book.push_back({parse_device_id(g.at(0).get<std::string>()), g.at(1).get<Tick>()});
        }
        e.payload = std::move(ps);
    } else {
        throw ParseError("truth record: unknown event '" + ev + "'");
    }
    return e;
}

void write_trace(std::ostream& out, const TraceBundle& bundle) {
    if (bundle.config_digest) {
        json header = {{"kind", "header"}, {"config_digest", *bundle.config_digest}};
        if (bundle.seed) header["seed"] = *bundle.seed;
        json scanners = json::array();
        for (const auto& s : bundle.scanners) {
            json targets = json::array();
            for (DeviceId t : s.page_targets) targets.push_back(format_device_id(t));
            scanners.push_back(
                {{"id", s.id}, {"site", s.site}, {"address", format_device_id(s.address)}, {"page_targets", targets}});
        }
        header["scanners"] = std::move(scanners);
        out << header.dump() << '\n';
    }
    // Interleave by tick so the file reads chronologically; sightings first
    // within a tick.
    std::size_t si = 0;
    std::size_t ti = 0;
    while (si < bundle.sightings.size() || ti < bundle.truth.size()) {
        const bool take_sighting =
            ti == bundle.truth.size() ||
            (si < bundle.sightings.size() && bundle.sightings[si].tick <= bundle.truth[ti].tick);
        if (take_sighting) {
            out << to_json(bundle.sightings[si++]).dump() << '\n';
        } else {
            out << to_json(bundle.truth[ti++]).dump() << '\n';
        }
    }
}

std::string serialize_trace(const TraceBundle& bundle) {
    std::ostringstream out;
    write_trace(out, bundle);
    return out.str();
}

TraceBundle read_trace(std::istream& in) {
    TraceBundle bundle;
    std::string line;
    for (int lineno = 1; std::getline(in, line); ++lineno) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const json j = json::parse(line);
            const std::string kind = j.at("kind").get<std::string>();
            if (kind == "sighting") {
                bundle.sightings.push_back(sighting_from_json(j));
            } else if (kind == "truth") {
                bundle.truth.push_back(truth_from_json(j));
            } else if (kind == "header") {
                bundle.config_digest = j.at("config_digest").get<std::string>();
                if (j.contains("seed")) bundle.seed = j["seed"].get<std::uint64_t>();
                for (const auto& s : j.value("scanners", json::array())) {
                    ScannerInfo info{s.at("id").get<std::string>(), s.at("site").get<std::string>(),
                                     id_field(s, "address"), {}};
                    for (const auto& t : s.value("page_targets", json::array())) {
                        info.page_targets.push_back(parse_device_id(t.get<std::string>()));
                    }
                    bundle.scanners.push_back(std::move(info));
                }
            }
        } catch (const json::exception& ex) {
            throw ParseError("trace line " + std::to_string(lineno) + ": " + ex.what());
        } catch (const Error& ex) {
            throw ParseError("trace line " + std::to_string(lineno) + ": " + ex.what());
        }
    }
    auto by_tick = [](const auto& a, const auto& b) { return a.tick < b.tick; };
    std::stable_sort(bundle.sightings.begin(), bundle.sightings.end(), by_tick);
    std::stable_sort(bundle.truth.begin(), bundle.truth.end(), by_tick);
    return bundle;
}

TraceBundle load_trace(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open trace " + path.string());
    return read_trace(in);
}

json record_schema() {
    return {
        {"header", {{"kind", "header"}, {"config_digest", "16 hex chars"}, {"seed", "uint64"},
                    {"scanners", "[{id, site, address, page_targets}]"}}},
        {"sighting", {{"kind", "sighting"}, {"tick", "int"}, {"scanner_id", "string"}, {"id", "XX:XX:XX:XX:XX:XX"},
                      {"class", "0xXXXXXX"}, {"name", "string"}, {"via", "inquiry|page"}}},
        {"truth",
         {{"kind", "truth"},
          {"tick", "int"},
          {"event", "point_of_sale|transfer|discard|pickup|incident|carry|presence|page|patch_state"},
          {"point_of_sale", "person, person_name, device, seller"},
          {"transfer", "device, from, to"},
          {"discard", "device, site, by"},
          {"pickup", "device, site, by"},
          {"incident", "site, scanner_id|null"},
          {"carry", "device, person, class"},
          {"presence", "scanner_id, device, wire, holder"},
          {"page", "from, to, target_wire, in_range, reached"},
          {"patch_state", "device, hits, guest_book: [[inquirer, tick]]"}}},
        {"report", {{"kind", "report"}, {"threat", "string"}, {"...", "threat-specific payload"}}},
        {"hashed-sighting", {{"kind", "hashed-sighting"}, {"digest", "16 hex chars"}, {"scanner_id", "string"},
                             {"tick", "int"}, {"class", "0xXXXXXX"}, {"name", "string"}}},
    };
}

}  // namespace btpriv
