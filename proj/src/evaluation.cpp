#include "btpriv/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <ostream>
#include <sstream>
#include <variant>

#include "btpriv/error.hpp"

namespace btpriv {

using nlohmann::json;

namespace {

constexpr std::array<std::string_view, 6> kThreatNames = {"association",   "location",    "preference",
                                                          "constellation", "transaction", "breadcrumb"};

using Point = std::pair<std::string, Tick>;  // (scanner, tick)

struct GoldIndex {
    std::map<DeviceId, std::set<Point>> presence;
    std::map<std::tuple<std::string, Tick, DeviceId>, DeviceId> wire_to_device;
    std::map<DeviceId, DeviceClass> carried_class;
    std::map<DeviceId, std::string> latest_sale;
    std::map<DeviceId, std::string> first_sale;
    std::vector<std::pair<DeviceId, Tick>> transfers;
    std::set<std::pair<DeviceId, DeviceId>> co_carried;

    explicit GoldIndex(std::span<const TruthEvent> truth) {
        // Holding intervals [start, end) per device, built from membership events.
        struct Interval {
            std::string person;
            Tick start;
            Tick end;
        };
        std::map<DeviceId, std::vector<Interval>> holding;
        constexpr Tick kOpen = std::numeric_limits<Tick>::max();
        auto close = [&](DeviceId d, Tick at) {
            auto& v = holding[d];
            if (!v.empty() && v.back().end == kOpen) v.back().end = at;
        };
        for (const auto& e : truth) {
            std::visit(
                [&](const auto& p) {
                    using T = std::decay_t<decltype(p)>;
                    if constexpr (std::is_same_v<T, truth::Presence>) {
                        presence[p.device].insert({p.scanner, e.tick});
                        wire_to_device[{p.scanner, e.tick, p.wire}] = p.device;
                    } else if constexpr (std::is_same_v<T, truth::Carry>) {
                        carried_class[p.device] = p.cls;
                        holding[p.device].push_back({p.person, e.tick, kOpen});
                    } else if constexpr (std::is_same_v<T, truth::PointOfSale>) {
                        const std::string who = p.person_name.empty() ? p.person : p.person_name;
                        latest_sale[p.device] = who;
                        first_sale.try_emplace(p.device, who);
                    } else if constexpr (std::is_same_v<T, truth::Transfer>) {
                        transfers.push_back({p.device, e.tick});
                        close(p.device, e.tick + 1);
                        holding[p.device].push_back({p.to_person, e.tick + 1, kOpen});
                    } else if constexpr (std::is_same_v<T, truth::Discard>) {
                        close(p.device, e.tick + 1);
                    } else if constexpr (std::is_same_v<T, truth::Pickup>) {
                        holding[p.device].push_back({p.by_person, e.tick + 1, kOpen});
                    }
                },
                e.payload);
        }
        std::map<std::string, std::vector<std::pair<DeviceId, Interval>>> by_person;
        for (const auto& [d, intervals] : holding) {
            for (const auto& iv : intervals) by_person[iv.person].push_back({d, iv});
        }
        for (const auto& [person, items] : by_person) {
            for (std::size_t a = 0; a < items.size(); ++a) {
                for (std::size_t b = a + 1; b < items.size(); ++b) {
                    const auto& [da, ia] = items[a];
                    const auto& [db, ib] = items[b];
                    if (da == db) continue;
                    if (std::max(ia.start, ib.start) < std::min(ia.end, ib.end)) {
                        co_carried.insert({std::min(da, db), std::max(da, db)});
                    }
                }
            }
        }
    }
};

Score score_itineraries(const std::vector<Itinerary>& itineraries, const std::map<DeviceId, std::set<Point>>& gold) {
    std::size_t predicted = 0;
    std::size_t hit_predicted = 0;
    std::size_t gold_points = 0;
    std::size_t hit_gold = 0;
    std::map<DeviceId, const Itinerary*> by_target;
    for (const auto& it : itineraries) by_target[it.target] = &it;
    for (const auto& it : itineraries) {
        auto g = gold.find(it.target);
        for (const auto& v : it.visits) {
            ++predicted;
            if (g != gold.end() && g->second.contains({v.scanner_id, v.first}) && g->second.contains({v.scanner_id, v.last})) {
                ++hit_predicted;
            }
        }
    }
    for (const auto& [device, points] : gold) {
        gold_points += points.size();
        auto it = by_target.find(device);
        if (it == by_target.end()) continue;
        for (const auto& [scanner, tick] : points) {
            for (const auto& v : it->second->visits) {
                if (v.scanner_id == scanner && v.first <= tick && tick <= v.last) {
                    ++hit_gold;
                    break;
                }
            }
        }
    }
    return make_score(hit_predicted, predicted, hit_gold, gold_points);
}

template <class T>
Score score_sets(const std::set<T>& predicted, const std::set<T>& gold) {
    std::size_t hits = 0;
    for (const auto& p : predicted) hits += gold.contains(p) ? 1 : 0;
    return make_score(hits, predicted.size(), hits, gold.size());
}

json id_json(DeviceId id) { return format_device_id(id); }

json itinerary_json(const Itinerary& it) {
    json visits = json::array();
    for (const auto& v : it.visits) visits.push_back({{"scanner_id", v.scanner_id}, {"first", v.first}, {"last", v.last}, {"sightings", v.sightings}});
    return {{"target", id_json(it.target)}, {"visits", visits}};
}

}  // namespace

std::string_view to_string(Threat threat) { return kThreatNames[static_cast<std::size_t>(threat)]; }

Threat parse_threat(std::string_view name) {
    for (std::size_t i = 0; i < kThreatNames.size(); ++i) {
        if (kThreatNames[i] == name) return static_cast<Threat>(i);
    }
    throw ArgumentError("unknown threat '" + std::string(name) + "'");
}

std::set<Threat> parse_threat_list(std::string_view list) {
    if (list == "all") return {kAllThreats.begin(), kAllThreats.end()};
    std::set<Threat> out;
    std::stringstream ss{std::string(list)};
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.insert(parse_threat(item));
    }
    if (out.empty()) throw ArgumentError("empty threat selection");
    return out;
}

std::vector<IncidentQuery> incident_queries(std::span<const TruthEvent> truth, Tick window) {
    std::vector<IncidentQuery> out;
    for (const auto& e : truth) {
        if (const auto* inc = std::get_if<truth::Incident>(&e.payload); inc && inc->scanner) {
            out.push_back({*inc->scanner, e.tick, window});
        }
    }
    return out;
}

AttackOutputs run_attacks(std::span<const Sighting> sightings, const std::optional<std::string>& config_digest,
                          const std::set<Threat>& threats, const AttackParams& params, const AttackInputs& inputs) {
    AttackOutputs out;
    out.config_digest = config_digest;
    out.selected = threats;
    out.params = params;

    const std::vector<Sighting> inquiry = inquiry_sightings(sightings);
    const std::vector<Sighting> paged = page_sightings(sightings);
    const bool have_pos = inputs.pos != nullptr && !inputs.pos->empty();
    out.had_pos = have_pos;
    const OuiTable empty_oui;
    const ValueTable empty_values;
    const OuiTable& oui = inputs.oui ? *inputs.oui : empty_oui;
    const ValueTable& values = inputs.values ? *inputs.values : empty_values;

    auto selected = [&](Threat t) { return threats.contains(t); };
    const bool need_clusters = selected(Threat::Constellation) || selected(Threat::Transaction) ||
                               (selected(Threat::Preference) && !have_pos);
    if (need_clusters) out.constellations = mine_constellations(inquiry, params.mining);

    if (selected(Threat::Association)) {
        out.association_precondition_met = have_pos;
        if (have_pos) out.association = associate_identities(inquiry, *inputs.pos);
    }

    if (selected(Threat::Location)) {
        if (have_pos) {
            const auto ids = inputs.pos->devices();
            out.location_targets.assign(ids.begin(), ids.end());
        } else {
            const auto ids = observed_ids(inquiry);
            out.location_targets.assign(ids.begin(), ids.end());
        }
        for (DeviceId target : out.location_targets) {
            auto it = track_locations(inquiry, target, params.merge_gap);
            if (!it.visits.empty()) out.itineraries.push_back(std::move(it));
        }
        std::set<DeviceId> page_targets;
        for (const auto& s : inputs.scanners) page_targets.insert(s.page_targets.begin(), s.page_targets.end());
        for (DeviceId target : page_targets) {
            auto it = track_locations(paged, target, params.merge_gap);
            if (!it.visits.empty()) out.paged_itineraries.push_back(std::move(it));
        }
        out.links = link_epochs(inquiry, params.epoch_length, params.matcher);
    }

    if (selected(Threat::Preference)) {
        if (have_pos) {
            std::map<std::string, std::set<DeviceId>> owned;
            for (DeviceId d : inputs.pos->devices()) owned[*inputs.pos->latest_purchaser(d)].insert(d);
            for (const auto& [person, ids] : owned) {
                auto profile = profile_preferences(inquiry, ids, oui, values, person);
                if (!profile.devices.empty()) out.profiles.push_back(std::move(profile));
            }
        } else {
            std::set<DeviceId> clustered;
            for (std::size_t c = 0; c < out.constellations.clusters.size(); ++c) {
                const auto& members = out.constellations.clusters[c].members;
                clustered.insert(members.begin(), members.end());
                out.profiles.push_back(profile_preferences(inquiry, {members.begin(), members.end()}, oui, values,
                                                           "cluster-" + std::to_string(c)));
            }
            for (DeviceId d : observed_ids(inquiry)) {
                if (!clustered.contains(d)) out.profiles.push_back(profile_preferences(inquiry, {d}, oui, values, format_device_id(d)));
            }
        }
    }

    if (selected(Threat::Transaction)) {
        out.transactions = detect_transactions(inquiry, out.constellations, params.transactions);
    }

    if (selected(Threat::Breadcrumb)) {
        for (const auto& q : inputs.incidents) {
            out.breadcrumbs.push_back({q, implicate_breadcrumbs(inquiry, q, have_pos ? inputs.pos : nullptr)});
        }
    }
    return out;
}

std::vector<json> report_records(const AttackOutputs& o) {
    std::vector<json> records;
    for (Threat t : kAllThreats) {
        if (!o.selected.contains(t)) continue;
        json r = {{"kind", "report"}, {"threat", std::string(to_string(t))}};
        switch (t) {
            case Threat::Association: {
                r["precondition_met"] = o.association_precondition_met;
                if (!o.association_precondition_met) {
                    r["note"] = "precondition unmet: no point-of-sale database linking ids to identities";
                }
                json links = json::array();
                for (const auto& [id, person] : o.association) links.push_back({{"id", id_json(id)}, {"person", person}});
                r["links"] = std::move(links);
                break;
            }
            case Threat::Location: {
                json its = json::array();
                for (const auto& it : o.itineraries) its.push_back(itinerary_json(it));
                json paged = json::array();
                for (const auto& it : o.paged_itineraries) paged.push_back(itinerary_json(it));
                r["targets"] = o.location_targets.size();
                r["itineraries"] = std::move(its);
                r["paged_itineraries"] = std::move(paged);
                r["merge_gap"] = o.params.merge_gap;
                r["epoch_length"] = o.params.epoch_length;
                r["epoch_links"] = o.links.size();
                break;
            }
            case Threat::Preference: {
                json profiles = json::array();
                for (const auto& p : o.profiles) {
                    json classes = json::object();
                    for (const auto& [major, n] : p.class_histogram) classes[std::string(to_string(major))] = n;
                    json devices = json::array();
                    for (const auto& d : p.devices) {
                        devices.push_back({{"id", id_json(d.id)}, {"class", std::string(to_string(d.major))},
                                           {"manufacturer", d.manufacturer}, {"value", d.value}});
                    }
                    profiles.push_back({{"subject", p.subject}, {"classes", classes},
                                        {"manufacturers", p.manufacturer_histogram}, {"total_value", p.total_value},
                                        {"devices", devices}});
                }
                r["profiles"] = std::move(profiles);
                break;
            }
            case Threat::Constellation: {
                json clusters = json::array();
                for (const auto& c : o.constellations.clusters) {
                    json members = json::array();
                    for (DeviceId id : c.members) members.push_back(id_json(id));
                    clusters.push_back({{"members", members}, {"group", c.group}});
                }
                r["clusters"] = std::move(clusters);
                r["window"] = o.constellations.params.window;
                r["min_cooccurrences"] = o.constellations.params.min_cooccurrences;
                r["min_similarity"] = o.constellations.params.min_similarity;
                break;
            }
            case Threat::Transaction: {
                json events = json::array();
                for (const auto& e : o.transactions) {
                    events.push_back({{"device", id_json(e.device)}, {"from_cluster", e.from_cluster},
                                      {"to_cluster", e.to_cluster}, {"switch_tick", e.switch_tick}});
                }
                r["events"] = std::move(events);
                r["window"] = o.params.transactions.window;
                r["confirmations"] = o.params.transactions.confirmations;
                break;
            }
            case Threat::Breadcrumb: {
                json incidents = json::array();
                for (const auto& [q, implicated] : o.breadcrumbs) {
                    json list = json::array();
                    for (const auto& imp : implicated) {
                        list.push_back({{"id", id_json(imp.device)}, {"person", imp.person ? json(*imp.person) : json(nullptr)}});
                    }
                    incidents.push_back({{"scanner_id", q.scanner_id}, {"tick", q.tick}, {"window", q.window}, {"implicated", list}});
                }
                r["incidents"] = std::move(incidents);
                break;
            }
        }
        records.push_back(std::move(r));
    }
    return records;
}

Score make_score(std::size_t hit_predicted, std::size_t predicted, std::size_t hit_gold, std::size_t gold) {
    Score s;
    s.predicted = predicted;
    s.gold = gold;
    if (predicted > 0) s.precision = static_cast<double>(hit_predicted) / static_cast<double>(predicted);
    if (gold > 0) s.recall = static_cast<double>(hit_gold) / static_cast<double>(gold);
    return s;
}

const Score* Metrics::find(std::string_view row) const {
    for (const auto& [name, score] : rows) {
        if (name == row) return &score;
    }
    return nullptr;
}

Metrics evaluate_against_truth(const AttackOutputs& o, std::span<const Sighting> sightings, const TraceBundle& source) {
    if (o.config_digest && source.config_digest && *o.config_digest != *source.config_digest) {
        throw RefusalError("attack outputs come from run " + *o.config_digest + ", truth from run " + *source.config_digest);
    }
    const GoldIndex gold(source.truth);
    Metrics m;

    if (o.selected.contains(Threat::Association)) {
        std::set<std::pair<DeviceId, std::string>> predicted(o.association.begin(), o.association.end());
        std::set<std::pair<DeviceId, std::string>> expected(gold.latest_sale.begin(), gold.latest_sale.end());
        m.rows.push_back({"association", score_sets(predicted, expected)});
    }

    if (o.selected.contains(Threat::Location)) {
        std::map<DeviceId, std::set<Point>> target_gold;
        for (DeviceId t : o.location_targets) {
            if (auto it = gold.presence.find(t); it != gold.presence.end()) target_gold[t] = it->second;
        }
        m.rows.push_back({"location", score_itineraries(o.itineraries, target_gold)});

        std::map<DeviceId, std::set<Point>> paging_gold;
        bool any_paging = false;
        for (const auto& s : source.scanners) {
            for (DeviceId t : s.page_targets) {
                any_paging = true;
                auto it = gold.presence.find(t);
                if (it == gold.presence.end()) continue;
                for (const auto& point : it->second) {
                    if (point.first == s.id) paging_gold[t].insert(point);
                }
            }
        }
        if (any_paging) m.rows.push_back({"location_paging", score_itineraries(o.paged_itineraries, paging_gold)});

        // Linkability: map each inquiry sighting back to its device.
        const Tick len = o.params.epoch_length;
        std::map<std::uint64_t, std::set<DeviceId>> ids_in_epoch;
        std::map<std::uint64_t, std::map<DeviceId, std::pair<DeviceId, DeviceId>>> wires;  // epoch -> device -> (first, last)
        for (const auto& s : sightings) {
            if (s.via != SightingSource::Inquiry) continue;
            const auto epoch = static_cast<std::uint64_t>(s.tick / len);
            ids_in_epoch[epoch].insert(s.observed_id);
            auto it = gold.wire_to_device.find({s.scanner_id, s.tick, s.observed_id});
            if (it == gold.wire_to_device.end()) continue;
            auto [slot, inserted] = wires[epoch].try_emplace(it->second, s.observed_id, s.observed_id);
            if (!inserted) slot->second.second = s.observed_id;
        }
        std::set<std::tuple<std::uint64_t, DeviceId, DeviceId>> linked;
        for (const auto& l : o.links) linked.insert({l.epoch, l.from, l.to});
        LinkabilityScore ls;
        double chance_sum = 0.0;
        std::size_t correct = 0;
        for (const auto& [epoch, devices] : wires) {
            auto next = wires.find(epoch + 1);
            if (next == wires.end()) continue;
            const double width = static_cast<double>(std::max(ids_in_epoch[epoch].size(), ids_in_epoch[epoch + 1].size()));
            for (const auto& [device, span] : devices) {
                auto later = next->second.find(device);
                if (later == next->second.end()) continue;
                ++ls.pairs;
                chance_sum += 1.0 / width;
                if (linked.contains({epoch, span.second, later->second.first})) ++correct;
            }
        }
        if (ls.pairs > 0) {
            ls.raw = static_cast<double>(correct) / static_cast<double>(ls.pairs);
            ls.chance = chance_sum / static_cast<double>(ls.pairs);
            ls.score = ls.chance < 1.0 ? std::clamp((ls.raw - ls.chance) / (1.0 - ls.chance), 0.0, 1.0) : 0.0;
            m.linkability = ls;
        }
    }

    if (o.selected.contains(Threat::Preference)) {
        // Gold covers the devices the adversary set out to profile: the
        // ledger's devices when it had one, otherwise every carried device.
        std::set<std::pair<DeviceId, MajorClass>> expected;
        for (const auto& [d, cls] : gold.carried_class) {
            if (!o.had_pos || gold.latest_sale.contains(d)) expected.insert({d, major_class_of(cls)});
        }
        std::set<std::pair<DeviceId, MajorClass>> predicted;
        for (const auto& p : o.profiles) {
            for (const auto& d : p.devices) predicted.insert({d.id, d.major});
        }
        m.rows.push_back({"preference", score_sets(predicted, expected)});
    }

    if (o.selected.contains(Threat::Constellation)) {
        std::set<std::pair<DeviceId, DeviceId>> predicted;
        for (const auto& c : o.constellations.clusters) {
            for (std::size_t a = 0; a < c.members.size(); ++a) {
                for (std::size_t b = a + 1; b < c.members.size(); ++b) predicted.insert({c.members[a], c.members[b]});
            }
        }
        m.rows.push_back({"constellation", score_sets(predicted, gold.co_carried)});
    }

    if (o.selected.contains(Threat::Transaction)) {
        std::vector<bool> used(gold.transfers.size(), false);
        std::size_t hits = 0;
        for (const auto& e : o.transactions) {
            std::optional<std::size_t> best;
            for (std::size_t g = 0; g < gold.transfers.size(); ++g) {
                const auto& [device, tick] = gold.transfers[g];
                if (used[g] || device != e.device) continue;
                const Tick err = std::abs(e.switch_tick - tick);
                if (err > o.params.transactions.window) continue;
                if (!best || err < std::abs(e.switch_tick - gold.transfers[*best].second)) best = g;
            }
            if (best) {
                used[*best] = true;
                ++hits;
            }
        }
        m.rows.push_back({"transaction", make_score(hits, o.transactions.size(), hits, gold.transfers.size())});
    }

    if (o.selected.contains(Threat::Breadcrumb)) {
        std::set<std::tuple<std::size_t, std::string, DeviceId>> predicted;
        std::set<std::tuple<std::size_t, std::string, DeviceId>> expected;
        for (std::size_t i = 0; i < o.breadcrumbs.size(); ++i) {
            const auto& [q, implicated] = o.breadcrumbs[i];
            for (const auto& imp : implicated) {
                if (imp.person) predicted.insert({i, *imp.person, imp.device});
            }
            for (const auto& [device, points] : gold.presence) {
                auto buyer = gold.first_sale.find(device);
                if (buyer == gold.first_sale.end()) continue;
                for (const auto& [scanner, tick] : points) {
                    if (scanner == q.scanner_id && tick >= q.tick - q.window && tick <= q.tick + q.window) {
                        expected.insert({i, buyer->second, device});
                        break;
                    }
                }
            }
        }
        m.rows.push_back({"breadcrumb", score_sets(predicted, expected)});
    }
    return m;
}

std::string format_metric(const std::optional<double>& value) {
    if (!value) return "";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", *value);
    return buf;
}

void write_metrics_csv(std::ostream& out, const Metrics& metrics) {
    out << "threat,precision,recall,linkability\n";
    for (const auto& [name, score] : metrics.rows) {
        std::optional<double> link;
        if (name == "location" && metrics.linkability) link = metrics.linkability->score;
        out << name << ',' << format_metric(score.precision) << ',' << format_metric(score.recall) << ','
            << format_metric(link) << '\n';
    }
}

}  // namespace btpriv
