#include "btpriv/simulation.hpp"

#include <algorithm>
#include <limits>
#include <queue>

#include "btpriv/error.hpp"

namespace btpriv {

namespace {

constexpr Tick kBeforeStart = std::numeric_limits<Tick>::min();

// Scanners without an explicit address get 02:00:00:00:00:NN.
DeviceId default_scanner_address(std::size_t index) {
    return DeviceId{(std::uint64_t{0x02} << 40) | static_cast<std::uint64_t>(index + 1)};
}

}  // namespace

World::World(const ScenarioConfig& config, std::uint64_t seed) : config_(config), rng_(seed) {
    sites_ = config_.sites;
    adjacency_.resize(sites_.size());
    for (const auto& e : config_.edges) {
        const std::size_t a = site_index(e.from);
        const std::size_t b = site_index(e.to);
        adjacency_[a].push_back({b, e.travel});
        adjacency_[b].push_back({a, e.travel});
    }

    // Expand explicit people and crowds into one person list.
    std::vector<PersonSpec> specs = config_.people;
    for (const auto& crowd : config_.crowds) {
        for (std::int64_t k = 0; k < crowd.count; ++k) {
            PersonSpec p;
            p.id = crowd.prefix + "-" + std::to_string(k);
            p.name = p.id;
            p.role = crowd.role;
            if (!crowd.roam_sites.empty()) {
                for (Tick t = 0; t < std::max<Tick>(config_.horizon, 1); t += crowd.dwell) {
                    p.itinerary.push_back({t, crowd.roam_sites[rng_.below(crowd.roam_sites.size())]});
                }
            } else {
                for (const auto& w : crowd.itinerary) p.itinerary.push_back({w.tick + k * crowd.stagger, w.site});
            }
            DeviceSpec d;
            d.desc.id = DeviceId{(std::uint64_t{crowd.oui} << 24) | static_cast<std::uint64_t>(k + 1)};
            d.desc.cls = crowd.cls;
            d.desc.name = FriendlyName{crowd.device_name};
            p.policy = crowd.policy;
            // A shared crowd seed would give every member the same pseudonyms.
            if (p.policy && p.policy->renaming) p.policy->renaming->seed = mix(p.policy->renaming->seed ^ d.desc.id.value());
            p.devices.push_back(std::move(d));
            specs.push_back(std::move(p));
        }
    }

    std::vector<std::optional<VisibilityMode>> person_mode(specs.size());
    if (config_.discoverable_fraction) {
        for (std::size_t i = 0; i < specs.size(); ++i) {
            person_mode[i] = rng_.uniform01() < *config_.discoverable_fraction ? VisibilityMode::Discoverable
                                                                               : VisibilityMode::Stealth;
        }
    }

    for (std::size_t i = 0; i < specs.size(); ++i) {
        const auto& spec = specs[i];
        PersonState ps;
        ps.id = spec.id;
        ps.name = spec.name;
        ps.role = spec.role;
        ps.timeline = build_timeline(spec.itinerary);
        ps.site = ps.timeline.front().second;
        people_.push_back(std::move(ps));
        for (const auto& d : spec.devices) {
            DeviceDescriptor desc = d.desc;
            if (!d.mode_declared && person_mode[i]) desc.mode = *person_mode[i];
            base_modes_.push_back(desc.mode);
            policies_.push_back(d.policy ? *d.policy : spec.policy.value_or(DevicePolicy{}));
            devices_.push_back(DeviceRuntime::from_descriptor(std::move(desc), sites_[people_.back().site].position,
                                                              config_.base_range));
            holders_.push_back({i, std::nullopt});
        }
    }
    for (std::size_t d = 0; d < devices_.size(); ++d) name_seeds_.push_back(rng_.next());

    for (std::size_t i = 0; i < config_.scanners.size(); ++i) {
        const auto& spec = config_.scanners[i];
        ScannerState s;
        s.spec = spec;
        s.site = site_index(spec.site);
        DeviceDescriptor desc;
        desc.id = spec.address.value_or(default_scanner_address(i));
        desc.name = FriendlyName{spec.id};
        s.radio = DeviceRuntime::from_descriptor(std::move(desc), sites_[s.site].position, spec.range);
        scanners_.push_back(std::move(s));
    }

    for (const auto& p : config_.pairings) {
        Pairing pr{device_index(p.a), device_index(p.b), p.probe_period};
        const auto& peer_policy = policies_[pr.b];
        const std::uint64_t peer_seed = peer_policy.renaming ? peer_policy.renaming->seed : 0;
        devices_[pr.a].pairings[p.b] = PairingRecord{p.b, peer_seed, 0};
        pairings_.push_back(pr);
    }

    events_ = config_.events;
    std::stable_sort(events_.begin(), events_.end(), [](const auto& a, const auto& b) { return a.tick < b.tick; });
}

std::size_t World::site_index(const std::string& id) const {
    for (std::size_t i = 0; i < sites_.size(); ++i) {
        if (sites_[i].id == id) return i;
    }
    throw ValidationError("undefined site '" + id + "'");
}

std::size_t World::person_index(const std::string& id) const {
    for (std::size_t i = 0; i < people_.size(); ++i) {
        if (people_[i].id == id) return i;
    }
    throw ValidationError("undefined person '" + id + "'");
}

std::size_t World::device_index(DeviceId id) const {
    for (std::size_t i = 0; i < devices_.size(); ++i) {
        if (devices_[i].desc.id == id) return i;
    }
    throw ValidationError("undefined device " + format_device_id(id));
}

Tick World::edge_travel(std::size_t a, std::size_t b) const {
    Tick best = std::numeric_limits<Tick>::max();
    for (const auto& [to, travel] : adjacency_[a]) {
        if (to == b) best = std::min(best, travel);
    }
    return best;
}

std::vector<std::size_t> World::shortest_path(std::size_t from, std::size_t to) const {
    constexpr Tick kInf = std::numeric_limits<Tick>::max();
    std::vector<Tick> dist(sites_.size(), kInf);
    std::vector<std::size_t> prev(sites_.size(), sites_.size());
    using Item = std::pair<Tick, std::size_t>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
    dist[from] = 0;
    queue.push({0, from});
    while (!queue.empty()) {
        auto [d, u] = queue.top();
        queue.pop();
        if (d > dist[u]) continue;
        for (const auto& [v, travel] : adjacency_[u]) {
            const Tick nd = d + travel;
            // Ties go to the lower-indexed predecessor so paths are reproducible.
            if (nd < dist[v] || (nd == dist[v] && u < prev[v])) {
                const bool improved = nd < dist[v];
                dist[v] = nd;
                prev[v] = u;
                if (improved) queue.push({nd, v});
            }
        }
    }
    if (dist[to] == kInf) return {};
    std::vector<std::size_t> path;
    for (std::size_t at = to; at != from; at = prev[at]) path.push_back(at);
    std::reverse(path.begin(), path.end());
    return path;
}

std::vector<std::pair<Tick, std::size_t>> World::build_timeline(const std::vector<Waypoint>& itinerary) const {
    std::vector<std::pair<Tick, std::size_t>> timeline;
    std::size_t current = site_index(itinerary.front().site);
    timeline.push_back({kBeforeStart, current});
    for (std::size_t i = 1; i < itinerary.size(); ++i) {
        const std::size_t target = site_index(itinerary[i].site);
        const Tick next_leg = i + 1 < itinerary.size() ? itinerary[i + 1].tick : std::numeric_limits<Tick>::max();
        if (target == current) continue;
        const auto path = shortest_path(current, target);
        if (path.empty()) {
            // Disconnected: teleport at the waypoint tick.
            timeline.push_back({itinerary[i].tick, target});
            current = target;
            continue;
        }
        Tick t = itinerary[i].tick;
        std::size_t at = current;
        for (std::size_t hop : path) {
            t += edge_travel(at, hop);
            if (t >= next_leg) break;
            timeline.push_back({t, hop});
            at = hop;
        }
        current = at;
    }
    return timeline;
}

void World::refresh_devices(Tick tick) {
    for (auto& p : people_) {
        while (p.cursor + 1 < p.timeline.size() && p.timeline[p.cursor + 1].first <= tick) ++p.cursor;
        p.site = p.timeline[p.cursor].second;
    }
    for (std::size_t i = 0; i < devices_.size(); ++i) {
        auto& d = devices_[i];
        const auto& policy = policies_[i];
        const Holder& h = holders_[i];
        d.position = sites_[h.person ? people_[*h.person].site : *h.site].position;
        d.desc.mode = scheduled_mode(policy, base_modes_[i], tick);
        auto wire = current_wire_identity(d.desc, policy, tick, name_seeds_[i]);
        d.wire_id = wire.id;
        d.wire_name = std::move(wire.name);
        d.range_m = effective_range(config_.base_range, policy.knob);
    }
}

StepOutput World::step() {
    const Tick t = clock_;
    StepOutput out;
    refresh_devices(t);

    if (t == 0) {
        for (std::size_t i = 0; i < devices_.size(); ++i) {
            out.truth.push_back({0, truth::Carry{devices_[i].desc.id, people_[*holders_[i].person].id, devices_[i].desc.cls}});
        }
    }

    for (const auto& pr : pairings_) {
        if (t % pr.probe_period != 0) continue;
        const DeviceRuntime& a = devices_[pr.a];
        const DeviceRuntime& b = devices_[pr.b];
        if (!a.powered || a.desc.mode == VisibilityMode::Off) continue;
        const auto& peer_policy = policies_[pr.b];
        const DeviceId target = peer_policy.renaming
                                    ? resolve_peer(a.pairings.at(b.desc.id), t, peer_policy.renaming->epoch_length)
                                    : b.desc.id;
        const bool in_range = b.powered && b.desc.mode != VisibilityMode::Off && within_link_range(a, b);
        const bool reached = page(a, target, devices_, t).reached;
        out.truth.push_back({t, truth::PageAttempt{a.desc.id, b.desc.id, target, in_range, reached}});
    }

    InquiryOptions options;
    if (config_.miss_probability > 0.0) {
        options.miss_probability = config_.miss_probability;
        options.rng = &rng_;
    }
    for (auto& s : scanners_) {
        if (t < s.spec.offset || (t - s.spec.offset) % s.spec.period != 0) continue;
        for (const auto& r : inquiry(s.radio, devices_, t, options)) {
            out.sightings.push_back({s.spec.id, t, r.responder_id, r.cls, r.name, SightingSource::Inquiry});
        }
        for (DeviceId target : s.spec.page_targets) {
            if (!page(s.radio, target, devices_, t).reached) continue;
            for (const auto& d : devices_) {
                if (d.wire_id == target) {
                    out.sightings.push_back({s.spec.id, t, d.wire_id, d.desc.cls, d.wire_name, SightingSource::Page});
                    break;
                }
            }
        }
        for (std::size_t i = 0; i < devices_.size(); ++i) {
            const auto& d = devices_[i];
            if (!d.powered || d.desc.mode == VisibilityMode::Off || !within_link_range(s.radio, d)) continue;
            const Holder& h = holders_[i];
            out.truth.push_back({t, truth::Presence{s.spec.id, d.desc.id, d.wire_id, h.person ? people_[*h.person].id : std::string{}}});
        }
    }

    while (next_event_ < events_.size() && events_[next_event_].tick == t) apply_event(events_[next_event_++], out);
    // Events scheduled before the clock (possible only if constructed out of band) are skipped.
    while (next_event_ < events_.size() && events_[next_event_].tick < t) ++next_event_;

    ++clock_;
    return out;
}

void World::apply_event(const EventSpec& ev, StepOutput& out) {
    const Tick t = ev.tick;
    switch (ev.kind) {
        case EventKind::PointOfSale: {
            const auto& buyer = people_[person_index(ev.person)];
            out.truth.push_back({t, truth::PointOfSale{buyer.id, buyer.name, ev.device, ev.seller}});
            break;
        }
        case EventKind::Transfer:
            holders_[device_index(ev.device)] = {person_index(ev.to_person), std::nullopt};
            out.truth.push_back({t, truth::Transfer{ev.device, ev.person, ev.to_person}});
            break;
        case EventKind::Discard:
            holders_[device_index(ev.device)] = {std::nullopt, site_index(ev.site)};
            out.truth.push_back({t, truth::Discard{ev.device, ev.site, ev.person}});
            break;
        case EventKind::Pickup:
            holders_[device_index(ev.device)] = {person_index(ev.person), std::nullopt};
            out.truth.push_back({t, truth::Pickup{ev.device, ev.site, ev.person}});
            break;
        case EventKind::Incident: {
            std::optional<std::string> scanner;
            for (const auto& s : scanners_) {
                if (s.spec.site == ev.site) {
                    scanner = s.spec.id;
                    break;
                }
            }
            out.truth.push_back({t, truth::Incident{ev.site, scanner}});
            break;
        }
    }
}

const DeviceRuntime& World::device(DeviceId id) const { return devices_[device_index(id)]; }

const DevicePolicy& World::policy_of(DeviceId id) const { return policies_[device_index(id)]; }

DeviceLocation World::location_of(DeviceId id) const {
    const Holder& h = holders_[device_index(id)];
    DeviceLocation loc;
    if (h.person) loc.person = people_[*h.person].id;
    if (h.site) loc.site = sites_[*h.site].id;
    return loc;
}

const std::string& World::site_of_person(const std::string& person_id) const {
    return sites_[people_[person_index(person_id)].site].id;
}

std::vector<std::string> World::person_ids() const {
    std::vector<std::string> ids;
    for (const auto& p : people_) ids.push_back(p.id);
    return ids;
}

std::vector<DeviceId> World::carried_by(const std::string& person_id) const {
    const std::size_t p = person_index(person_id);
    std::vector<DeviceId> ids;
    for (std::size_t i = 0; i < devices_.size(); ++i) {
        if (holders_[i].person == p) ids.push_back(devices_[i].desc.id);
    }
    return ids;
}

std::vector<ScannerInfo> World::scanners() const {
    std::vector<ScannerInfo> out;
    for (const auto& s : scanners_) out.push_back({s.spec.id, s.spec.site, s.radio.desc.id, s.spec.page_targets});
    return out;
}

std::vector<TruthEvent> World::patch_states() const {
    std::vector<TruthEvent> out;
    for (const auto& d : devices_) {
        out.push_back({clock_, truth::PatchState{d.desc.id, read_hit_counter(d), read_guest_book(d)}});
    }
    return out;
}

TraceBundle run(const ScenarioConfig& config, std::uint64_t seed) {
    World world(config, seed);
    TraceBundle bundle;
    bundle.config_digest = config_digest(config, seed);
    bundle.seed = seed;
    bundle.scanners = world.scanners();
    while (world.clock() < config.horizon) {
        StepOutput out = world.step();
        std::move(out.sightings.begin(), out.sightings.end(), std::back_inserter(bundle.sightings));
        std::move(out.truth.begin(), out.truth.end(), std::back_inserter(bundle.truth));
    }
    auto finals = world.patch_states();
    std::move(finals.begin(), finals.end(), std::back_inserter(bundle.truth));
    return bundle;
}

}  // namespace btpriv
