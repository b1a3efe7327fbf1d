#include "btpriv/adversary.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <variant>

#include "btpriv/error.hpp"

namespace btpriv {

namespace {

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> fields;
    if (line.find('\t') != std::string::npos) {
        std::stringstream ss(line);
        std::string f;
        while (std::getline(ss, f, '\t')) fields.push_back(f);
    } else {
        std::istringstream ss(line);
        std::string f;
        while (ss >> f) fields.push_back(f);
    }
    return fields;
}

class DisjointSets {
public:
    explicit DisjointSets(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }

    std::size_t find(std::size_t x) {
        while (parent_[x] != x) {
            parent_[x] = parent_[parent_[x]];
            x = parent_[x];
        }
        return x;
    }

    void unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a != b) parent_[std::max(a, b)] = std::min(a, b);
    }

private:
    std::vector<std::size_t> parent_;
};

// Dense numbering of ids and scanner-windows shared by the miners.
struct WindowIndex {
    std::vector<DeviceId> ids;                     // sorted
    std::vector<std::vector<std::size_t>> windows; // per id: sorted window numbers
    std::vector<std::vector<std::size_t>> members; // per window: sorted id numbers
    std::vector<Tick> window_start;                // per window: first tick covered

    WindowIndex(std::span<const Sighting> sightings, Tick width) {
        std::set<DeviceId> id_set;
        std::map<std::pair<std::string, Tick>, std::size_t> key_to_window;
        for (const auto& s : sightings) {
            id_set.insert(s.observed_id);
            key_to_window.try_emplace({s.scanner_id, s.tick / width}, 0);
        }
        ids.assign(id_set.begin(), id_set.end());
        std::size_t n = 0;
        for (auto& [key, idx] : key_to_window) {
            idx = n++;
            window_start.push_back(key.second * width);
        }
        windows.resize(ids.size());
        members.resize(n);
        for (const auto& s : sightings) {
            const std::size_t i = index_of(s.observed_id);
            const std::size_t w = key_to_window.at({s.scanner_id, s.tick / width});
            windows[i].push_back(w);
            members[w].push_back(i);
        }
        for (auto& v : windows) dedupe(v);
        for (auto& v : members) dedupe(v);
    }

    std::size_t index_of(DeviceId id) const {
        return static_cast<std::size_t>(std::lower_bound(ids.begin(), ids.end(), id) - ids.begin());
    }

    static void dedupe(std::vector<std::size_t>& v) {
        std::sort(v.begin(), v.end());
        v.erase(std::unique(v.begin(), v.end()), v.end());
    }
};

}  // namespace

void PosDatabase::add(PosRecord record) { records_.push_back(std::move(record)); }

std::vector<PosRecord> PosDatabase::lookup(DeviceId device) const {
    std::vector<PosRecord> out;
    for (const auto& r : records_) {
        if (r.device == device) out.push_back(r);
    }
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.tick < b.tick; });
    return out;
}

std::optional<std::string> PosDatabase::original_purchaser(DeviceId device) const {
    auto recs = lookup(device);
    if (recs.empty()) return std::nullopt;
    return recs.front().person;
}

std::optional<std::string> PosDatabase::latest_purchaser(DeviceId device) const {
    auto recs = lookup(device);
    if (recs.empty()) return std::nullopt;
    return recs.back().person;
}

std::set<DeviceId> PosDatabase::devices() const {
    std::set<DeviceId> out;
    for (const auto& r : records_) out.insert(r.device);
    return out;
}

PosDatabase PosDatabase::parse(std::istream& in) {
    PosDatabase db;
    std::string line;
    for (int lineno = 1; std::getline(in, line); ++lineno) {
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        auto fields = split_fields(line);
        if (fields.size() != 4) {
            throw ParseError("pos line " + std::to_string(lineno) + ": expected '<id> <person> <seller> <tick>'");
        }
        try {
            db.add({parse_device_id(fields[0]), fields[1], fields[2], std::stoll(fields[3])});
        } catch (const std::invalid_argument&) {
            throw ParseError("pos line " + std::to_string(lineno) + ": bad tick '" + fields[3] + "'");
        } catch (const ParseError& e) {
            throw ParseError("pos line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return db;
}

PosDatabase PosDatabase::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open pos database " + path.string());
    return parse(in);
}

void PosDatabase::write(std::ostream& out) const {
    out << "# device\tperson\tseller\ttick\n";
    for (const auto& r : records_) {
        out << format_device_id(r.device) << '\t' << r.person << '\t' << r.seller << '\t' << r.tick << '\n';
    }
}

PosDatabase PosDatabase::from_sales(std::span<const TruthEvent> truth) {
    PosDatabase db;
    for (const auto& e : truth) {
        if (const auto* sale = std::get_if<truth::PointOfSale>(&e.payload)) {
            db.add({sale->device, sale->person_name.empty() ? sale->person : sale->person_name, sale->seller, e.tick});
        }
    }
    return db;
}

std::vector<Sighting> inquiry_sightings(std::span<const Sighting> sightings) {
    std::vector<Sighting> out;
    std::copy_if(sightings.begin(), sightings.end(), std::back_inserter(out),
                 [](const Sighting& s) { return s.via == SightingSource::Inquiry; });
    return out;
}

std::vector<Sighting> page_sightings(std::span<const Sighting> sightings) {
    std::vector<Sighting> out;
    std::copy_if(sightings.begin(), sightings.end(), std::back_inserter(out),
                 [](const Sighting& s) { return s.via == SightingSource::Page; });
    return out;
}

std::set<DeviceId> observed_ids(std::span<const Sighting> sightings) {
    std::set<DeviceId> ids;
    for (const auto& s : sightings) ids.insert(s.observed_id);
    return ids;
}

std::map<DeviceId, std::string> associate_identities(std::span<const Sighting> sightings, const PosDatabase& pos) {
    std::map<DeviceId, std::string> out;
    for (DeviceId id : observed_ids(sightings)) {
        if (auto who = pos.latest_purchaser(id)) out.emplace(id, *who);
    }
    return out;
}

Itinerary track_locations(std::span<const Sighting> sightings, DeviceId target, Tick merge_gap) {
    std::vector<const Sighting*> hits;
    for (const auto& s : sightings) {
        if (s.observed_id == target) hits.push_back(&s);
    }
    std::stable_sort(hits.begin(), hits.end(), [](const Sighting* a, const Sighting* b) { return a->tick < b->tick; });
    Itinerary it{target, {}};
    for (const Sighting* s : hits) {
        if (!it.visits.empty()) {
            Visit& last = it.visits.back();
            if (last.scanner_id == s->scanner_id && s->tick - last.last <= merge_gap) {
                last.last = s->tick;
                ++last.sightings;
                continue;
            }
        }
        it.visits.push_back({s->scanner_id, s->tick, s->tick, 1});
    }
    return it;
}

PreferenceProfile profile_preferences(std::span<const Sighting> sightings, const std::set<DeviceId>& subject_ids,
                                      const OuiTable& oui, const ValueTable& values, std::string subject) {
    std::map<DeviceId, DeviceClass> last_class;
    for (const auto& s : sightings) {
        if (subject_ids.contains(s.observed_id)) last_class[s.observed_id] = s.observed_class;
    }
    PreferenceProfile profile;
    profile.subject = std::move(subject);
    for (const auto& [id, cls] : last_class) {
        DeviceDescriptor desc;
        desc.id = id;
        desc.cls = cls;
        ProfiledDevice pd{id, major_class_of(cls), std::string(manufacturer_of(id, oui)), device_value(desc, oui, values)};
        ++profile.class_histogram[pd.major];
        ++profile.manufacturer_histogram[pd.manufacturer];
        profile.total_value += pd.value;
        profile.devices.push_back(std::move(pd));
    }
    return profile;
}

std::optional<std::size_t> ConstellationSet::cluster_of(DeviceId id) const {
    for (std::size_t c = 0; c < clusters.size(); ++c) {
        const auto& m = clusters[c].members;
        if (std::binary_search(m.begin(), m.end(), id)) return c;
    }
    return std::nullopt;
}

ConstellationSet mine_constellations(std::span<const Sighting> sightings, const MiningParams& params) {
    if (params.window < 1) throw ArgumentError("mining window must be >= 1");
    if (params.min_cooccurrences < 1) throw ArgumentError("min co-occurrences must be >= 1");

    const WindowIndex index(sightings, params.window);
    const std::size_t n = index.ids.size();
    std::unordered_map<std::uint64_t, std::size_t> shared;
    for (const auto& members : index.members) {
        for (std::size_t a = 0; a < members.size(); ++a) {
            for (std::size_t b = a + 1; b < members.size(); ++b) {
                ++shared[(static_cast<std::uint64_t>(members[a]) << 32) | members[b]];
            }
        }
    }
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    for (const auto& [key, count] : shared) {
        const std::size_t i = key >> 32;
        const std::size_t j = key & 0xFFFFFFFFu;
        const std::size_t uni = index.windows[i].size() + index.windows[j].size() - count;
        const double jaccard = static_cast<double>(count) / static_cast<double>(uni);
        if (count >= params.min_cooccurrences && jaccard >= params.min_similarity) edges.push_back({i, j});
    }
    DisjointSets sets(n);
    for (auto [i, j] : edges) sets.unite(i, j);

    std::map<std::size_t, std::vector<DeviceId>> components;
    for (std::size_t i = 0; i < n; ++i) components[sets.find(i)].push_back(index.ids[i]);

    ConstellationSet result;
    result.params = params;
    for (auto& [root, members] : components) {
        if (members.size() < 2) continue;
        const bool group = members.size() > params.group_cap;
        result.clusters.push_back({std::move(members), group});
    }
    // Roots are the smallest index in each component, so this is already
    // ordered by smallest member.
    return result;
}

std::vector<TransactionEvent> detect_transactions(std::span<const Sighting> sightings,
                                                  const ConstellationSet& constellations,
                                                  const TransactionParams& params) {
    const Tick delta = constellations.params.window;
    if (params.window < delta) throw ArgumentError("transaction window must be >= mining window");
    if (params.confirmations < 1) throw ArgumentError("confirmation count must be >= 1");

    const WindowIndex index(sightings, delta);
    std::vector<std::optional<std::size_t>> cluster(index.ids.size());
    for (std::size_t c = 0; c < constellations.clusters.size(); ++c) {
        for (DeviceId id : constellations.clusters[c].members) {
            auto pos = std::lower_bound(index.ids.begin(), index.ids.end(), id);
            if (pos != index.ids.end() && *pos == id) cluster[static_cast<std::size_t>(pos - index.ids.begin())] = c;
        }
    }

    std::vector<TransactionEvent> events;
    for (std::size_t d = 0; d < index.ids.size(); ++d) {
        // slot -> cluster -> co-present members, each weighted by 1 / (other members of the cluster)
        std::map<Tick, std::map<std::size_t, double>> votes;
        for (std::size_t w : index.windows[d]) {
            const Tick slot = index.window_start[w] / params.window;
            for (std::size_t other : index.members[w]) {
                if (other == d || !cluster[other]) continue;
                const std::size_t c = *cluster[other];
                const std::size_t others = constellations.clusters[c].members.size() - (cluster[d] == c ? 1 : 0);
                votes[slot][c] += 1.0 / static_cast<double>(others);
            }
        }
        if (votes.empty()) continue;

        // Every cluster tied for the top vote in each slot.
        std::map<Tick, std::set<std::size_t>> best;
        for (const auto& [slot, tally] : votes) {
            double top = 0.0;
            for (const auto& [c, v] : tally) top = std::max(top, v);
            for (const auto& [c, v] : tally) {
                if (v >= top - 1e-9) best[slot].insert(c);
            }
        }

        auto run_length = [&](Tick slot, std::size_t c) {
            std::size_t len = 0;
            for (auto it = best.find(slot);
                 it != best.end() && it->first == slot + static_cast<Tick>(len) && it->second.contains(c); ++it) {
                ++len;
            }
            return len;
        };

        std::optional<std::size_t> established;
        for (const auto& [slot, tied] : best) {
            if (established && tied.contains(*established)) continue;
            for (std::size_t c : tied) {
                if (run_length(slot, c) < params.confirmations) continue;
                if (established) events.push_back({index.ids[d], *established, c, slot * params.window});
                established = c;
                break;
            }
        }
    }
    std::sort(events.begin(), events.end(), [](const auto& a, const auto& b) {
        return std::tie(a.switch_tick, a.device) < std::tie(b.switch_tick, b.device);
    });
    return events;
}

std::vector<Implication> implicate_breadcrumbs(std::span<const Sighting> sightings, const IncidentQuery& incident,
                                               const PosDatabase* pos) {
    std::set<DeviceId> present;
    for (const auto& s : sightings) {
        if (s.scanner_id == incident.scanner_id && s.tick >= incident.tick - incident.window &&
            s.tick <= incident.tick + incident.window) {
            present.insert(s.observed_id);
        }
    }
    std::vector<Implication> out;
    for (DeviceId id : present) {
        out.push_back({id, pos ? pos->original_purchaser(id) : std::nullopt});
    }
    return out;
}

std::vector<EpochLink> link_epochs(std::span<const Sighting> sightings, Tick epoch_length, LinkMatcher matcher) {
    if (epoch_length < 1) throw ArgumentError("epoch length must be >= 1");
    struct Seen {
        FriendlyName name;
        DeviceClass cls;
    };
    std::map<std::uint64_t, std::map<DeviceId, Seen>> epochs;
    for (const auto& s : sightings) {
        epochs[static_cast<std::uint64_t>(s.tick / epoch_length)][s.observed_id] = {s.observed_name, s.observed_class};
    }

    std::vector<EpochLink> links;
    for (auto it = epochs.begin(); it != epochs.end(); ++it) {
        auto next = std::next(it);
        if (next == epochs.end() || next->first != it->first + 1) continue;
        const auto& xs = it->second;
        const auto& ys = next->second;

        struct Candidate {
            int score;
            DeviceId x;
            DeviceId y;
        };
        std::vector<Candidate> candidates;
        for (const auto& [x, sx] : xs) {
            if (ys.contains(x)) candidates.push_back({2, x, x});
            if (matcher == LinkMatcher::NameAware && !sx.name.str().empty()) {
                for (const auto& [y, sy] : ys) {
                    if (y != x && sy.name == sx.name && sy.cls == sx.cls) candidates.push_back({1, x, y});
                }
            }
        }
        std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
            return std::tie(b.score, a.x, a.y) < std::tie(a.score, b.x, b.y);
        });
        std::set<DeviceId> used_x;
        std::set<DeviceId> used_y;
        for (const auto& c : candidates) {
            if (used_x.contains(c.x) || used_y.contains(c.y)) continue;
            used_x.insert(c.x);
            used_y.insert(c.y);
            links.push_back({it->first, c.x, c.y});
        }
        // Whatever is left is paired blindly in sorted order.
        auto xi = xs.begin();
        auto yi = ys.begin();
        while (true) {
            while (xi != xs.end() && used_x.contains(xi->first)) ++xi;
            while (yi != ys.end() && used_y.contains(yi->first)) ++yi;
            if (xi == xs.end() || yi == ys.end()) break;
            links.push_back({it->first, xi->first, yi->first});
            ++xi;
            ++yi;
        }
    }
    return links;
}

}  // namespace btpriv
