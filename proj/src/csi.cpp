#include "btpriv/csi.hpp"

#include <algorithm>
#include <cstdio>
#include <istream>
#include <ostream>
#include <set>

#include "btpriv/error.hpp"
#include "btpriv/rng.hpp"

namespace btpriv {

using nlohmann::json;

namespace {

const std::vector<std::size_t> kNoRows;

}  // namespace

HashedId hash_id(DeviceId id, std::uint64_t salt) noexcept { return {mix(salt ^ id.value())}; }

std::string format_hashed_id(HashedId h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h.digest));
    return buf;
}

HashedId parse_hashed_id(std::string_view text) {
    if (text.size() != 16) throw ParseError("hashed id must be 16 hex digits, got '" + std::string(text) + "'");
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        int d;
        if (c >= '0' && c <= '9') d = c - '0';
        else if (c >= 'a' && c <= 'f') d = c - 'a' + 10;
        else if (c >= 'A' && c <= 'F') d = c - 'A' + 10;
        else throw ParseError("non-hex character at position " + std::to_string(i) + " of hashed id");
        v = (v << 4) | static_cast<std::uint64_t>(d);
    }
    return {v};
}

TraceStore::TraceStore(std::uint64_t salt, std::vector<StoredSighting> rows) : salt_(salt), rows_(std::move(rows)) {
    std::stable_sort(rows_.begin(), rows_.end(), [](const auto& a, const auto& b) { return a.tick < b.tick; });
    for (std::size_t i = 0; i < rows_.size(); ++i) {
        by_digest_[rows_[i].digest].push_back(i);
        auto it = by_scanner_.find(rows_[i].scanner_id);
        if (it == by_scanner_.end()) it = by_scanner_.emplace(rows_[i].scanner_id, std::vector<std::size_t>{}).first;
        it->second.push_back(i);
    }
}

const std::vector<std::size_t>& TraceStore::rows_of(HashedId h) const {
    auto it = by_digest_.find(h);
    return it == by_digest_.end() ? kNoRows : it->second;
}

const std::vector<std::size_t>& TraceStore::rows_at(std::string_view scanner_id) const {
    auto it = by_scanner_.find(scanner_id);
    return it == by_scanner_.end() ? kNoRows : it->second;
}

std::vector<HashedId> TraceStore::subjects() const {
    std::vector<HashedId> out;
    out.reserve(by_digest_.size());
    for (const auto& [h, rows] : by_digest_) out.push_back(h);
    return out;
}

json to_json(const StoredSighting& row) {
    return {{"kind", "hashed-sighting"},
            {"digest", format_hashed_id(row.digest)},
            {"scanner_id", row.scanner_id},
            {"tick", row.tick},
            {"class", format_device_class(row.cls)},
            {"name", row.name.str()}};
}

void TraceStore::write(std::ostream& out) const {
    for (const auto& row : rows_) out << to_json(row).dump() << '\n';
}

TraceStore TraceStore::read(std::istream& in, std::uint64_t salt) {
    std::vector<StoredSighting> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const json j = json::parse(line);
            if (j.at("kind").get<std::string>() != "hashed-sighting") continue;
            rows.push_back({parse_hashed_id(j.at("digest").get<std::string>()), j.at("scanner_id").get<std::string>(),
                            j.at("tick").get<Tick>(), parse_device_class(j.at("class").get<std::string>()),
                            FriendlyName(j.at("name").get<std::string>())});
        } catch (const std::exception& e) {
            throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return TraceStore(salt, std::move(rows));
}

TraceStore ingest(std::span<const Sighting> sightings, std::uint64_t salt) {
    std::vector<StoredSighting> rows;
    rows.reserve(sightings.size());
    for (const auto& s : sightings) {
        rows.push_back({hash_id(s.observed_id, salt), s.scanner_id, s.tick, s.observed_class, s.observed_name});
    }
    return TraceStore(salt, std::move(rows));
}

std::vector<StoredSighting> match_candidate(DeviceId candidate, const TraceStore& store) {
    std::vector<StoredSighting> out;
    for (std::size_t i : store.rows_of(hash_id(candidate, store.salt()))) out.push_back(store.rows()[i]);
    return out;
}

std::vector<HashedId> presence_window(const TraceStore& store, std::string_view scanner_id, Tick t0, Tick t1) {
    if (t0 > t1) {
        throw ArgumentError("presence window start " + std::to_string(t0) + " is after end " + std::to_string(t1));
    }
    std::set<HashedId> seen;
    const auto& idx = store.rows_at(scanner_id);
    auto first = std::lower_bound(idx.begin(), idx.end(), t0,
                                  [&](std::size_t i, Tick t) { return store.rows()[i].tick < t; });
    for (auto it = first; it != idx.end() && store.rows()[*it].tick <= t1; ++it) seen.insert(store.rows()[*it].digest);
    return {seen.begin(), seen.end()};
}

bool RoleRules::is_night(int hour) const noexcept {
    if (night_start <= night_end) return hour >= night_start && hour < night_end;
    return hour >= night_start || hour < night_end;
}

void RoleRules::validate() const {
    auto hour_ok = [](int h) { return h >= 0 && h < 24; };
    if (!hour_ok(night_start) || !hour_ok(night_end)) throw ValidationError("night window hours must lie in [0, 24)");
    if (min_sightings == 0 || min_scanners_rover == 0 || !(night_fraction_cutoff > 0.0)) {
        throw ValidationError("role thresholds must be positive");
    }
}

AppearanceFeatures appearance_features(const TraceStore& store, HashedId subject, Tick ticks_per_hour,
                                       const RoleRules& rules) {
    if (ticks_per_hour < 1) throw ArgumentError("ticks_per_hour must be >= 1");
    AppearanceFeatures f;
    f.subject = subject;
    std::set<std::string_view> scanners;
    std::size_t night = 0;
    for (std::size_t i : store.rows_of(subject)) {
        const auto& row = store.rows()[i];
        const int hour = static_cast<int>(((row.tick / ticks_per_hour) % 24 + 24) % 24);
        ++f.hour_histogram[static_cast<std::size_t>(hour)];
        ++f.n_sightings;
        scanners.insert(row.scanner_id);
        if (rules.is_night(hour)) ++night;
    }
    f.n_distinct_scanners = scanners.size();
    if (f.n_sightings > 0) f.night_fraction = static_cast<double>(night) / static_cast<double>(f.n_sightings);
    return f;
}

std::string_view to_string(RoleLabel label) {
    switch (label) {
        case RoleLabel::FixedSiteFrequenter: return "FixedSiteFrequenter";
        case RoleLabel::NocturnalRover: return "NocturnalRover";
        case RoleLabel::Transient: return "Transient";
        case RoleLabel::Unclassified: return "Unclassified";
    }
    return "Unclassified";
}

RoleLabel classify_role(const AppearanceFeatures& f, const RoleRules& rules) {
    if (f.n_sightings >= rules.min_sightings && f.n_distinct_scanners == 1) return RoleLabel::FixedSiteFrequenter;
    if (f.n_sightings >= rules.min_sightings && f.n_distinct_scanners >= rules.min_scanners_rover &&
        f.night_fraction >= rules.night_fraction_cutoff) {
        return RoleLabel::NocturnalRover;
    }
    if (f.n_sightings < rules.min_sightings) return RoleLabel::Transient;
    return RoleLabel::Unclassified;
}

}  // namespace btpriv
