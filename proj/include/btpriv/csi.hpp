#pragma once

// Hashed sighting storage with after-the-fact candidate matching, eyewitness
// extraction and appearance-pattern role inference.

#include <array>
#include <compare>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "btpriv/core_model.hpp"
#include "btpriv/trace.hpp"

namespace btpriv {

/// Salted digest of a device id. Not cryptographic: the mixer is a fast
/// one-way scramble, with no collision or preimage resistance claimed.
struct HashedId {
    std::uint64_t digest = 0;

    friend constexpr auto operator<=>(HashedId, HashedId) = default;
};

HashedId hash_id(DeviceId id, std::uint64_t salt) noexcept;
/// 16 lowercase hex digits.
std::string format_hashed_id(HashedId h);
HashedId parse_hashed_id(std::string_view text);

struct StoredSighting {
    HashedId digest;
    std::string scanner_id;
    Tick tick = 0;
    DeviceClass cls;
    FriendlyName name;

    friend bool operator==(const StoredSighting&, const StoredSighting&) = default;
};

/// Immutable after construction; queries are safe from several threads.
class TraceStore {
public:
    TraceStore() = default;
    /// Rows are re-sorted by tick (stable).
    TraceStore(std::uint64_t salt, std::vector<StoredSighting> rows);

    std::uint64_t salt() const noexcept { return salt_; }
    const std::vector<StoredSighting>& rows() const noexcept { return rows_; }
    std::size_t size() const noexcept { return rows_.size(); }

    /// Row indexes per digest, chronological.
    const std::vector<std::size_t>& rows_of(HashedId h) const;
    /// Row indexes per scanner, chronological.
    const std::vector<std::size_t>& rows_at(std::string_view scanner_id) const;
    std::vector<HashedId> subjects() const;

    /// One "hashed-sighting" line per row. The salt is never written.
    void write(std::ostream& out) const;
    /// Reads lines written by write(); other kinds are skipped.
    static TraceStore read(std::istream& in, std::uint64_t salt);

private:
    std::uint64_t salt_ = 0;
    std::vector<StoredSighting> rows_;
    std::map<HashedId, std::vector<std::size_t>> by_digest_;
    std::map<std::string, std::vector<std::size_t>, std::less<>> by_scanner_;
};

nlohmann::json to_json(const StoredSighting& row);

TraceStore ingest(std::span<const Sighting> sightings, std::uint64_t salt);

/// Rows whose digest equals hash_id(candidate, store.salt()), chronological.
std::vector<StoredSighting> match_candidate(DeviceId candidate, const TraceStore& store);

/// Distinct digests with a row at scanner_id in [t0, t1], sorted. Throws
/// ArgumentError when t0 > t1.
std::vector<HashedId> presence_window(const TraceStore& store, std::string_view scanner_id, Tick t0, Tick t1);

struct RoleRules {
    int night_start = 22;
    int night_end = 3;
    std::size_t min_sightings = 10;
    std::size_t min_scanners_rover = 3;
    double night_fraction_cutoff = 0.9;

    /// Handles windows that wrap past midnight.
    bool is_night(int hour) const noexcept;
    /// Throws ValidationError for hours outside [0, 24) or non-positive thresholds.
    void validate() const;
};

struct AppearanceFeatures {
    HashedId subject;
    std::size_t n_sightings = 0;
    std::size_t n_distinct_scanners = 0;
    std::array<std::size_t, 24> hour_histogram{};
    double night_fraction = 0.0;
};

/// Hour of a row is (tick / ticks_per_hour) % 24. Throws ArgumentError when
/// ticks_per_hour < 1.
AppearanceFeatures appearance_features(const TraceStore& store, HashedId subject, Tick ticks_per_hour = 3600,
                                       const RoleRules& rules = {});

enum class RoleLabel { FixedSiteFrequenter, NocturnalRover, Transient, Unclassified };

std::string_view to_string(RoleLabel label);

/// Rules are checked in order: fixed site, nocturnal rover, transient.
RoleLabel classify_role(const AppearanceFeatures& features, const RoleRules& rules = {});

}  // namespace btpriv
