#pragma once

// Inference attacks over a sighting log. Every function here takes only
// sightings plus declared side inputs; none of them can see ground truth.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "btpriv/core_model.hpp"
#include "btpriv/trace.hpp"

namespace btpriv {

inline constexpr Tick kDefaultMergeGap = 300;

struct PosRecord {
    DeviceId device;
    std::string person;
    std::string seller;
    Tick tick = 0;
};

/// A seller's sales ledger linking device ids to buyers.
class PosDatabase {
public:
    void add(PosRecord record);

    const std::vector<PosRecord>& records() const noexcept { return records_; }
    bool empty() const noexcept { return records_.empty(); }
    /// Records for one device, oldest sale first.
    std::vector<PosRecord> lookup(DeviceId device) const;
    std::optional<std::string> original_purchaser(DeviceId device) const;
    std::optional<std::string> latest_purchaser(DeviceId device) const;
    std::set<DeviceId> devices() const;

    /// Lines of `<device-id> <person> <seller> <tick>`; `#` comments allowed.
    static PosDatabase parse(std::istream& in);
    static PosDatabase load(const std::filesystem::path& path);
    void write(std::ostream& out) const;

    /// The sellers' own ledger, read from point-of-sale records. This is what
    /// a seller would hold; it is a side input, not something attacks derive.
    static PosDatabase from_sales(std::span<const TruthEvent> truth);

private:
    std::vector<PosRecord> records_;
};

/// Observed ids joined to their most recent buyer. Unmatched ids are absent.
std::map<DeviceId, std::string> associate_identities(std::span<const Sighting> sightings, const PosDatabase& pos);

struct Visit {
    std::string scanner_id;
    Tick first = 0;
    Tick last = 0;
    std::size_t sightings = 0;
};

struct Itinerary {
    DeviceId target;
    std::vector<Visit> visits;
};

/// All sightings of target in tick order; a sighting extends the previous
/// visit when it is at the same scanner and no more than merge_gap later.
Itinerary track_locations(std::span<const Sighting> sightings, DeviceId target, Tick merge_gap = kDefaultMergeGap);

struct ProfiledDevice {
    DeviceId id;
    MajorClass major = MajorClass::Misc;
    std::string manufacturer;
    std::int64_t value = 0;
};

struct PreferenceProfile {
    std::string subject;
    std::vector<ProfiledDevice> devices;
    std::map<MajorClass, std::size_t> class_histogram;
    std::map<std::string, std::size_t> manufacturer_histogram;
    std::int64_t total_value = 0;
};

/// Profiles the distinct subject ids that appear in the log, using the class
/// each was last observed with.
PreferenceProfile profile_preferences(std::span<const Sighting> sightings, const std::set<DeviceId>& subject_ids,
                                      const OuiTable& oui, const ValueTable& values, std::string subject = {});

struct MiningParams {
    /// Co-occurrence window width in ticks.
    Tick window = 60;
    std::size_t min_cooccurrences = 3;
    double min_similarity = 0.5;
    /// Clusters larger than this are flagged as groups of people.
    std::size_t group_cap = 4;
};

struct Constellation {
    std::vector<DeviceId> members;
    bool group = false;
};

struct ConstellationSet {
    std::vector<Constellation> clusters;
    MiningParams params;

    std::optional<std::size_t> cluster_of(DeviceId id) const;
};

/// Sighting windows of one id: (scanner, tick / window) keys.
using WindowKey = std::pair<std::string, Tick>;

/// Two ids co-occur once per scanner-window in which both were sighted. An
/// edge joins ids with at least min_cooccurrences shared windows and Jaccard
/// similarity of their window sets at least min_similarity. Clusters are the
/// connected components of size >= 2, members sorted, clusters ordered by
/// their smallest member. Throws ArgumentError if window < 1 or
/// min_cooccurrences < 1.
ConstellationSet mine_constellations(std::span<const Sighting> sightings, const MiningParams& params = {});

struct TransactionParams {
    Tick window = 600;
    std::size_t confirmations = 2;
};

struct TransactionEvent {
    DeviceId device;
    std::size_t from_cluster = 0;
    std::size_t to_cluster = 0;
    Tick switch_tick = 0;
};

/// Per device and per slot of params.window ticks, each cluster scores the
/// share of its other members co-present with the device, summed over the
/// slot's co-occurrence windows. A device stays attached to its current
/// cluster while that cluster is among the top scorers; it moves when another
/// cluster tops `confirmations` consecutive slots, reported at the start of
/// the first of them. Slots with no co-occurrence break a run. Throws
/// ArgumentError if the transaction window is shorter than the mining window.
std::vector<TransactionEvent> detect_transactions(std::span<const Sighting> sightings,
                                                  const ConstellationSet& constellations,
                                                  const TransactionParams& params = {});

struct IncidentQuery {
    std::string scanner_id;
    Tick tick = 0;
    /// Half-width: the query covers [tick - window, tick + window].
    Tick window = 0;
};

struct Implication {
    DeviceId device;
    /// Original purchaser, absent when the ledger has no sale for the id.
    std::optional<std::string> person;
};

/// Every id seen at the incident scanner inside the window, joined to its
/// original purchaser regardless of later transfers or discards.
std::vector<Implication> implicate_breadcrumbs(std::span<const Sighting> sightings, const IncidentQuery& incident,
                                               const PosDatabase* pos);

enum class LinkMatcher {
    /// Links ids only when they are equal.
    IdEquality,
    /// Also prefers pairs announcing the same name and class.
    NameAware,
};

struct EpochLink {
    std::uint64_t epoch = 0;  // links epoch -> epoch + 1
    DeviceId from;
    DeviceId to;
};

/// Greedy one-to-one matching of the ids seen in each epoch to those seen in
/// the next: highest score first, remaining ids paired in sorted order.
std::vector<EpochLink> link_epochs(std::span<const Sighting> sightings, Tick epoch_length, LinkMatcher matcher);

/// Sightings produced by inquiry (drops page hits).
std::vector<Sighting> inquiry_sightings(std::span<const Sighting> sightings);
std::vector<Sighting> page_sightings(std::span<const Sighting> sightings);
std::set<DeviceId> observed_ids(std::span<const Sighting> sightings);

}  // namespace btpriv
