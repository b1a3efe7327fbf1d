#pragma once

// Run output: what the scanners saw, and the ground truth the evaluator
// scores attacks against.

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "btpriv/btstack.hpp"
#include "btpriv/core_model.hpp"

namespace btpriv {

enum class SightingSource { Inquiry, Page };

struct Sighting {
    std::string scanner_id;
    Tick tick = 0;
    DeviceId observed_id;
    DeviceClass observed_class;
    FriendlyName observed_name;
    SightingSource via = SightingSource::Inquiry;

    friend bool operator==(const Sighting&, const Sighting&) = default;
};

namespace truth {

struct PointOfSale {
    std::string person;
    std::string person_name;
    DeviceId device;
    std::string seller;
};

struct Transfer {
    DeviceId device;
    std::string from_person;
    std::string to_person;
};

struct Discard {
    DeviceId device;
    std::string site;
    std::string by_person;
};

struct Pickup {
    DeviceId device;
    std::string site;
    std::string by_person;
};

struct Incident {
    std::string site;
    /// First scanner placed at the incident site, if any.
    std::optional<std::string> scanner;
};

/// Initial constellation membership, emitted at tick 0.
struct Carry {
    DeviceId device;
    std::string person;
    DeviceClass cls;
};

/// A powered, non-Off device inside a scanner's link range at a scan tick,
/// whether or not it answered.
struct Presence {
    std::string scanner;
    DeviceId device;
    DeviceId wire;
    /// Holder person id; empty when the device lies discarded at a site.
    std::string holder;
};

/// A paired device paging its peer through the resolved pseudonym.
struct PageAttempt {
    DeviceId from;
    DeviceId to;
    DeviceId target_wire;
    bool in_range = false;
    bool reached = false;
};

/// Protocol patch state of one device at the end of the run.
struct PatchState {
    DeviceId device;
    std::uint64_t hits = 0;
    std::vector<GuestEntry> guest_book;
};

}  // namespace truth

using TruthPayload = std::variant<truth::PointOfSale, truth::Transfer, truth::Discard, truth::Pickup,
                                  truth::Incident, truth::Carry, truth::Presence, truth::PageAttempt,
                                  truth::PatchState>;

struct TruthEvent {
    Tick tick = 0;
    TruthPayload payload;
};

/// Event tag as written in trace files ("point_of_sale", "transfer", ...).
std::string_view event_name(const TruthPayload& payload);

struct ScannerInfo {
    std::string id;
    std::string site;
    DeviceId address;
    std::vector<DeviceId> page_targets;
};

struct TraceBundle {
    std::vector<Sighting> sightings;
    std::vector<TruthEvent> truth;
    /// Absent for externally produced logs.
    std::optional<std::string> config_digest;
    std::optional<std::uint64_t> seed;
    std::vector<ScannerInfo> scanners;

    bool has_truth() const noexcept { return !truth.empty(); }
};

}  // namespace btpriv
