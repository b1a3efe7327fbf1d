#pragma once

// Discrete-event city. One tick is one second. Each tick: people move,
// device wire identities are refreshed from their policies, paired devices
// probe each other, due scanners run inquiries (and pages for any known
// targets), then scripted events fire; an event at tick t is visible from
// t + 1 onward.
//
// Rng draw order is part of the determinism contract:
//   1. roaming crowd waypoints, crowd by crowd, member by member;
//   2. one discoverable_fraction draw per person (if the fraction is set);
//   3. one name seed per device;
//   4. per-response miss draws during the run (if miss_probability > 0).

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "btpriv/btstack.hpp"
#include "btpriv/countermeasures.hpp"
#include "btpriv/rng.hpp"
#include "btpriv/scenario.hpp"
#include "btpriv/trace.hpp"

namespace btpriv {

struct StepOutput {
    std::vector<Sighting> sightings;
    std::vector<TruthEvent> truth;
};

/// Where a device is: carried by a person or lying at a site. Exactly one is set.
struct DeviceLocation {
    std::optional<std::string> person;
    std::optional<std::string> site;
};

class World {
public:
    World(const ScenarioConfig& config, std::uint64_t seed);

    /// Simulates the tick at clock() and advances the clock by one.
    StepOutput step();

    Tick clock() const noexcept { return clock_; }
    std::span<const DeviceRuntime> devices() const noexcept { return devices_; }
    const DeviceRuntime& device(DeviceId id) const;
    const DevicePolicy& policy_of(DeviceId id) const;
    DeviceLocation location_of(DeviceId id) const;
    /// Site the person occupied during the last simulated tick.
    const std::string& site_of_person(const std::string& person_id) const;
    std::vector<std::string> person_ids() const;
    std::vector<DeviceId> carried_by(const std::string& person_id) const;
    std::vector<ScannerInfo> scanners() const;

    /// Protocol patch state of every device, tagged with the current clock.
    std::vector<TruthEvent> patch_states() const;

private:
    struct PersonState {
        std::string id;
        std::string name;
        std::string role;
        std::vector<std::pair<Tick, std::size_t>> timeline;  // (arrival tick, site index)
        std::size_t cursor = 0;
        std::size_t site = 0;
    };
    struct Holder {
        std::optional<std::size_t> person;
        std::optional<std::size_t> site;
    };
    struct ScannerState {
        ScannerSpec spec;
        std::size_t site = 0;
        DeviceRuntime radio;
    };
    struct Pairing {
        std::size_t a = 0;
        std::size_t b = 0;
        Tick probe_period = 1;
    };

    std::size_t site_index(const std::string& id) const;
    std::size_t person_index(const std::string& id) const;
    std::size_t device_index(DeviceId id) const;
    std::vector<std::pair<Tick, std::size_t>> build_timeline(const std::vector<Waypoint>& itinerary) const;
    std::vector<std::size_t> shortest_path(std::size_t from, std::size_t to) const;
    Tick edge_travel(std::size_t a, std::size_t b) const;
    void refresh_devices(Tick tick);
    void apply_event(const EventSpec& ev, StepOutput& out);

    ScenarioConfig config_;
    Rng rng_;
    Tick clock_ = 0;
    std::vector<Site> sites_;
    std::vector<std::vector<std::pair<std::size_t, Tick>>> adjacency_;
    std::vector<PersonState> people_;
    std::vector<DeviceRuntime> devices_;
    std::vector<DevicePolicy> policies_;
    std::vector<VisibilityMode> base_modes_;
    std::vector<std::uint64_t> name_seeds_;
    std::vector<Holder> holders_;
    std::vector<ScannerState> scanners_;
    std::vector<Pairing> pairings_;
    std::vector<EventSpec> events_;
    std::size_t next_event_ = 0;
};

/// Steps ticks [0, horizon) and appends the final patch state of every device.
TraceBundle run(const ScenarioConfig& config, std::uint64_t seed);

}  // namespace btpriv
