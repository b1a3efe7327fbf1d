#pragma once

// Scenario documents. A scenario is one JSON object; unknown keys, dangling
// references and out-of-range values are rejected with the offending path.
// to_json() produces the canonical form (sorted keys) the config digest is
// computed from.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "btpriv/btstack.hpp"
#include "btpriv/core_model.hpp"
#include "btpriv/countermeasures.hpp"

namespace btpriv {

inline constexpr Tick kDefaultScanPeriod = 60;
inline constexpr Tick kDefaultProbePeriod = 600;

struct Site {
    std::string id;
    Vec2 position;
    std::string kind;
};

struct Edge {
    std::string from;
    std::string to;
    Tick travel = 1;
};

struct ScannerSpec {
    std::string id;
    std::string site;
    Tick period = kDefaultScanPeriod;
    Tick offset = 0;
    double range = kDefaultRangeMeters;
    std::optional<DeviceId> address;
    /// Known device ids this scanner also pages at every scan.
    std::vector<DeviceId> page_targets;
};

struct Waypoint {
    Tick tick = 0;
    std::string site;
};

struct DeviceSpec {
    DeviceDescriptor desc;
    /// False when the document left the mode to discoverable_fraction.
    bool mode_declared = false;
    std::optional<DevicePolicy> policy;
};

struct PersonSpec {
    std::string id;
    std::string name;
    std::string role;
    std::vector<Waypoint> itinerary;
    std::vector<DeviceSpec> devices;
    std::optional<DevicePolicy> policy;
};

/// Anonymous pedestrians, each carrying one device. Members either follow
/// `itinerary` shifted by index * stagger, or (when `roam_sites` is set) hop
/// between random roam sites every `dwell` ticks. Member k carries address
/// (oui << 24) | (k + 1); a renaming seed in `policy` is diversified per member.
struct CrowdSpec {
    std::string prefix;
    std::int64_t count = 0;
    std::uint32_t oui = 0;
    DeviceClass cls;
    std::string device_name;
    std::string role;
    std::vector<Waypoint> itinerary;
    Tick stagger = 0;
    std::vector<std::string> roam_sites;
    Tick dwell = 600;
    std::optional<DevicePolicy> policy;
};

enum class EventKind { PointOfSale, Transfer, Discard, Pickup, Incident };

struct EventSpec {
    Tick tick = 0;
    EventKind kind = EventKind::Incident;
    DeviceId device;
    /// Buyer (PointOfSale), giver (Transfer) or actor (Discard/Pickup).
    std::string person;
    /// Receiver of a Transfer.
    std::string to_person;
    std::string seller;
    std::string site;
};

struct PairingSpec {
    DeviceId a;
    DeviceId b;
    Tick probe_period = kDefaultProbePeriod;
};

struct ScenarioConfig {
    Tick horizon = 0;
    std::optional<std::uint64_t> seed;
    double base_range = kDefaultRangeMeters;
    double miss_probability = 0.0;
    std::optional<double> discoverable_fraction;
    std::vector<Site> sites;
    std::vector<Edge> edges;
    std::vector<ScannerSpec> scanners;
    std::vector<PersonSpec> people;
    std::vector<CrowdSpec> crowds;
    std::vector<EventSpec> events;
    std::vector<PairingSpec> pairings;
};

ScenarioConfig parse_scenario(const nlohmann::json& doc);
ScenarioConfig load_scenario(const std::filesystem::path& path);

/// Re-checks every invariant; parse_scenario calls this.
void validate(const ScenarioConfig& config);

nlohmann::json to_json(const ScenarioConfig& config);
nlohmann::json to_json(const DevicePolicy& policy);
DevicePolicy parse_policy(const nlohmann::json& j, const std::string& path);

/// FNV-1a 64 of the canonical serialization together with the seed, as 16
/// lowercase hex characters.
std::string config_digest(const ScenarioConfig& config, std::uint64_t seed);

/// Scenario seed if declared, else 1.
std::uint64_t default_seed(const ScenarioConfig& config) noexcept;

std::string_view to_string(EventKind kind);

}  // namespace btpriv
