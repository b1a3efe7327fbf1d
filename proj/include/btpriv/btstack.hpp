#pragma once

// Abstract inquiry/page protocol. Discovery is instantaneous: every
// discoverable device inside the link radius answers every inquiry unless a
// miss probability is configured. The stack carries the two discovery
// patches (hit counter and guest book); paging deliberately bypasses them.

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "btpriv/core_model.hpp"
#include "btpriv/rng.hpp"

namespace btpriv {

inline constexpr double kDefaultRangeMeters = 100.0;

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Vec2&, const Vec2&) = default;
};

double distance(Vec2 a, Vec2 b) noexcept;

struct GuestEntry {
    DeviceId inquirer;
    Tick tick = 0;

    friend auto operator<=>(const GuestEntry&, const GuestEntry&) = default;
};

/// Hit counter plus guest book. Append-only; the counter always equals the
/// number of guest book entries.
class DiscoveryLog {
public:
    /// Throws ProtocolError if tick precedes the last recorded tick.
    void record(DeviceId inquirer, Tick tick);

    std::uint64_t hits() const noexcept { return entries_.size(); }
    const std::vector<GuestEntry>& entries() const noexcept { return entries_; }

private:
    std::vector<GuestEntry> entries_;
};

struct PairingRecord {
    DeviceId peer;
    std::uint64_t peer_seed = 0;
    Tick established_tick = 0;
};

struct DeviceRuntime {
    DeviceDescriptor desc;
    Vec2 position;
    bool powered = true;
    /// Effective radio range this tick (base range scaled by any knob).
    double range_m = kDefaultRangeMeters;
    /// Identity carried on the air this tick; equals desc.id unless a
    /// renaming or name-only policy is active.
    DeviceId wire_id;
    FriendlyName wire_name;
    DiscoveryLog discovery;
    /// One record per peer.
    std::map<DeviceId, PairingRecord> pairings;

    static DeviceRuntime from_descriptor(DeviceDescriptor desc, Vec2 position = {},
                                         double range_m = kDefaultRangeMeters);
};

struct InquiryResponse {
    DeviceId responder_id;
    DeviceClass cls;
    FriendlyName name;
    double distance = 0.0;
};

struct PageResult {
    bool reached = false;
    std::vector<std::string> services;
};

struct InquiryOptions {
    double miss_probability = 0.0;
    /// Required when miss_probability > 0.
    Rng* rng = nullptr;
};

/// True when a and b can hear each other: both ranges positive and the
/// distance within the smaller of the two.
bool within_link_range(const DeviceRuntime& a, const DeviceRuntime& b) noexcept;

/// Broadcast discovery. Responders get their hit counter bumped and the
/// inquirer's wire id appended to their guest book. Results are ordered by
/// responder wire id. Throws ProtocolError if the inquirer is unpowered or Off.
std::vector<InquiryResponse> inquiry(const DeviceRuntime& inquirer, std::span<DeviceRuntime> world, Tick tick,
                                     const InquiryOptions& options = {});

/// Directed connection attempt to whoever currently carries target_id on the
/// air. Reaches Stealth devices too. Never touches the discovery log.
PageResult page(const DeviceRuntime& inquirer, DeviceId target_id, std::span<const DeviceRuntime> world, Tick tick);

DeviceRuntime set_mode(DeviceRuntime device, VisibilityMode mode);

inline std::uint64_t read_hit_counter(const DeviceRuntime& device) noexcept { return device.discovery.hits(); }
inline const std::vector<GuestEntry>& read_guest_book(const DeviceRuntime& device) noexcept {
    return device.discovery.entries();
}

class Piconet {
public:
    static constexpr std::size_t kMaxSlaves = 7;

    DeviceId master() const noexcept { return master_; }
    const std::vector<DeviceId>& slaves() const noexcept { return slaves_; }
    std::size_t size() const noexcept { return slaves_.size() + 1; }

    friend Piconet form_piconet(DeviceId master, std::vector<DeviceId> slaves);

private:
    Piconet(DeviceId master, std::vector<DeviceId> slaves) : master_(master), slaves_(std::move(slaves)) {}

    DeviceId master_;
    std::vector<DeviceId> slaves_;
};

/// Throws CapacityError above 7 slaves, ValidationError on repeated ids.
Piconet form_piconet(DeviceId master, std::vector<DeviceId> slaves);

}  // namespace btpriv
