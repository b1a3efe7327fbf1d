#pragma once

// Device-side privacy policies: visibility schedules, pseudonym renaming
// with paired-peer resolution, a transmit range knob and the
// friendly-name-only identification scheme.

#include <cstdint>
#include <optional>
#include <vector>

#include "btpriv/btstack.hpp"
#include "btpriv/core_model.hpp"

namespace btpriv {

inline constexpr Tick kDefaultEpochLength = 600;

struct RenamingState {
    std::uint64_t seed = 0;
    Tick epoch_length = kDefaultEpochLength;
    /// Also rotate the friendly name with each pseudonym. Off by default, which
    /// leaves the stable name as a linking handle.
    bool rotate_name = false;

    std::uint64_t epoch_at(Tick tick) const noexcept { return static_cast<std::uint64_t>(tick / epoch_length); }
};

struct RangeKnob {
    double fraction = 1.0;
};

enum class NameMode { StableId, FriendlyNameOnly };

struct NamePolicy {
    NameMode mode = NameMode::StableId;
    /// Self-assigned name rotation period; 0 keeps the descriptor name.
    Tick rename_period = 0;
};

/// Half-open tick range [begin, end) during which `mode` overrides the
/// descriptor's visibility.
struct VisibilityWindow {
    Tick begin = 0;
    Tick end = 0;
    VisibilityMode mode = VisibilityMode::Discoverable;
};

struct DevicePolicy {
    std::vector<VisibilityWindow> visibility;
    std::optional<RenamingState> renaming;
    RangeKnob knob;
    NamePolicy names;

    bool is_identity() const noexcept {
        return visibility.empty() && !renaming && knob.fraction == 1.0 && names.mode == NameMode::StableId &&
               names.rename_period == 0;
    }
};

/// Throws ValidationError for overlapping windows, epoch_length < 1, a knob
/// outside [0,1] or a negative rename period.
void validate(const DevicePolicy& policy);

/// Low 48 bits of one mixer application to (seed XOR epoch).
DeviceId pseudonym_at(std::uint64_t seed, std::uint64_t epoch) noexcept;

VisibilityMode scheduled_mode(const DevicePolicy& policy, VisibilityMode base, Tick tick) noexcept;

struct WireIdentity {
    DeviceId id;
    FriendlyName name;
};

/// What the device puts on the air at `tick`. `name_seed` is the per-device
/// secret (drawn from the run Rng) behind name-only ids and self-assigned names.
WireIdentity current_wire_identity(const DeviceDescriptor& desc, const DevicePolicy& policy, Tick tick,
                                   std::uint64_t name_seed = 0);

/// Name the device announces at `tick`; see current_wire_identity.
FriendlyName current_self_name(const DeviceDescriptor& desc, const DevicePolicy& policy, Tick tick,
                               std::uint64_t name_seed = 0);

/// Wire id of a renaming peer at `tick`, computed from the shared seed.
DeviceId resolve_peer(const PairingRecord& pairing, Tick tick, Tick epoch_length) noexcept;

/// A pairing remembered only through the two names seen when it was made.
struct NamePairing {
    FriendlyName name_a;
    FriendlyName name_b;
    Tick established_tick = 0;
};

enum class PairingStatus { Valid, RequiresRediscovery };

PairingStatus break_on_rename(const NamePairing& pairing, const FriendlyName& current_a,
                              const FriendlyName& current_b) noexcept;

/// One side of a name-based pairing, with the policy that drives its name.
struct NamedParty {
    const DeviceDescriptor* desc;
    const DevicePolicy* policy;
    std::uint64_t name_seed = 0;
};

NamePairing pair_by_name(const NamedParty& a, const NamedParty& b, Tick tick);
PairingStatus break_on_rename(const NamePairing& pairing, const NamedParty& a, const NamedParty& b, Tick tick);

double effective_range(double base_m, RangeKnob knob) noexcept;

}  // namespace btpriv
