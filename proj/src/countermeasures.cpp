#include "btpriv/countermeasures.hpp"

#include <algorithm>
#include <cstdio>

#include "btpriv/error.hpp"
#include "btpriv/rng.hpp"

namespace btpriv {

namespace {

constexpr std::uint64_t kNameSalt = 0xA5A5A5A55A5A5A5Aull;

std::string with_suffix(const std::string& base, std::uint64_t bits) {
    char suffix[6];
    std::snprintf(suffix, sizeof suffix, "-%04X", static_cast<unsigned>(bits & 0xFFFF));
    return base.substr(0, FriendlyName::kMaxLength - 5) + suffix;
}

}  // namespace

void validate(const DevicePolicy& policy) {
    std::vector<VisibilityWindow> windows = policy.visibility;
    std::sort(windows.begin(), windows.end(), [](const auto& a, const auto& b) { return a.begin < b.begin; });
    for (std::size_t i = 0; i < windows.size(); ++i) {
        if (windows[i].end < windows[i].begin) throw ValidationError("policy.visibility: window ends before it begins");
        if (i > 0 && windows[i].begin < windows[i - 1].end) throw ValidationError("policy.visibility: overlapping windows");
    }
    if (policy.renaming && policy.renaming->epoch_length < 1) {
        throw ValidationError("policy.renaming.epoch_length must be >= 1");
    }
    if (!(policy.knob.fraction >= 0.0 && policy.knob.fraction <= 1.0)) {
        throw ValidationError("policy.knob.fraction must lie in [0,1]");
    }
    if (policy.names.rename_period < 0) throw ValidationError("policy.names.rename_period must be >= 0");
}

DeviceId pseudonym_at(std::uint64_t seed, std::uint64_t epoch) noexcept { return DeviceId::truncate(mix(seed ^ epoch)); }

VisibilityMode scheduled_mode(const DevicePolicy& policy, VisibilityMode base, Tick tick) noexcept {
    for (const auto& w : policy.visibility) {
        if (tick >= w.begin && tick < w.end) return w.mode;
    }
    return base;
}

FriendlyName current_self_name(const DeviceDescriptor& desc, const DevicePolicy& policy, Tick tick,
                               std::uint64_t name_seed) {
    if (policy.names.rename_period > 0) {
        const auto period = static_cast<std::uint64_t>(tick / policy.names.rename_period);
        return FriendlyName{with_suffix(desc.name.str(), mix(name_seed ^ kNameSalt ^ period))};
    }
    if (policy.renaming && policy.renaming->rotate_name && policy.names.mode == NameMode::StableId) {
        const DeviceId pseudo = pseudonym_at(policy.renaming->seed, policy.renaming->epoch_at(tick));
        return FriendlyName{with_suffix(desc.name.str(), pseudo.value())};
    }
    return desc.name;
}

WireIdentity current_wire_identity(const DeviceDescriptor& desc, const DevicePolicy& policy, Tick tick,
                                   std::uint64_t name_seed) {
    WireIdentity wire{desc.id, current_self_name(desc, policy, tick, name_seed)};
    if (policy.names.mode == NameMode::FriendlyNameOnly) {
        // Ids are throwaway; without a renaming schedule every tick gets a new one.
        const Tick epoch_length = policy.renaming ? policy.renaming->epoch_length : 1;
        wire.id = pseudonym_at(name_seed, static_cast<std::uint64_t>(tick / epoch_length));
    } else if (policy.renaming) {
        wire.id = pseudonym_at(policy.renaming->seed, policy.renaming->epoch_at(tick));
    }
    return wire;
}

DeviceId resolve_peer(const PairingRecord& pairing, Tick tick, Tick epoch_length) noexcept {
    return pseudonym_at(pairing.peer_seed, static_cast<std::uint64_t>(tick / epoch_length));
}

PairingStatus break_on_rename(const NamePairing& pairing, const FriendlyName& current_a,
                              const FriendlyName& current_b) noexcept {
    return pairing.name_a == current_a && pairing.name_b == current_b ? PairingStatus::Valid
                                                                       : PairingStatus::RequiresRediscovery;
}

NamePairing pair_by_name(const NamedParty& a, const NamedParty& b, Tick tick) {
    return {current_self_name(*a.desc, *a.policy, tick, a.name_seed),
            current_self_name(*b.desc, *b.policy, tick, b.name_seed), tick};
}

PairingStatus break_on_rename(const NamePairing& pairing, const NamedParty& a, const NamedParty& b, Tick tick) {
    return break_on_rename(pairing, current_self_name(*a.desc, *a.policy, tick, a.name_seed),
                           current_self_name(*b.desc, *b.policy, tick, b.name_seed));
}

double effective_range(double base_m, RangeKnob knob) noexcept { return base_m * knob.fraction; }

}  // namespace btpriv
