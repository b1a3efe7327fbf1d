#include "btpriv/btstack.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "btpriv/error.hpp"

namespace btpriv {

double distance(Vec2 a, Vec2 b) noexcept { return std::hypot(a.x - b.x, a.y - b.y); }

void DiscoveryLog::record(DeviceId inquirer, Tick tick) {
    if (!entries_.empty() && tick < entries_.back().tick) {
        throw ProtocolError("guest book tick went backwards");
    }
    entries_.push_back({inquirer, tick});
}

DeviceRuntime DeviceRuntime::from_descriptor(DeviceDescriptor desc, Vec2 position, double range_m) {
    DeviceRuntime rt;
    rt.wire_id = desc.id;
    rt.wire_name = desc.name;
    rt.desc = std::move(desc);
    rt.position = position;
    rt.range_m = range_m;
    return rt;
}

bool within_link_range(const DeviceRuntime& a, const DeviceRuntime& b) noexcept {
    const double r = std::min(a.range_m, b.range_m);
    return r > 0.0 && distance(a.position, b.position) <= r;
}

namespace {

void require_active(const DeviceRuntime& inquirer) {
    if (!inquirer.powered || inquirer.desc.mode == VisibilityMode::Off) {
        throw ProtocolError("inquirer " + format_device_id(inquirer.desc.id) + " is off or unpowered");
    }
}

bool is_self(const DeviceRuntime& inquirer, const DeviceRuntime& d) {
    return &inquirer == &d || inquirer.desc.id == d.desc.id;
}

}  // namespace

std::vector<InquiryResponse> inquiry(const DeviceRuntime& inquirer, std::span<DeviceRuntime> world, Tick tick,
                                     const InquiryOptions& options) {
    require_active(inquirer);

    std::vector<DeviceRuntime*> candidates;
    for (auto& d : world) {
        if (is_self(inquirer, d) || !d.powered || d.desc.mode != VisibilityMode::Discoverable) continue;
        if (!within_link_range(inquirer, d)) continue;
        candidates.push_back(&d);
    }
    std::sort(candidates.begin(), candidates.end(), [](const DeviceRuntime* a, const DeviceRuntime* b) {
        return std::tie(a->wire_id, a->desc.id) < std::tie(b->wire_id, b->desc.id);
    });

    std::vector<InquiryResponse> responses;
    responses.reserve(candidates.size());
    for (DeviceRuntime* d : candidates) {
        if (options.miss_probability > 0.0 && options.rng != nullptr &&
            options.rng->uniform01() < options.miss_probability) {
            continue;
        }
        d->discovery.record(inquirer.wire_id, tick);
        responses.push_back({d->wire_id, d->desc.cls, d->wire_name, distance(inquirer.position, d->position)});
    }
    return responses;
}

PageResult page(const DeviceRuntime& inquirer, DeviceId target_id, std::span<const DeviceRuntime> world, Tick) {
    require_active(inquirer);
    for (const auto& d : world) {
        if (is_self(inquirer, d) || d.wire_id != target_id) continue;
        if (!d.powered || d.desc.mode == VisibilityMode::Off) continue;
        if (!within_link_range(inquirer, d)) continue;
        return {true, d.desc.services};
    }
    return {};
}

DeviceRuntime set_mode(DeviceRuntime device, VisibilityMode mode) {
    device.desc.mode = mode;
    return device;
}

Piconet form_piconet(DeviceId master, std::vector<DeviceId> slaves) {
    if (slaves.size() > Piconet::kMaxSlaves) {
        throw CapacityError("piconet holds at most 7 slaves, got " + std::to_string(slaves.size()));
    }
    std::set<DeviceId> seen{master};
    for (DeviceId s : slaves) {
        if (!seen.insert(s).second) throw ValidationError("piconet member repeated: " + format_device_id(s));
    }
    return Piconet{master, std::move(slaves)};
}

}  // namespace btpriv
