#pragma once

// Identifier, class and name model of a Bluetooth device plus the
// manufacturer/value lookup tables the preference attack relies on.

#include <compare>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace btpriv {

using Tick = std::int64_t;

/// 48-bit device address. The high 24 bits are the manufacturer prefix.
class DeviceId {
public:
    static constexpr std::uint64_t kMask = (std::uint64_t{1} << 48) - 1;

    constexpr DeviceId() = default;
    /// Throws ValidationError when value does not fit in 48 bits.
    explicit DeviceId(std::uint64_t value);
    /// Keeps the low 48 bits of raw.
    static constexpr DeviceId truncate(std::uint64_t raw) noexcept {
        DeviceId id;
        id.value_ = raw & kMask;
        return id;
    }

    constexpr std::uint64_t value() const noexcept { return value_; }
    constexpr std::uint32_t oui() const noexcept { return static_cast<std::uint32_t>(value_ >> 24); }
    constexpr std::uint32_t nic() const noexcept { return static_cast<std::uint32_t>(value_ & 0xFFFFFF); }

    friend constexpr auto operator<=>(DeviceId, DeviceId) = default;

private:
    std::uint64_t value_ = 0;
};

DeviceId parse_device_id(std::string_view text);
std::string format_device_id(DeviceId id);

enum class MajorClass { Misc, Computer, Phone, Lan, AudioVideo, Peripheral, Imaging, SatNav, Other };

std::string_view to_string(MajorClass major);
std::optional<MajorClass> major_class_from_string(std::string_view name);

/// 24-bit class-of-device descriptor; only the major field (bits 8..12) is decoded.
class DeviceClass {
public:
    static constexpr std::uint32_t kMask = 0xFFFFFF;

    constexpr DeviceClass() = default;
    explicit DeviceClass(std::uint32_t value);

    constexpr std::uint32_t value() const noexcept { return value_; }

    friend constexpr auto operator<=>(DeviceClass, DeviceClass) = default;

private:
    std::uint32_t value_ = 0;
};

MajorClass major_class_of(DeviceClass cls) noexcept;

/// Builds a class value whose major field is `major` and all other bits clear.
DeviceClass class_for(MajorClass major) noexcept;

/// "0x" followed by six uppercase hex digits.
std::string format_device_class(DeviceClass cls);
DeviceClass parse_device_class(std::string_view text);

/// User-visible device name, at most 256 characters.
class FriendlyName {
public:
    static constexpr std::size_t kMaxLength = 256;

    FriendlyName() = default;
    explicit FriendlyName(std::string text);

    const std::string& str() const noexcept { return text_; }

    friend auto operator<=>(const FriendlyName&, const FriendlyName&) = default;

private:
    std::string text_;
};

enum class VisibilityMode { Off, Stealth, Discoverable };

std::string_view to_string(VisibilityMode mode);
VisibilityMode parse_visibility_mode(std::string_view text);

struct DeviceDescriptor {
    DeviceId id;
    DeviceClass cls;
    FriendlyName name;
    VisibilityMode mode = VisibilityMode::Discoverable;
    std::vector<std::string> services;
    std::optional<std::int64_t> value_hint;
};

/// Throws ValidationError on duplicate services or a negative value hint.
void validate(const DeviceDescriptor& desc);

class OuiTable {
public:
    static constexpr std::string_view kUnknown = "unknown";

    OuiTable() = default;

    void insert(std::uint32_t oui, std::string manufacturer);
    std::string_view lookup(std::uint32_t oui) const noexcept;
    std::size_t size() const noexcept { return entries_.size(); }

    /// Lines of `<6 hex digits> <name>`; blank lines and `#` comments skipped.
    static OuiTable parse(std::istream& in);
    static OuiTable load(const std::filesystem::path& path);

private:
    std::map<std::uint32_t, std::string> entries_;
};

class ValueTable {
public:
    ValueTable() = default;

    void insert(MajorClass major, std::string manufacturer, std::int64_t value);
    /// 0 when absent.
    std::int64_t lookup(MajorClass major, std::string_view manufacturer) const noexcept;
    std::size_t size() const noexcept { return count_; }

    /// Lines of `<major-class-name> <manufacturer> <integer value>`.
    static ValueTable parse(std::istream& in);
    static ValueTable load(const std::filesystem::path& path);

private:
    std::map<MajorClass, std::map<std::string, std::int64_t, std::less<>>> entries_;
    std::size_t count_ = 0;
};

std::string_view manufacturer_of(DeviceId id, const OuiTable& table) noexcept;

std::int64_t device_value(const DeviceDescriptor& desc, const OuiTable& oui, const ValueTable& values) noexcept;

}  // namespace btpriv
