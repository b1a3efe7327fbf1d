#include "btpriv/core_model.hpp"

#include <array>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "btpriv/error.hpp"

namespace btpriv {

namespace {

int hex_digit(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

constexpr std::array<std::string_view, 9> kMajorNames = {
    "Misc", "Computer", "Phone", "Lan", "AudioVideo", "Peripheral", "Imaging", "SatNav", "Other"};

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

// Strips comments and whitespace; returns empty for lines to skip.
std::string_view content_of(std::string_view line) {
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    return trim(line);
}

std::ifstream open_or_throw(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path.string());
    return in;
}

}  // namespace

DeviceId::DeviceId(std::uint64_t value) : value_(value) {
    if (value > kMask) throw ValidationError("device id exceeds 48 bits");
}

DeviceId parse_device_id(std::string_view text) {
    if (text.size() != 17) {
        throw ParseError("device id '" + std::string(text) + "': expected 17 characters, got " +
                         std::to_string(text.size()));
    }
    std::uint64_t value = 0;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (i % 3 == 2) {
            if (c != ':') {
                throw ParseError("device id '" + std::string(text) + "': expected ':' at position " +
                                 std::to_string(i));
            }
            continue;
        }
        const int d = hex_digit(c);
        if (d < 0) {
            throw ParseError("device id '" + std::string(text) + "': non-hex character at position " +
                             std::to_string(i));
        }
        value = (value << 4) | static_cast<std::uint64_t>(d);
    }
    return DeviceId{value};
}

std::string format_device_id(DeviceId id) {
    char buf[18];
    const std::uint64_t v = id.value();
    std::snprintf(buf, sizeof buf, "%02X:%02X:%02X:%02X:%02X:%02X", static_cast<unsigned>((v >> 40) & 0xFF),
                  static_cast<unsigned>((v >> 32) & 0xFF), static_cast<unsigned>((v >> 24) & 0xFF),
                  static_cast<unsigned>((v >> 16) & 0xFF), static_cast<unsigned>((v >> 8) & 0xFF),
                  static_cast<unsigned>(v & 0xFF));
    return buf;
}

std::string_view to_string(MajorClass major) { return kMajorNames[static_cast<std::size_t>(major)]; }

std::optional<MajorClass> major_class_from_string(std::string_view name) {
    for (std::size_t i = 0; i < kMajorNames.size(); ++i) {
        if (kMajorNames[i] == name) return static_cast<MajorClass>(i);
    }
    return std::nullopt;
}

DeviceClass::DeviceClass(std::uint32_t value) : value_(value) {
    if (value > kMask) throw ValidationError("device class exceeds 24 bits");
}

MajorClass major_class_of(DeviceClass cls) noexcept {
    const std::uint32_t code = (cls.value() >> 8) & 0x1F;
    return code <= 7 ? static_cast<MajorClass>(code) : MajorClass::Other;
}

DeviceClass class_for(MajorClass major) noexcept {
    // Other has no code of its own; 0x1F is the conventional "uncategorized".
    const std::uint32_t code = major == MajorClass::Other ? 0x1F : static_cast<std::uint32_t>(major);
    return DeviceClass{code << 8};
}

std::string format_device_class(DeviceClass cls) {
    char buf[9];
    std::snprintf(buf, sizeof buf, "0x%06X", static_cast<unsigned>(cls.value()));
    return buf;
}

DeviceClass parse_device_class(std::string_view text) {
    std::string_view digits = text;
    if (digits.starts_with("0x") || digits.starts_with("0X")) digits.remove_prefix(2);
    std::uint32_t value = 0;
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), value, 16);
    if (digits.empty() || ec != std::errc{} || ptr != digits.data() + digits.size()) {
        throw ParseError("device class '" + std::string(text) + "': not a hex number");
    }
    if (value > DeviceClass::kMask) throw ParseError("device class '" + std::string(text) + "' exceeds 24 bits");
    return DeviceClass{value};
}

FriendlyName::FriendlyName(std::string text) : text_(std::move(text)) {
    if (text_.size() > kMaxLength) {
        throw ValidationError("friendly name longer than 256 characters (" + std::to_string(text_.size()) + ")");
    }
}

std::string_view to_string(VisibilityMode mode) {
    switch (mode) {
        case VisibilityMode::Off: return "off";
        case VisibilityMode::Stealth: return "stealth";
        case VisibilityMode::Discoverable: return "discoverable";
    }
    return "off";
}

VisibilityMode parse_visibility_mode(std::string_view text) {
    if (text == "off") return VisibilityMode::Off;
    if (text == "stealth") return VisibilityMode::Stealth;
    if (text == "discoverable") return VisibilityMode::Discoverable;
    throw ParseError("unknown visibility mode '" + std::string(text) + "'");
}

void validate(const DeviceDescriptor& desc) {
    std::set<std::string_view> seen;
    for (const auto& s : desc.services) {
        if (!seen.insert(s).second) {
            throw ValidationError("device " + format_device_id(desc.id) + ": duplicate service '" + s + "'");
        }
    }
    if (desc.value_hint && *desc.value_hint < 0) {
        throw ValidationError("device " + format_device_id(desc.id) + ": negative value hint");
    }
}

void OuiTable::insert(std::uint32_t oui, std::string manufacturer) {
    if (oui > 0xFFFFFF) throw ValidationError("oui exceeds 24 bits");
    entries_[oui] = std::move(manufacturer);
}

std::string_view OuiTable::lookup(std::uint32_t oui) const noexcept {
    auto it = entries_.find(oui);
    return it == entries_.end() ? kUnknown : std::string_view{it->second};
}

OuiTable OuiTable::parse(std::istream& in) {
    OuiTable table;
    std::string line;
    for (int lineno = 1; std::getline(in, line); ++lineno) {
        const std::string_view body = content_of(line);
        if (body.empty()) continue;
        const auto space = body.find_first_of(" \t");
        const std::string_view prefix = body.substr(0, space);
        const std::string_view name = space == std::string_view::npos ? std::string_view{} : trim(body.substr(space));
        std::uint32_t oui = 0;
        auto [ptr, ec] = std::from_chars(prefix.data(), prefix.data() + prefix.size(), oui, 16);
        if (prefix.size() != 6 || ec != std::errc{} || ptr != prefix.data() + prefix.size() || name.empty()) {
            throw ParseError("oui table line " + std::to_string(lineno) + ": expected '<6 hex digits> <name>'");
        }
        table.insert(oui, std::string(name));
    }
    return table;
}

OuiTable OuiTable::load(const std::filesystem::path& path) {
    auto in = open_or_throw(path);
    return parse(in);
}

void ValueTable::insert(MajorClass major, std::string manufacturer, std::int64_t value) {
    if (value < 0) throw ValidationError("value table: negative value for " + manufacturer);
    auto [it, inserted] = entries_[major].insert_or_assign(std::move(manufacturer), value);
    (void)it;
    if (inserted) ++count_;
}

std::int64_t ValueTable::lookup(MajorClass major, std::string_view manufacturer) const noexcept {
    auto by_class = entries_.find(major);
    if (by_class == entries_.end()) return 0;
    auto it = by_class->second.find(manufacturer);
    return it == by_class->second.end() ? 0 : it->second;
}

ValueTable ValueTable::parse(std::istream& in) {
    ValueTable table;
    std::string line;
    for (int lineno = 1; std::getline(in, line); ++lineno) {
        const std::string_view body = content_of(line);
        if (body.empty()) continue;
        std::istringstream fields{std::string(body)};
        std::string major_name, manufacturer, value_text, extra;
        if (!(fields >> major_name >> manufacturer >> value_text) || (fields >> extra)) {
            throw ParseError("value table line " + std::to_string(lineno) +
                             ": expected '<major-class> <manufacturer> <value>'");
        }
        auto major = major_class_from_string(major_name);
        if (!major) throw ParseError("value table line " + std::to_string(lineno) + ": unknown class '" + major_name + "'");
        std::int64_t value = 0;
        auto [ptr, ec] = std::from_chars(value_text.data(), value_text.data() + value_text.size(), value);
        if (ec != std::errc{} || ptr != value_text.data() + value_text.size() || value < 0) {
            throw ParseError("value table line " + std::to_string(lineno) + ": bad value '" + value_text + "'");
        }
        table.insert(*major, manufacturer, value);
    }
    return table;
}

ValueTable ValueTable::load(const std::filesystem::path& path) {
    auto in = open_or_throw(path);
    return parse(in);
}

std::string_view manufacturer_of(DeviceId id, const OuiTable& table) noexcept { return table.lookup(id.oui()); }

std::int64_t device_value(const DeviceDescriptor& desc, const OuiTable& oui, const ValueTable& values) noexcept {
    if (desc.value_hint) return *desc.value_hint;
    return values.lookup(major_class_of(desc.cls), manufacturer_of(desc.id, oui));
}

}  // namespace btpriv
