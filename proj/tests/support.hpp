#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <cstdlib>

#include "btpriv/btstack.hpp"
#include "btpriv/core_model.hpp"
#include "btpriv/trace.hpp"

namespace btpriv::test {

inline std::filesystem::path source_path(const std::string& rel) { return std::filesystem::path(BTPRIV_SOURCE_DIR) / rel; }

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

inline DeviceId id(std::uint64_t v) { return DeviceId(v); }

inline Sighting sighting(const std::string& scanner, Tick tick, std::uint64_t observed,
                         std::uint32_t cls = 0x000200, const std::string& name = "",
                         SightingSource via = SightingSource::Inquiry) {
    return {scanner, tick, DeviceId(observed), DeviceClass(cls), FriendlyName(name), via};
}

inline DeviceRuntime radio(std::uint64_t v, Vec2 pos = {}, VisibilityMode mode = VisibilityMode::Discoverable,
                           double range = kDefaultRangeMeters) {
    DeviceDescriptor d;
    d.id = DeviceId(v);
    d.cls = DeviceClass(0x000200);
    d.mode = mode;
    return DeviceRuntime::from_descriptor(d, pos, range);
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("btpriv-test-" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

#ifdef BTPRIV_CLI_PATH
/// Runs the command-line tool with `args` (shell syntax) and returns its exit
/// status. Stdout and stderr go to `log` when given, else are discarded.
inline int run_cli(const std::string& args, const std::filesystem::path& log = {}) {
    const std::string sink = log.empty() ? std::string("/dev/null") : log.string();
    const std::string cmd = std::string("\"") + BTPRIV_CLI_PATH + "\" " + args + " >" + sink + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}
#endif

}  // namespace btpriv::test
