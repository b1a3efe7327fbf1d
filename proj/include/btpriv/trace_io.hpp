#pragma once

// Line-structured trace files: one JSON object per line with a "kind"
// field. Objects are written with sorted keys so files are byte-stable.

#include <filesystem>
#include <iosfwd>
#include <string>

#include <json.hpp>

#include "btpriv/trace.hpp"

namespace btpriv {

nlohmann::json to_json(const Sighting& s);
Sighting sighting_from_json(const nlohmann::json& j);

nlohmann::json to_json(const TruthEvent& e);
TruthEvent truth_from_json(const nlohmann::json& j);

void write_trace(std::ostream& out, const TraceBundle& bundle);
std::string serialize_trace(const TraceBundle& bundle);

/// Accepts header, sighting and truth lines; unknown kinds (e.g. "report")
/// are skipped. Throws ParseError with the offending line number.
TraceBundle read_trace(std::istream& in);
TraceBundle load_trace(const std::filesystem::path& path);

/// Field layout of every record kind, for external tooling.
nlohmann::json record_schema();

}  // namespace btpriv
