#pragma once

// Command implementations behind the btpriv executable. Each returns a
// process exit code: 0 success, 2 usage or validation error, 3 internal error.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "btpriv/evaluation.hpp"
#include "btpriv/scenario.hpp"

namespace btpriv {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitInternal = 3;

inline constexpr std::string_view kToolVersion = "0.1.0";

struct SimulateOptions {
    std::filesystem::path scenario;
    std::optional<std::uint64_t> seed;
    std::filesystem::path out;
};

struct AttackOptions {
    std::filesystem::path trace;
    std::string threats = "all";
    std::optional<std::filesystem::path> pos_db;
    std::optional<std::filesystem::path> oui;
    std::optional<std::filesystem::path> values;
    /// Co-occurrence window of the mining step.
    std::optional<Tick> window;
    std::optional<Tick> epoch_length;
    bool name_aware = false;
    /// Extra incident queries as "scanner@tick", on top of reported incidents.
    std::vector<std::string> incidents;
    std::filesystem::path out;
};

struct DefenseMatrixOptions {
    std::filesystem::path scenario;
    std::optional<std::uint64_t> seed;
    std::string defenses = "all";
    std::string threats = "all";
    std::optional<std::filesystem::path> oui;
    std::optional<std::filesystem::path> values;
    std::filesystem::path out;
};

struct CsiOptions {
    std::string subcommand;
    std::optional<std::filesystem::path> trace;
    std::optional<std::filesystem::path> store;
    std::optional<std::filesystem::path> salt_file;
    std::optional<std::string> candidate;
    std::optional<std::string> scanner;
    /// "t0:t1", closed.
    std::optional<std::string> window;
    Tick ticks_per_hour = 3600;
    std::filesystem::path out;
};

int cmd_simulate(const SimulateOptions& opts, std::ostream& err);
int cmd_attack(const AttackOptions& opts, std::ostream& err);
int cmd_defense_matrix(const DefenseMatrixOptions& opts, std::ostream& err);
int cmd_csi(const CsiOptions& opts, std::ostream& err);
void print_schema(std::ostream& out);

enum class Defense { Baseline, Stealth, Renaming, Knob, HitCounter, GuestBook, NameOnly };

inline constexpr std::array<Defense, 7> kAllDefenses = {Defense::Baseline, Defense::Stealth,   Defense::Renaming,
                                                        Defense::Knob,     Defense::HitCounter, Defense::GuestBook,
                                                        Defense::NameOnly};

std::string_view to_string(Defense d);
Defense parse_defense(std::string_view name);
/// Comma-separated list or "all". Baseline is always included, first.
std::vector<Defense> parse_defense_list(std::string_view list);

/// The scenario with the defense switched on for every device.
ScenarioConfig apply_defense(const ScenarioConfig& config, Defense defense);

struct MatrixCell {
    std::string defense;
    std::string threat;
    std::optional<double> precision;
    std::optional<double> recall;
    std::optional<double> linkability;
    std::optional<double> link_raw;
    std::optional<double> link_chance;
};

struct MatrixInputs {
    const OuiTable* oui = nullptr;
    const ValueTable* values = nullptr;
    std::set<Threat> threats{kAllThreats.begin(), kAllThreats.end()};
};

/// Simulates baseline and each defense (in parallel), attacks every run with
/// the seller ledger and reported incidents as side inputs and scores it.
/// Cells come back grouped by defense in the declared order.
std::vector<MatrixCell> defense_matrix(const ScenarioConfig& config, std::uint64_t seed,
                                       const std::vector<Defense>& defenses, const MatrixInputs& inputs);

/// Attack-and-score cells for one finished run.
std::vector<MatrixCell> score_run(const TraceBundle& bundle, std::string_view defense, const MatrixInputs& inputs);

void write_matrix_csv(std::ostream& out, const std::vector<MatrixCell>& cells);

/// Writes to a sibling temporary file, then renames over path.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

/// Decimal or 0x-prefixed hex integer, surrounding whitespace ignored.
std::uint64_t read_salt(const std::filesystem::path& path);

}  // namespace btpriv
