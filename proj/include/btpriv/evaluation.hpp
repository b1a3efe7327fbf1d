#pragma once

// Runs the six threats as one suite and scores their outputs against the
// ground-truth log of the same run.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "btpriv/adversary.hpp"
#include "btpriv/countermeasures.hpp"
#include "btpriv/trace.hpp"

namespace btpriv {

enum class Threat { Association, Location, Preference, Constellation, Transaction, Breadcrumb };

inline constexpr std::array<Threat, 6> kAllThreats = {Threat::Association,   Threat::Location,    Threat::Preference,
                                                      Threat::Constellation, Threat::Transaction, Threat::Breadcrumb};

std::string_view to_string(Threat threat);
/// Throws ArgumentError for unknown names.
Threat parse_threat(std::string_view name);
/// Comma-separated list, or "all".
std::set<Threat> parse_threat_list(std::string_view list);

struct AttackParams {
    Tick merge_gap = kDefaultMergeGap;
    MiningParams mining;
    TransactionParams transactions;
    /// Half-width of incident windows derived from incident reports.
    Tick incident_window = 300;
    Tick epoch_length = kDefaultEpochLength;
    LinkMatcher matcher = LinkMatcher::IdEquality;
};

/// Side inputs an adversary may hold. Nothing here comes from ground truth
/// except incident reports, which are public.
struct AttackInputs {
    const PosDatabase* pos = nullptr;
    const OuiTable* oui = nullptr;
    const ValueTable* values = nullptr;
    std::vector<IncidentQuery> incidents;
    /// Which scanners page which known ids.
    std::vector<ScannerInfo> scanners;
};

struct AttackOutputs {
    std::optional<std::string> config_digest;
    std::set<Threat> selected;
    AttackParams params;

    /// A point-of-sale ledger was supplied; it scopes location and preference targets.
    bool had_pos = false;
    bool association_precondition_met = false;
    std::map<DeviceId, std::string> association;

    std::vector<DeviceId> location_targets;
    std::vector<Itinerary> itineraries;
    std::vector<Itinerary> paged_itineraries;
    std::vector<EpochLink> links;

    std::vector<PreferenceProfile> profiles;
    ConstellationSet constellations;
    std::vector<TransactionEvent> transactions;
    std::vector<std::pair<IncidentQuery, std::vector<Implication>>> breadcrumbs;
};

/// Incident reports turned into queries against the scanner at each incident site.
std::vector<IncidentQuery> incident_queries(std::span<const TruthEvent> truth, Tick window);

AttackOutputs run_attacks(std::span<const Sighting> sightings, const std::optional<std::string>& config_digest,
                          const std::set<Threat>& threats, const AttackParams& params, const AttackInputs& inputs);

/// One report line per selected threat.
std::vector<nlohmann::json> report_records(const AttackOutputs& outputs);

struct Score {
    std::optional<double> precision;
    std::optional<double> recall;
    std::size_t predicted = 0;
    std::size_t gold = 0;
};

struct LinkabilityScore {
    /// Share of same-device consecutive-epoch pairs the matcher linked.
    double raw = 0.0;
    /// Expected share for a uniformly random one-to-one matcher.
    double chance = 0.0;
    /// (raw - chance) / (1 - chance), clamped to [0, 1].
    double score = 0.0;
    std::size_t pairs = 0;
};

struct Metrics {
    std::vector<std::pair<std::string, Score>> rows;
    std::optional<LinkabilityScore> linkability;

    const Score* find(std::string_view row) const;
};

/// precision = hits / predicted and recall = hits / gold, each absent when its
/// denominator is 0.
Score make_score(std::size_t hit_predicted, std::size_t predicted, std::size_t hit_gold, std::size_t gold);

/// Throws RefusalError when both sides carry a digest and they differ.
Metrics evaluate_against_truth(const AttackOutputs& outputs, std::span<const Sighting> sightings,
                               const TraceBundle& truth_source);

/// `threat,precision,recall,linkability` with empty cells for absent values.
void write_metrics_csv(std::ostream& out, const Metrics& metrics);

std::string format_metric(const std::optional<double>& value);

}  // namespace btpriv
