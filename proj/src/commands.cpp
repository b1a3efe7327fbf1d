#include "btpriv/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <future>
#include <ostream>
#include <sstream>

#include "btpriv/csi.hpp"
#include "btpriv/error.hpp"
#include "btpriv/rng.hpp"
#include "btpriv/simulation.hpp"
#include "btpriv/trace_io.hpp"

namespace btpriv {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::array<std::string_view, 7> kDefenseNames = {"baseline",    "stealth",    "renaming", "knob",
                                                           "hit_counter", "guest_book", "name_only"};

constexpr double kKnobFraction = 0.25;
constexpr Tick kNameOnlyRenamePeriod = 3600;
constexpr std::uint64_t kRenamingSeedTweak = 0x52454E414D494E47ull;

/// Output files staged as temporaries, published only after the manifest.
class OutputSet {
public:
    explicit OutputSet(fs::path dir) : dir_(std::move(dir)) {}

    void add(const std::string& name, std::string content) { files_.emplace_back(name, std::move(content)); }

    void commit(const json& manifest) {
        fs::create_directories(dir_);
        std::vector<std::pair<fs::path, fs::path>> staged;
        for (const auto& [name, content] : files_) {
            const fs::path target = dir_ / name;
            fs::path tmp = target;
            tmp += ".tmp";
            write_plain(tmp, content);
            staged.emplace_back(tmp, target);
        }
        write_file_atomic(dir_ / "manifest.json", manifest.dump(2) + "\n");
        for (const auto& [tmp, target] : staged) fs::rename(tmp, target);
    }

    static void write_plain(const fs::path& path, std::string_view content) {
        std::ofstream f(path, std::ios::binary | std::ios::trunc);
        if (!f) throw std::runtime_error("cannot write " + path.string());
        f.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!f) throw std::runtime_error("write failed for " + path.string());
    }

private:
    fs::path dir_;
    std::vector<std::pair<std::string, std::string>> files_;
};

json base_manifest(std::string_view command, const fs::path& out) {
    return {{"command", command}, {"tool_version", kToolVersion}, {"out", out.generic_string()}};
}

/// Maps library exceptions to exit codes.
template <class F>
int guarded(std::ostream& err, F&& body) {
    try {
        return body();
    } catch (const ValidationError& e) {
        err << "validation error: " << e.what() << '\n';
    } catch (const ParseError& e) {
        err << "parse error: " << e.what() << '\n';
    } catch (const ArgumentError& e) {
        err << "argument error: " << e.what() << '\n';
    } catch (const RefusalError& e) {
        err << "refused: " << e.what() << '\n';
    } catch (const fs::filesystem_error& e) {
        err << "file error: " << e.what() << '\n';
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << '\n';
        return kExitInternal;
    }
    return kExitValidation;
}

fs::path default_data_file(const char* name) { return fs::path(BTPRIV_SOURCE_DIR) / "data" / name; }

void require_file(const fs::path& path, std::string_view what) {
    if (!fs::is_regular_file(path)) throw ArgumentError(std::string(what) + " not found: " + path.string());
}

OuiTable load_oui(const std::optional<fs::path>& path) {
    const fs::path p = path.value_or(default_data_file("oui.txt"));
    if (!path && !fs::exists(p)) return {};
    require_file(p, "oui table");
    return OuiTable::load(p);
}

ValueTable load_values(const std::optional<fs::path>& path) {
    const fs::path p = path.value_or(default_data_file("values.txt"));
    if (!path && !fs::exists(p)) return {};
    require_file(p, "value table");
    return ValueTable::load(p);
}

std::string lines_of(const std::vector<json>& records) {
    std::string s;
    for (const auto& r : records) s += r.dump() + "\n";
    return s;
}

IncidentQuery parse_incident(std::string_view text, Tick window) {
    const auto at = text.rfind('@');
    if (at == std::string_view::npos || at == 0) throw ArgumentError("incident must be scanner@tick, got '" + std::string(text) + "'");
    try {
        std::size_t used = 0;
        const std::string tick_text(text.substr(at + 1));
        const Tick tick = std::stoll(tick_text, &used);
        if (used != tick_text.size()) throw std::invalid_argument("trailing characters");
        return {std::string(text.substr(0, at)), tick, window};
    } catch (const std::logic_error&) {
        throw ArgumentError("bad incident tick in '" + std::string(text) + "'");
    }
}

std::pair<Tick, Tick> parse_window(std::string_view text) {
    const auto colon = text.find(':');
    if (colon == std::string_view::npos) throw ArgumentError("window must be t0:t1, got '" + std::string(text) + "'");
    try {
        const Tick t0 = std::stoll(std::string(text.substr(0, colon)));
        const Tick t1 = std::stoll(std::string(text.substr(colon + 1)));
        return {t0, t1};
    } catch (const std::logic_error&) {
        throw ArgumentError("window must be t0:t1, got '" + std::string(text) + "'");
    }
}

/// Policy a device actually runs under: its own, else its holder's.
DevicePolicy effective_policy(const DeviceSpec& d, const PersonSpec& p) {
    return d.policy ? *d.policy : p.policy.value_or(DevicePolicy{});
}

void apply_to_policy(DevicePolicy& policy, Defense defense, Tick horizon, std::uint64_t renaming_seed) {
    switch (defense) {
        case Defense::Baseline:
        case Defense::HitCounter:
        case Defense::GuestBook:
            break;
        case Defense::Stealth:
            policy.visibility = {{0, std::max<Tick>(horizon, 1), VisibilityMode::Stealth}};
            break;
        case Defense::Renaming:
            policy.renaming = RenamingState{renaming_seed, kDefaultEpochLength, false};
            break;
        case Defense::Knob:
            policy.knob.fraction = kKnobFraction;
            break;
        case Defense::NameOnly:
            policy.names = {NameMode::FriendlyNameOnly, kNameOnlyRenamePeriod};
            break;
    }
}

MatrixCell cell_of(std::string_view defense, const std::string& threat, const Score& s) {
    return {std::string(defense), threat, s.precision, s.recall, std::nullopt, std::nullopt, std::nullopt};
}

}  // namespace

std::string_view to_string(Defense d) { return kDefenseNames[static_cast<std::size_t>(d)]; }

Defense parse_defense(std::string_view name) {
    for (std::size_t i = 0; i < kDefenseNames.size(); ++i) {
        if (kDefenseNames[i] == name) return static_cast<Defense>(i);
    }
    throw ArgumentError("unknown defense '" + std::string(name) + "'");
}

std::vector<Defense> parse_defense_list(std::string_view list) {
    if (list == "all") return {kAllDefenses.begin(), kAllDefenses.end()};
    std::vector<Defense> out{Defense::Baseline};
    std::stringstream ss{std::string(list)};
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        const Defense d = parse_defense(item);
        if (std::find(out.begin(), out.end(), d) == out.end()) out.push_back(d);
    }
    return out;
}

ScenarioConfig apply_defense(const ScenarioConfig& config, Defense defense) {
    ScenarioConfig c = config;
    if (defense == Defense::Baseline || defense == Defense::HitCounter || defense == Defense::GuestBook) return c;
    for (auto& p : c.people) {
        for (auto& d : p.devices) {
            DevicePolicy policy = effective_policy(d, p);
            apply_to_policy(policy, defense, c.horizon, mix(d.desc.id.value() ^ kRenamingSeedTweak));
            d.policy = std::move(policy);
        }
    }
    for (auto& crowd : c.crowds) {
        DevicePolicy policy = crowd.policy.value_or(DevicePolicy{});
        // Crowd seeds are diversified per member by the simulator.
        apply_to_policy(policy, defense, c.horizon, mix((std::uint64_t{crowd.oui} << 24) ^ kRenamingSeedTweak));
        crowd.policy = std::move(policy);
    }
    validate(c);
    return c;
}

std::vector<MatrixCell> score_run(const TraceBundle& bundle, std::string_view defense, const MatrixInputs& inputs) {
    const PosDatabase pos = PosDatabase::from_sales(bundle.truth);
    AttackParams params;
    AttackInputs side;
    side.pos = &pos;
    side.oui = inputs.oui;
    side.values = inputs.values;
    side.incidents = incident_queries(bundle.truth, params.incident_window);
    side.scanners = bundle.scanners;
    const auto outputs = run_attacks(bundle.sightings, bundle.config_digest, inputs.threats, params, side);
    const Metrics metrics = evaluate_against_truth(outputs, bundle.sightings, bundle);

    std::vector<MatrixCell> cells;
    for (const auto& [name, score] : metrics.rows) {
        MatrixCell cell = cell_of(defense, name, score);
        if (name == "location" && metrics.linkability) {
            cell.linkability = metrics.linkability->score;
            cell.link_raw = metrics.linkability->raw;
            cell.link_chance = metrics.linkability->chance;
        }
        cells.push_back(std::move(cell));
    }

    // Paired devices paging each other through resolved pseudonyms.
    std::size_t in_range = 0;
    std::size_t reached = 0;
    std::size_t attempts = 0;
    for (const auto& e : bundle.truth) {
        if (const auto* p = std::get_if<truth::PageAttempt>(&e.payload)) {
            ++attempts;
            if (p->in_range) ++in_range;
            if (p->in_range && p->reached) ++reached;
        }
    }
    if (attempts > 0) cells.push_back(cell_of(defense, "paired_paging", make_score(0, 0, reached, in_range)));

    if (defense == to_string(Defense::HitCounter) || defense == to_string(Defense::GuestBook)) {
        // Who discovered whom, per the adversary's own inquiry log.
        std::map<std::tuple<std::string, Tick, DeviceId>, DeviceId> wire_to_device;
        for (const auto& e : bundle.truth) {
            if (const auto* p = std::get_if<truth::Presence>(&e.payload)) wire_to_device[{p->scanner, e.tick, p->wire}] = p->device;
        }
        std::map<std::string, DeviceId> scanner_address;
        for (const auto& s : bundle.scanners) scanner_address[s.id] = s.address;
        std::set<std::tuple<DeviceId, DeviceId, Tick>> discovered;
        for (const auto& s : bundle.sightings) {
            if (s.via != SightingSource::Inquiry) continue;
            auto dev = wire_to_device.find({s.scanner_id, s.tick, s.observed_id});
            auto addr = scanner_address.find(s.scanner_id);
            if (dev != wire_to_device.end() && addr != scanner_address.end()) discovered.insert({dev->second, addr->second, s.tick});
        }
        std::set<std::tuple<DeviceId, DeviceId, Tick>> recorded;
        std::set<DeviceId> alerted;
        for (const auto& e : bundle.truth) {
            if (const auto* p = std::get_if<truth::PatchState>(&e.payload)) {
                if (p->hits > 0) alerted.insert(p->device);
                for (const auto& g : p->guest_book) recorded.insert({p->device, g.inquirer, g.tick});
            }
        }
        Score s;
        if (defense == to_string(Defense::HitCounter)) {
            std::set<DeviceId> gold;
            for (const auto& [d, a, t] : discovered) gold.insert(d);
            std::size_t hits = 0;
            for (DeviceId d : alerted) hits += gold.contains(d) ? 1 : 0;
            s = make_score(hits, alerted.size(), hits, gold.size());
        } else {
            std::size_t hits = 0;
            for (const auto& r : recorded) hits += discovered.contains(r) ? 1 : 0;
            s = make_score(hits, recorded.size(), hits, discovered.size());
        }
        cells.push_back(cell_of(defense, "patch_awareness", s));
    }
    return cells;
}

std::vector<MatrixCell> defense_matrix(const ScenarioConfig& config, std::uint64_t seed,
                                       const std::vector<Defense>& defenses, const MatrixInputs& inputs) {
    std::vector<std::future<std::vector<MatrixCell>>> runs;
    for (Defense d : defenses) {
        runs.push_back(std::async(std::launch::async, [&config, seed, d, &inputs] {
            const ScenarioConfig defended = apply_defense(config, d);
            return score_run(run(defended, seed), to_string(d), inputs);
        }));
    }
    std::vector<MatrixCell> cells;
    for (auto& f : runs) {
        auto part = f.get();
        cells.insert(cells.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
    }
    return cells;
}

void write_matrix_csv(std::ostream& out, const std::vector<MatrixCell>& cells) {
    out << "defense,threat,precision,recall,linkability,link_raw,link_chance\n";
    for (const auto& c : cells) {
        out << c.defense << ',' << c.threat << ',' << format_metric(c.precision) << ',' << format_metric(c.recall) << ','
            << format_metric(c.linkability) << ',' << format_metric(c.link_raw) << ',' << format_metric(c.link_chance)
            << '\n';
    }
}

void write_file_atomic(const fs::path& path, std::string_view content) {
    fs::path tmp = path;
    tmp += ".partial";
    OutputSet::write_plain(tmp, content);
    fs::rename(tmp, path);
}

std::uint64_t read_salt(const fs::path& path) {
    require_file(path, "salt file");
    std::ifstream in(path);
    std::string text;
    in >> text;
    try {
        std::size_t used = 0;
        const std::uint64_t salt = std::stoull(text, &used, 0);
        if (used != text.size()) throw std::invalid_argument("trailing characters");
        return salt;
    } catch (const std::logic_error&) {
        throw ParseError("salt file " + path.string() + " must hold one decimal or 0x-hex integer");
    }
}

int cmd_simulate(const SimulateOptions& opts, std::ostream& err) {
    return guarded(err, [&] {
        require_file(opts.scenario, "scenario");
        const ScenarioConfig config = load_scenario(opts.scenario);
        const std::uint64_t seed = opts.seed.value_or(default_seed(config));
        const TraceBundle bundle = run(config, seed);

        std::ostringstream pos;
        PosDatabase::from_sales(bundle.truth).write(pos);

        OutputSet outputs(opts.out);
        outputs.add("trace.jsonl", serialize_trace(bundle));
        outputs.add("pos_db.txt", pos.str());
        json manifest = base_manifest("simulate", opts.out);
        manifest["scenario"] = opts.scenario.generic_string();
        manifest["seed"] = seed;
        manifest["config_digest"] = *bundle.config_digest;
        outputs.commit(manifest);
        return kExitOk;
    });
}

int cmd_attack(const AttackOptions& opts, std::ostream& err) {
    return guarded(err, [&] {
        const std::set<Threat> threats = parse_threat_list(opts.threats);
        require_file(opts.trace, "trace");
        const TraceBundle bundle = load_trace(opts.trace);

        AttackParams params;
        if (opts.window) {
            if (*opts.window < 1) throw ArgumentError("--window must be >= 1");
            params.mining.window = *opts.window;
        }
        if (opts.epoch_length) {
            if (*opts.epoch_length < 1) throw ArgumentError("--epoch-length must be >= 1");
            params.epoch_length = *opts.epoch_length;
        }
        if (opts.name_aware) params.matcher = LinkMatcher::NameAware;
        if (params.transactions.window < params.mining.window) params.transactions.window = params.mining.window;

        std::optional<PosDatabase> pos;
        if (opts.pos_db) {
            require_file(*opts.pos_db, "point-of-sale database");
            pos = PosDatabase::load(*opts.pos_db);
        }
        const OuiTable oui = load_oui(opts.oui);
        const ValueTable values = load_values(opts.values);

        AttackInputs inputs;
        inputs.pos = pos ? &*pos : nullptr;
        inputs.oui = &oui;
        inputs.values = &values;
        inputs.incidents = incident_queries(bundle.truth, params.incident_window);
        for (const auto& text : opts.incidents) inputs.incidents.push_back(parse_incident(text, params.incident_window));
        inputs.scanners = bundle.scanners;

        const AttackOutputs outputs = run_attacks(bundle.sightings, bundle.config_digest, threats, params, inputs);

        OutputSet files(opts.out);
        files.add("report.jsonl", lines_of(report_records(outputs)));
        json manifest = base_manifest("attack", opts.out);
        manifest["trace"] = opts.trace.generic_string();
        manifest["threats"] = opts.threats;
        manifest["pos_db"] = opts.pos_db ? json(opts.pos_db->generic_string()) : json(nullptr);
        manifest["window"] = params.mining.window;
        manifest["epoch_length"] = params.epoch_length;
        manifest["matcher"] = opts.name_aware ? "name_aware" : "id_equality";
        manifest["incidents"] = opts.incidents;
        manifest["config_digest"] = bundle.config_digest ? json(*bundle.config_digest) : json(nullptr);
        manifest["seed"] = bundle.seed ? json(*bundle.seed) : json(nullptr);
        manifest["metrics"] = bundle.has_truth();
        if (bundle.has_truth()) {
            std::ostringstream csv;
            write_metrics_csv(csv, evaluate_against_truth(outputs, bundle.sightings, bundle));
            files.add("metrics.csv", csv.str());
        }
        files.commit(manifest);
        return kExitOk;
    });
}

int cmd_defense_matrix(const DefenseMatrixOptions& opts, std::ostream& err) {
    return guarded(err, [&] {
        const std::vector<Defense> defenses = parse_defense_list(opts.defenses);
        const std::set<Threat> threats = parse_threat_list(opts.threats);
        require_file(opts.scenario, "scenario");
        const ScenarioConfig config = load_scenario(opts.scenario);
        const std::uint64_t seed = opts.seed.value_or(default_seed(config));
        const OuiTable oui = load_oui(opts.oui);
        const ValueTable values = load_values(opts.values);

        MatrixInputs inputs{&oui, &values, threats};
        std::ostringstream csv;
        write_matrix_csv(csv, defense_matrix(config, seed, defenses, inputs));

        OutputSet files(opts.out);
        files.add("matrix.csv", csv.str());
        json manifest = base_manifest("defense-matrix", opts.out);
        manifest["scenario"] = opts.scenario.generic_string();
        manifest["seed"] = seed;
        manifest["config_digest"] = config_digest(config, seed);
        json names = json::array();
        for (Defense d : defenses) names.push_back(std::string(to_string(d)));
        manifest["defenses"] = std::move(names);
        manifest["threats"] = opts.threats;
        files.commit(manifest);
        return kExitOk;
    });
}

int cmd_csi(const CsiOptions& opts, std::ostream& err) {
    return guarded(err, [&] {
        const std::string& sub = opts.subcommand;
        if (sub != "ingest" && sub != "match" && sub != "presence" && sub != "classify") {
            throw ArgumentError("unknown csi subcommand '" + sub + "'");
        }
        auto salt = [&]() -> std::uint64_t {
            if (!opts.salt_file) throw ArgumentError("csi " + sub + " needs --salt-file");
            return read_salt(*opts.salt_file);
        };
        // Queries other than match never need the salt once a store exists.
        auto open_store = [&](bool need_salt) {
            if (opts.store) {
                require_file(*opts.store, "store");
                std::ifstream in(*opts.store);
                return TraceStore::read(in, need_salt ? salt() : 0);
            }
            if (!opts.trace) throw ArgumentError("csi " + sub + " needs --store or --trace");
            require_file(*opts.trace, "trace");
            return ingest(load_trace(*opts.trace).sightings, salt());
        };

        OutputSet files(opts.out);
        json manifest = base_manifest("csi", opts.out);
        manifest["subcommand"] = sub;
        manifest["trace"] = opts.trace ? json(opts.trace->generic_string()) : json(nullptr);
        manifest["store"] = opts.store ? json(opts.store->generic_string()) : json(nullptr);
        manifest["salt_file"] = opts.salt_file ? json(opts.salt_file->generic_string()) : json(nullptr);

        if (sub == "ingest") {
            if (!opts.trace) throw ArgumentError("csi ingest needs --trace");
            require_file(*opts.trace, "trace");
            const TraceStore store = ingest(load_trace(*opts.trace).sightings, salt());
            std::ostringstream s;
            store.write(s);
            files.add("store.jsonl", s.str());
        } else if (sub == "match") {
            if (!opts.candidate) throw ArgumentError("csi match needs --candidate");
            const DeviceId candidate = parse_device_id(*opts.candidate);
            const TraceStore store = open_store(true);
            std::vector<json> rows;
            for (const auto& r : match_candidate(candidate, store)) rows.push_back(to_json(r));
            files.add("matches.jsonl", lines_of(rows));
            manifest["candidate"] = *opts.candidate;
        } else if (sub == "presence") {
            if (!opts.scanner || !opts.window) throw ArgumentError("csi presence needs --scanner and --window t0:t1");
            const auto [t0, t1] = parse_window(*opts.window);
            const TraceStore store = open_store(false);
            std::vector<json> rows;
            for (HashedId h : presence_window(store, *opts.scanner, t0, t1)) {
                rows.push_back({{"kind", "eyewitness"}, {"digest", format_hashed_id(h)}, {"scanner_id", *opts.scanner},
                                {"t0", t0}, {"t1", t1}});
            }
            files.add("presence.jsonl", lines_of(rows));
            manifest["scanner"] = *opts.scanner;
            manifest["window"] = *opts.window;
        } else {
            if (opts.ticks_per_hour < 1) throw ArgumentError("--ticks-per-hour must be >= 1");
            const TraceStore store = open_store(false);
            const RoleRules rules;
            std::vector<json> rows;
            for (HashedId h : store.subjects()) {
                const auto f = appearance_features(store, h, opts.ticks_per_hour, rules);
                rows.push_back({{"kind", "role"},
                                {"digest", format_hashed_id(h)},
                                {"label", std::string(to_string(classify_role(f, rules)))},
                                {"n_sightings", f.n_sightings},
                                {"n_distinct_scanners", f.n_distinct_scanners},
                                {"night_fraction", f.night_fraction},
                                {"hour_histogram", f.hour_histogram}});
            }
            files.add("roles.jsonl", lines_of(rows));
            manifest["ticks_per_hour"] = opts.ticks_per_hour;
        }
        files.commit(manifest);
        return kExitOk;
    });
}

void print_schema(std::ostream& out) {
    json schema = record_schema();
    schema["hashed-sighting"] = {{"digest", "16 lowercase hex digits"}, {"scanner_id", "string"}, {"tick", "integer"},
                                 {"class", "0xHHHHHH"}, {"name", "string"}};
    out << schema.dump(2) << '\n';
}

}  // namespace btpriv
