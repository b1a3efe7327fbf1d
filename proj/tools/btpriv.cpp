#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "btpriv/commands.hpp"

using namespace btpriv;

int main(int argc, char** argv) {
    CLI::App app{"Bluetooth discovery privacy simulator and adversary toolkit"};
    app.require_subcommand(0, 1);
    bool schema = false;
    app.add_flag("--print-schema", schema, "Print the line-record field schema and exit");

    SimulateOptions sim;
    auto* simulate = app.add_subcommand("simulate", "Run a scenario and write its trace");
    simulate->add_option("--scenario", sim.scenario, "Scenario JSON")->required();
    simulate->add_option("--seed", sim.seed, "Run seed (default: scenario seed, else 1)");
    simulate->add_option("--out", sim.out, "Output directory")->required();

    AttackOptions atk;
    auto* attack = app.add_subcommand("attack", "Run threats over a trace");
    attack->add_option("--trace", atk.trace, "Trace file")->required();
    attack->add_option("--threats", atk.threats, "Comma list or 'all'");
    attack->add_option("--pos-db", atk.pos_db, "Point-of-sale ledger");
    attack->add_option("--oui", atk.oui, "OUI table");
    attack->add_option("--values", atk.values, "Value table");
    attack->add_option("--window", atk.window, "Co-occurrence window in ticks");
    attack->add_option("--epoch-length", atk.epoch_length, "Linkability epoch length in ticks");
    attack->add_flag("--name-aware", atk.name_aware, "Link epochs by name and class as well as id");
    attack->add_option("--incident", atk.incidents, "Extra incident query scanner@tick");
    attack->add_option("--out", atk.out, "Output directory")->required();

    DefenseMatrixOptions dm;
    auto* matrix = app.add_subcommand("defense-matrix", "Score every threat under each defense");
    matrix->add_option("--scenario", dm.scenario, "Scenario JSON")->required();
    matrix->add_option("--seed", dm.seed, "Run seed (default: scenario seed, else 1)");
    matrix->add_option("--defenses", dm.defenses, "Comma list or 'all'");
    matrix->add_option("--threats", dm.threats, "Comma list or 'all'");
    matrix->add_option("--oui", dm.oui, "OUI table");
    matrix->add_option("--values", dm.values, "Value table");
    matrix->add_option("--out", dm.out, "Output directory")->required();

    CsiOptions csi;
    auto* csi_cmd = app.add_subcommand("csi", "Hashed storage and eyewitness queries");
    csi_cmd->add_option("subcommand", csi.subcommand, "ingest | match | presence | classify")->required();
    csi_cmd->add_option("--trace", csi.trace, "Trace file");
    csi_cmd->add_option("--store", csi.store, "Hashed store file");
    csi_cmd->add_option("--salt-file", csi.salt_file, "File holding the store salt");
    csi_cmd->add_option("--candidate", csi.candidate, "Device id to match");
    csi_cmd->add_option("--scanner", csi.scanner, "Scanner id for presence queries");
    csi_cmd->add_option("--window", csi.window, "Closed tick window t0:t1");
    csi_cmd->add_option("--ticks-per-hour", csi.ticks_per_hour, "Ticks per hour for role inference");
    csi_cmd->add_option("--out", csi.out, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitValidation;
    }

    try {
        if (schema) {
            print_schema(std::cout);
            return kExitOk;
        }
        if (simulate->parsed()) return cmd_simulate(sim, std::cerr);
        if (attack->parsed()) return cmd_attack(atk, std::cerr);
        if (matrix->parsed()) return cmd_defense_matrix(dm, std::cerr);
        if (csi_cmd->parsed()) return cmd_csi(csi, std::cerr);
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return kExitInternal;
    }
    std::cerr << app.help();
    return kExitValidation;
}
