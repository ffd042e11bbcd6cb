#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nbrselect/errors.hpp"
#include "nbrselect/selection.hpp"
#include "nbrselect/toy_lab.hpp"
#include "nbrselect/util.hpp"

namespace {

using namespace nbrselect;

std::set<Criterion> parse_criteria_list(const std::string& text) {
    std::set<Criterion> out;
    std::string::size_type start = 0;
    while (start <= text.size()) {
        const auto comma = text.find(',', start);
        const auto end = comma == std::string::npos ? text.size() : comma;
        const std::string name = text.substr(start, end - start);
        if (!name.empty()) {
            const auto c = criterion_from_name(name);
            if (!c)
                throw ValidationError(
                    "unknown criterion '" + name +
                    "' (expected one of: snd, snd_no_softmax, c_ent, source_risk, iwv, dev)");
            out.insert(*c);
        }
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    if (out.empty()) throw ValidationError("no criteria requested");
    return out;
}

void print_report(const SelectionReport& report, const std::set<Criterion>& criteria) {
    std::cout << "scores:\n";
    for (const auto& cp : report.checkpoints) {
        std::cout << "  " << cp.key.run_id << " @ " << cp.key.iteration << ":";
        for (const auto& score : cp.scores)
            std::cout << " " << criterion_name(score.criterion) << "="
                      << to_shortest_string(score.value);
        if (cp.oracle_accuracy)
            std::cout << " [oracle_accuracy=" << to_shortest_string(*cp.oracle_accuracy)
                      << "]";
        std::cout << "\n";
    }
    std::cout << "winners:\n";
    for (Criterion c : criteria) {
        const auto it = report.winners.find(c);
        if (it == report.winners.end()) continue;
        std::cout << "  " << criterion_name(c) << ": " << it->second.run_id << " @ "
                  << it->second.iteration << "\n";
    }
    if (report.oracle_winner)
        std::cout << "oracle winner: " << report.oracle_winner->run_id << " @ "
                  << report.oracle_winner->iteration << "\n";
}

struct ScoreArgs {
    std::string manifest;
    std::string criteria = "snd";
    std::string out_json;
    std::string out_csv;
    SndConfig snd_config;
    DevConfig dev_config;
};

int cmd_score(const ScoreArgs& args) {
    const auto criteria = parse_criteria_list(args.criteria);
    const auto manifest = load_manifest(args.manifest);
    const auto report = score_manifest(manifest, criteria, args.snd_config, args.dev_config);
    print_report(report, criteria);
    if (!args.out_json.empty() || !args.out_csv.empty()) {
        const auto json_path = args.out_json.empty() ? args.out_csv + ".json" : args.out_json;
        const auto csv_path = args.out_csv.empty() ? args.out_json + ".csv" : args.out_csv;
        emit_report(report, json_path, csv_path);
        std::cout << "wrote " << json_path << " and " << csv_path << "\n";
    }
    return 0;
}

struct SelectSourceArgs {
    std::vector<std::string> dumps;
    SndConfig snd_config;
    std::string out;
};

int cmd_select_source(const SelectSourceArgs& args) {
    std::map<std::string, ProbMatrix> candidates;
    for (const auto& path : args.dumps) {
        const auto name = std::filesystem::path(path).stem().string();
        if (name.empty())
            throw ValidationError("cannot derive a candidate name from '" + path + "'");
        if (!candidates.emplace(name, load_prob_matrix(path)).second)
            throw ValidationError("duplicate candidate name '" + name + "'");
    }
    std::map<std::string, double> values;
    for (const auto& [name, probs] : candidates)
        values[name] = snd(prepare_features(probs), args.snd_config).value;
    const auto winner = select_source_domain(candidates, args.snd_config);
    for (const auto& [name, value] : values)
        std::cout << "  " << name << ": snd=" << to_shortest_string(value) << "\n";
    std::cout << "selected source: " << winner << "\n";
    if (!args.out.empty()) {
        std::string text = "candidate,snd\n";
        for (const auto& [name, value] : values)
            text += name + "," + to_shortest_string(value) + "\n";
        text += "selected," + winner + "\n";
        std::ofstream file(args.out, std::ios::binary | std::ios::trunc);
        if (!file) throw IoError("cannot open '" + args.out + "' for writing");
        file << text;
        if (!file) throw IoError("failed writing '" + args.out + "'");
    }
    return 0;
}

struct ToyArgs {
    std::string experiment;
    std::string out_dir;
    ToyConfig config;
    SndConfig snd_config;
    bool n_per_class_set = false;
    bool epochs_set = false;
};

int cmd_toy(const ToyArgs& args) {
    const auto experiment = experiment_from_name(args.experiment);
    if (!experiment) {
        std::string names;
        for (const auto* n : experiment_names()) names += std::string(" ") + n;
        throw ValidationError("unknown experiment '" + args.experiment +
                              "' (expected one of:" + names + ")");
    }
    ToyConfig config = args.config;
    if (!args.n_per_class_set) {
        // Larger fixtures where the experiment's claim is about sample count.
        if (*experiment == ToyExperiment::mode_count) config.n_per_class = 900;
        if (*experiment == ToyExperiment::subsample_sweep) config.n_per_class = 1000;
    }
    if (!args.epochs_set) {
        // The adversarial split needs the longer budget to sharpen both arms.
        if (*experiment == ToyExperiment::false_alignment ||
            *experiment == ToyExperiment::temperature_sweep)
            config.epochs = 1000;
    }
    const auto record = run_experiment(*experiment, config, args.snd_config,
                                       args.out_dir.empty()
                                           ? std::filesystem::path{}
                                           : std::filesystem::path(args.out_dir));
    std::cout << experiment_csv(record);
    std::cout << "result: " << (record.passed ? "PASSED" : "FAILED") << " - "
              << record.detail << "\n";
    if (!args.out_dir.empty()) std::cout << "outputs in " << args.out_dir << "\n";
    return 0;
}

struct ConvertArgs {
    std::string in;
    std::string out;
    std::string kind = "probs";
};

int cmd_convert(const ConvertArgs& args) {
    if (args.kind == "probs") {
        const auto m = load_prob_matrix(args.in);
        save_prob_matrix(args.out, m);
        std::cout << "wrote " << m.n_samples << " x " << m.n_classes
                  << " probabilities to " << args.out << "\n";
    } else if (args.kind == "logits") {
        const auto m = load_logit_matrix(args.in);
        save_logit_matrix(args.out, m);
        std::cout << "wrote " << m.n_samples << " x " << m.n_classes << " logits to "
                  << args.out << "\n";
    } else {
        throw ValidationError("unknown kind '" + args.kind + "' (expected probs or logits)");
    }
    return 0;
}

void add_snd_options(CLI::App* cmd, SndConfig& config) {
    cmd->add_option("--tau", config.temperature,
                    "similarity softmax temperature (default 0.05)");
    cmd->add_option("--block-rows", config.block_rows,
                    "row-tile height of the blocked kernel");
    cmd->add_option("--subsample-pixels", config.subsample_pixels,
                    "pixels scored per segmentation image (default 100)");
    cmd->add_option("--seed", config.rng_seed, "rng seed for pixel subsampling");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Unsupervised checkpoint and source selection from exported predictions"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "nbrselect 1.0.0");

    ScoreArgs score_args;
    auto* score_cmd = app.add_subcommand(
        "score", "Score every checkpoint in a manifest and pick per-criterion winners");
    score_cmd->add_option("--manifest", score_args.manifest, "manifest JSON path")
        ->required();
    score_cmd->add_option(
        "--criteria", score_args.criteria,
        "comma-separated list: snd, snd_no_softmax, c_ent, source_risk, iwv, dev");
    score_cmd->add_option("--out-json", score_args.out_json, "write the report as JSON");
    score_cmd->add_option("--out-csv", score_args.out_csv, "write the report as CSV");
    add_snd_options(score_cmd, score_args.snd_config);
    score_cmd->add_option("--dev-epochs", score_args.dev_config.discriminator_epochs,
                          "domain discriminator epochs (default 200)");
    score_cmd->add_option("--dev-lr", score_args.dev_config.discriminator_lr,
                          "domain discriminator learning rate (default 0.1)");
    score_cmd->add_option("--dev-l2", score_args.dev_config.l2_penalty,
                          "domain discriminator L2 penalty (default 1e-3)");
    score_cmd->add_option("--dev-clip", score_args.dev_config.weight_clip,
                          "importance weight cap (default 20)");
    score_cmd->add_option("--dev-seed", score_args.dev_config.rng_seed,
                          "domain discriminator init seed");

    SelectSourceArgs select_args;
    auto* select_cmd = app.add_subcommand(
        "select-source",
        "Pick the best source domain from per-candidate prediction dumps");
    select_cmd
        ->add_option("dumps", select_args.dumps,
                     "two or more probability dumps; the file stem names the candidate")
        ->required()
        ->expected(2, -1);
    select_cmd->add_option("--out", select_args.out, "write a candidate,snd CSV");
    add_snd_options(select_cmd, select_args.snd_config);

    ToyArgs toy_args;
    auto* toy_cmd =
        app.add_subcommand("toy", "Run a self-contained two-gaussians experiment");
    toy_cmd->add_option("--experiment", toy_args.experiment,
                        "false_alignment, variance_sweep, mode_count, "
                        "degenerate_collapse, temperature_sweep or subsample_sweep")
        ->required();
    toy_cmd->add_option("--out-dir", toy_args.out_dir,
                        "directory for the CSV, dumps and manifests");
    auto* npc = toy_cmd->add_option("--n-per-class", toy_args.config.n_per_class,
                                    "training samples per class");
    auto* epochs_opt = toy_cmd->add_option(
        "--epochs", toy_args.config.epochs,
        "training epochs (default 500; 1000 for the false-alignment fixture)");
    toy_cmd->add_option("--lambda", toy_args.config.lambda_adv,
                        "adaptation strength (default 1)");
    toy_cmd->add_option("--lr", toy_args.config.learning_rate,
                        "learning rate (default 0.05)");
    toy_cmd->add_option("--hidden", toy_args.config.hidden_units,
                        "hidden units (default 15)");
    toy_cmd->add_option("--sigma", toy_args.config.source_std,
                        "gaussian standard deviation (default 1; experiments that "
                        "pin their own geometry ignore it)");
    toy_cmd->add_option("--toy-seed", toy_args.config.rng_seed,
                        "base training seed; seeds seed..seed+2 are run");
    add_snd_options(toy_cmd, toy_args.snd_config);

    ConvertArgs convert_args;
    auto* convert_cmd =
        app.add_subcommand("convert", "Convert a CSV prediction table to the binary form");
    convert_cmd->add_option("--in", convert_args.in, "input CSV (or binary) path")
        ->required();
    convert_cmd->add_option("--out", convert_args.out, "output binary path")->required();
    convert_cmd->add_option("--kind", convert_args.kind, "probs (default) or logits");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (score_cmd->parsed()) return cmd_score(score_args);
        if (select_cmd->parsed()) return cmd_select_source(select_args);
        if (toy_cmd->parsed()) {
            toy_args.n_per_class_set = npc->count() > 0;
            toy_args.epochs_set = epochs_opt->count() > 0;
            return cmd_toy(toy_args);
        }
        if (convert_cmd->parsed()) return cmd_convert(convert_args);
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const FormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
