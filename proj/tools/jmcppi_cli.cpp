// Command-line front end: one subcommand per pipeline step.

#include "jmcppi/harness.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace jmcppi;

namespace {

// Flags mirroring RunConfig fields. Anything left unset keeps the value from
// --config (or the built-in default).
struct Overrides {
    std::string config_path;
    std::optional<std::string> proteins, ppi, property_table, cache_dir;
    std::optional<std::string> split_scheme;
    std::optional<std::uint64_t> split_seed, seed;
    std::optional<double> radius;
    std::optional<int> k;
    std::optional<int> encoder_hidden, encoder_heads, encoder_layers;
    std::optional<double> encoder_dropout;
    std::optional<int> interaction_hidden, interaction_layers;
    std::optional<double> interaction_dropout;
    std::optional<double> mask_rate, delta, perturb_rate, node_rate, edge_rate, tau;
    std::optional<double> gamma_str, gamma_in_con, lr, weight_decay, threshold;
    std::optional<int> stage1_epochs, stage1_batch, stage2_epochs;
    bool raw_contrastive = false;
    std::vector<std::string> ablation;

    RunConfig resolve() const {
        RunConfig c = config_path.empty() ? RunConfig{} : RunConfig::load(config_path);
        auto set = [](auto& field, const auto& opt) {
            if (opt) field = *opt;
        };
        set(c.proteins_path, proteins);
        set(c.ppi_path, ppi);
        set(c.property_table_path, property_table);
        set(c.graph_cache_dir, cache_dir);
        if (split_scheme) c.split_scheme = parse_split_scheme(*split_scheme);
        set(c.split_seed, split_seed);
        set(c.seed, seed);
        set(c.contact.radius, radius);
        set(c.contact.k, k);
        set(c.encoder.hidden, encoder_hidden);
        set(c.encoder.heads, encoder_heads);
        set(c.encoder.layers, encoder_layers);
        set(c.encoder.dropout, encoder_dropout);
        set(c.interaction.hidden, interaction_hidden);
        set(c.interaction.layers, interaction_layers);
        set(c.interaction.dropout, interaction_dropout);
        set(c.mask_rate, mask_rate);
        set(c.delta, delta);
        set(c.perturb_rate, perturb_rate);
        if (node_rate) c.node_perturb_rate = *node_rate;
        if (edge_rate) c.edge_perturb_rate = *edge_rate;
        set(c.tau, tau);
        set(c.gamma_str, gamma_str);
        set(c.gamma_in_con, gamma_in_con);
        set(c.learning_rate, lr);
        set(c.weight_decay, weight_decay);
        set(c.threshold, threshold);
        set(c.stage1_epochs, stage1_epochs);
        set(c.stage1_batch, stage1_batch);
        set(c.stage2_epochs, stage2_epochs);
        if (raw_contrastive) c.contrastive_normalize = false;
        for (const auto& name : ablation) c.ablation.set(name);
        c.validate();
        return c;
    }
};

void add_data_options(CLI::App* app, Overrides& o) {
    app->add_option("--config", o.config_path, "JSON run configuration")->check(CLI::ExistingFile);
    app->add_option("--proteins", o.proteins, "protein JSON-lines file");
    app->add_option("--ppi", o.ppi, "interaction TSV file");
    app->add_option("--property-table", o.property_table, "amino-acid property table (TSV)");
    app->add_option("--cache-dir", o.cache_dir, "structure graph cache directory");
    app->add_option("--radius", o.radius, "radial contact cutoff in angstrom");
    app->add_option("-k,--knn", o.k, "nearest neighbours per residue");
}

void add_split_options(CLI::App* app, Overrides& o) {
    app->add_option("--scheme", o.split_scheme, "random, bfs or dfs");
    app->add_option("--split-seed", o.split_seed, "seed of the pair partition");
}

void add_model_options(CLI::App* app, Overrides& o) {
    app->add_option("--encoder-hidden", o.encoder_hidden);
    app->add_option("--encoder-heads", o.encoder_heads);
    app->add_option("--encoder-layers", o.encoder_layers);
    app->add_option("--encoder-dropout", o.encoder_dropout);
    app->add_option("--interaction-hidden", o.interaction_hidden);
    app->add_option("--interaction-layers", o.interaction_layers);
    app->add_option("--interaction-dropout", o.interaction_dropout);
    app->add_option("--mask-rate", o.mask_rate);
    app->add_option("--delta", o.delta, "exponent of the masked cosine loss");
    app->add_option("--perturb-rate", o.perturb_rate, "node and edge perturbation rate per view");
    app->add_option("--node-perturb-rate", o.node_rate);
    app->add_option("--edge-perturb-rate", o.edge_rate);
    app->add_option("--tau", o.tau, "contrastive temperature");
    app->add_flag("--raw-contrastive", o.raw_contrastive, "inner products without row normalization");
    app->add_option("--gamma-str", o.gamma_str);
    app->add_option("--gamma-in-con", o.gamma_in_con);
    app->add_option("--lr", o.lr, "learning rate");
    app->add_option("--weight-decay", o.weight_decay);
    app->add_option("--stage1-epochs", o.stage1_epochs);
    app->add_option("--stage1-batch", o.stage1_batch, "proteins per stage-1 batch");
    app->add_option("--stage2-epochs", o.stage2_epochs);
    app->add_option("--threshold", o.threshold, "decision threshold on probabilities");
    app->add_option("--ablation", o.ablation, "ablation flag names")->delimiter(',');
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

template <typename Writer>
void write_with(const fs::path& path, Writer&& writer) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    writer(out);
}

SplitSpec split_for(const Dataset& data, const RunConfig& config, const std::string& split_path) {
    SplitSpec split = split_path.empty() ? make_split(data.interactions, data.proteins, config) : load_split(split_path);
    split.validate(static_cast<Index>(data.interactions.size()));
    return split;
}

json row_json(const RowVector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

RowVector row_from_json(const json& j) {
    const auto values = j.get<std::vector<double>>();
    RowVector v(static_cast<Index>(values.size()));
    for (std::size_t i = 0; i < values.size(); ++i) v(static_cast<Index>(i)) = values[i];
    return v;
}

/// Model, standardizer and run configuration recovered from a stage-1 checkpoint.
struct Stage1Checkpoint {
    RunConfig config;
    FeatureStandardizer standardizer;
    std::unique_ptr<ResidueAutoencoder> model;
};

Stage1Checkpoint load_stage1(const fs::path& path, const AminoAcidPropertyTable& table) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
    const json whole = json::parse(in);
    const json& meta = whole.at("metadata");
    Stage1Checkpoint ck;
    ck.config = RunConfig::from_json(meta.at("config").dump());
    ck.standardizer.mean = row_from_json(meta.at("standardizer").at("mean"));
    ck.standardizer.scale = row_from_json(meta.at("standardizer").at("scale"));
    if (meta.at("property_table_hash").get<std::uint64_t>() != table.hash()) {
        throw std::invalid_argument("checkpoint was trained with a different property table");
    }
    ck.model = std::make_unique<ResidueAutoencoder>(ck.config.encoder, 0);
    load_checkpoint(path, "stage1", ck.model->parameters());
    return ck;
}

/// Interaction graph over standardized pooled vectors, statistics from training proteins.
ProteinInteractionGraph interaction_graph_for(const Dataset& data, const SplitSpec& split, const fs::path& pooled) {
    const EmbeddingTable table = load_embeddings(pooled);
    return build_interaction_graph(data.interactions,
                                   standardize_embeddings(table, training_protein_ids(data.interactions, split)));
}

std::span<const Index> subset_pairs(const SplitSpec& split, const std::string& which) {
    if (which == "train") return split.train;
    if (which == "val") return split.val;
    if (which == "test") return split.test;
    throw std::invalid_argument("unknown pair subset '" + which + "' (train, val, test)");
}

void print_sizes(const SplitSpec& split) {
    std::cout << "split " << to_string(split.scheme) << " seed " << split.seed << ": train " << split.train.size()
              << ", val " << split.val.size() << ", test " << split.test.size() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Two-stage protein interaction prediction: residue-graph pretraining and interaction inference"};
    app.require_subcommand(1);

    // synth-data
    SyntheticConfig synth;
    std::string synth_out;
    auto* synth_cmd = app.add_subcommand("synth-data", "write a synthetic protein/interaction dataset");
    synth_cmd->add_option("--out-dir", synth_out, "output directory")->required();
    synth_cmd->add_option("--proteins", synth.proteins, "protein count");
    synth_cmd->add_option("--pairs", synth.pairs, "pair count");
    synth_cmd->add_option("--min-length", synth.min_length);
    synth_cmd->add_option("--max-length", synth.max_length);
    synth_cmd->add_option("--same-family-bias", synth.same_family_bias);
    synth_cmd->add_option("--seed", synth.seed, "generator seed")->required();

    // build-graphs
    Overrides graphs_o;
    auto* graphs_cmd = app.add_subcommand("build-graphs", "build and cache residue structure graphs");
    add_data_options(graphs_cmd, graphs_o);

    // split
    Overrides split_o;
    std::string split_out;
    auto* split_cmd = app.add_subcommand("split", "partition interaction pairs into train/val/test");
    add_data_options(split_cmd, split_o);
    add_split_options(split_cmd, split_o);
    split_cmd->add_option("--out", split_out, "split JSON file")->required();

    // pretrain
    Overrides pre_o;
    std::string pre_split, pre_out;
    auto* pre_cmd = app.add_subcommand("pretrain", "stage 1: masked residue-graph reconstruction");
    add_data_options(pre_cmd, pre_o);
    add_split_options(pre_cmd, pre_o);
    add_model_options(pre_cmd, pre_o);
    pre_cmd->add_option("--seed", pre_o.seed, "training seed")->required();
    pre_cmd->add_option("--split", pre_split, "split JSON file (computed from the config when absent)");
    pre_cmd->add_option("--out-dir", pre_out, "output directory")->required();

    // train
    Overrides train_o;
    std::string train_split, train_pooled, train_out;
    auto* train_cmd = app.add_subcommand("train", "stage 2: interaction model with contrastive views");
    add_data_options(train_cmd, train_o);
    add_split_options(train_cmd, train_o);
    add_model_options(train_cmd, train_o);
    train_cmd->add_option("--seed", train_o.seed, "training seed")->required();
    train_cmd->add_option("--split", train_split, "split JSON file (computed from the config when absent)");
    train_cmd->add_option("--pooled", train_pooled, "pooled protein table from pretrain")->required();
    train_cmd->add_option("--out-dir", train_out, "output directory")->required();

    // evaluate
    Overrides eval_o;
    std::string eval_split, eval_pooled, eval_ckpt, eval_out, eval_subset = "test";
    auto* eval_cmd = app.add_subcommand("evaluate", "score a stage-2 checkpoint");
    add_data_options(eval_cmd, eval_o);
    add_split_options(eval_cmd, eval_o);
    eval_cmd->add_option("--split", eval_split, "split JSON file (computed from the config when absent)");
    eval_cmd->add_option("--pooled", eval_pooled, "pooled protein table from pretrain")->required();
    eval_cmd->add_option("--checkpoint", eval_ckpt, "stage-2 checkpoint")->required();
    eval_cmd->add_option("--subset", eval_subset, "train, val or test");
    eval_cmd->add_option("--threshold", eval_o.threshold);
    eval_cmd->add_option("--out-dir", eval_out, "output directory")->required();

    // ablate
    Overrides abl_o;
    std::string abl_split, abl_out;
    std::vector<std::string> abl_cells;
    auto* abl_cmd = app.add_subcommand("ablate", "full runs over a grid of ablation flag sets");
    add_data_options(abl_cmd, abl_o);
    add_split_options(abl_cmd, abl_o);
    add_model_options(abl_cmd, abl_o);
    abl_cmd->add_option("--seed", abl_o.seed, "training seed")->required();
    abl_cmd->add_option("--split", abl_split, "split JSON file (computed from the config when absent)");
    abl_cmd->add_option("--cell", abl_cells,
                        "one grid cell as comma-separated flag names, 'baseline' for none; repeatable");
    abl_cmd->add_option("--out", abl_out, "ablation table JSON")->required();

    // export-embeddings
    Overrides exp_o;
    std::string exp_ckpt, exp_out;
    auto* exp_cmd = app.add_subcommand("export-embeddings", "pooled protein vectors from a stage-1 checkpoint");
    add_data_options(exp_cmd, exp_o);
    exp_cmd->add_option("--checkpoint", exp_ckpt, "stage-1 checkpoint")->required();
    exp_cmd->add_option("--out", exp_out, "embedding TSV")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*synth_cmd) {
            const Dataset data = synth_dataset(synth);
            write_with(fs::path(synth_out) / "proteins.jsonl",
                       [&](std::ostream& out) { write_proteins(out, data.proteins); });
            write_with(fs::path(synth_out) / "ppi.tsv", [&](std::ostream& out) { write_ppi(out, data.interactions); });
            std::cout << "wrote " << data.proteins.size() << " proteins and " << data.interactions.size()
                      << " pairs to " << synth_out << "\n";
        } else if (*graphs_cmd) {
            RunConfig config = graphs_o.resolve();
            if (config.graph_cache_dir.empty()) throw std::invalid_argument("build-graphs needs --cache-dir");
            const Dataset data = load_dataset(config);
            const auto graphs = build_graphs(data, config);
            std::size_t seq = 0, rad = 0, knn = 0;
            for (const auto& g : graphs) {
                seq += g.edges_seq.size();
                rad += g.edges_rad.size();
                knn += g.edges_knn.size();
            }
            std::cout << graphs.size() << " graphs in " << config.graph_cache_dir << "; directed edges: sequential "
                      << seq << ", radial " << rad << ", knn " << knn << "\n";
        } else if (*split_cmd) {
            const RunConfig config = split_o.resolve();
            const Dataset data = load_dataset(config);
            const SplitSpec split = split_for(data, config, "");
            save_split(split_out, split);
            print_sizes(split);
        } else if (*pre_cmd) {
            const RunConfig config = pre_o.resolve();
            const Dataset data = load_dataset(config);
            const auto graphs = build_graphs(data, config);
            const SplitSpec split = split_for(data, config, pre_split);
            ResidueAutoencoder model(config.encoder, derive_seed(config.seed, "stage1.init"));
            const Stage1Result result =
                train_stage1(model, graphs, config, training_protein_ids(data.interactions, split));
            const fs::path out(pre_out);
            fs::create_directories(out);
            json meta;
            meta["config"] = json::parse(config.to_json());
            meta["standardizer"] = {{"mean", row_json(result.standardizer.mean)},
                                    {"scale", row_json(result.standardizer.scale)}};
            meta["property_table_version"] = data.table.version();
            meta["property_table_hash"] = data.table.hash();
            save_checkpoint(out / "stage1.ckpt.json", "stage1", model.parameters(), meta.dump());
            save_embeddings(out / "pooled.tsv", result.pooled);
            write_with(out / "stage1_log.tsv", [&](std::ostream& o) { write_stage1_log(o, result.log); });
            if (result.log.empty()) {
                std::cout << "stage 1 skipped (" << config.ablation.label() << "); pooled initial encoder\n";
            } else {
                std::cout << "stage 1: " << result.log.size() << " epochs, final loss " << result.log.back().loss
                          << "\n";
            }
            std::cout << "wrote " << (out / "stage1.ckpt.json").string() << " and " << (out / "pooled.tsv").string()
                      << "\n";
        } else if (*train_cmd) {
            const RunConfig config = train_o.resolve();
            const Dataset data = load_dataset(config);
            const SplitSpec split = split_for(data, config, train_split);
            const ProteinInteractionGraph graph = interaction_graph_for(data, split, train_pooled);
            InteractionModel model(graph.node_features.cols(), config.interaction,
                                   derive_seed(config.seed, "stage2.init"));
            const Stage2Result result = train_stage2(model, graph, split, config);
            const fs::path out(train_out);
            fs::create_directories(out);
            json meta;
            meta["config"] = json::parse(config.to_json());
            meta["input_dim"] = graph.node_features.cols();
            meta["best_epoch"] = result.best_epoch;
            meta["best_val_micro_f1"] = result.best_val_f1;
            save_checkpoint(out / "stage2.ckpt.json", "stage2", model.parameters(), meta.dump());
            write_with(out / "stage2_log.tsv", [&](std::ostream& o) { write_stage2_log(o, result.log); });
            std::cout << "stage 2: best val micro-F1 " << result.best_val_f1 << " at epoch " << result.best_epoch
                      << "\n";
        } else if (*eval_cmd) {
            const RunConfig config = eval_o.resolve();
            const Dataset data = load_dataset(config);
            const SplitSpec split = split_for(data, config, eval_split);
            const ProteinInteractionGraph graph = interaction_graph_for(data, split, eval_pooled);

            std::ifstream in(eval_ckpt);
            if (!in) throw std::runtime_error("cannot open checkpoint " + eval_ckpt);
            const json meta = json::parse(in).at("metadata");
            const RunConfig trained = RunConfig::from_json(meta.at("config").dump());
            const auto input_dim = meta.at("input_dim").get<Index>();
            if (input_dim != graph.node_features.cols()) {
                throw std::invalid_argument("pooled table width does not match the checkpoint");
            }
            InteractionModel model(input_dim, trained.interaction, 0);
            load_checkpoint(eval_ckpt, "stage2", model.parameters());

            const Evaluation ev = evaluate(model, graph, split, subset_pairs(split, eval_subset), config.threshold);
            const fs::path out(eval_out);
            write_text(out / "metrics.json", metrics_to_json(ev.report));
            write_with(out / "predictions.tsv", [&](std::ostream& o) { write_predictions(o, graph, ev); });
            write_with(out / "pr_curve.tsv", [&](std::ostream& o) {
                o << "threshold\tprecision\trecall\n" << std::setprecision(17);
                for (const auto& p : ev.report.pr_curve) o << p.threshold << '\t' << p.precision << '\t' << p.recall << '\n';
            });
            write_with(out / "per_type.tsv", [&](std::ostream& o) {
                o << "type\taccuracy\tf1\tf1_by_convention\n" << std::setprecision(17);
                for (std::size_t c = 0; c < ev.report.per_type.size(); ++c) {
                    const auto& m = ev.report.per_type[c];
                    o << kInteractionTypeNames[c] << '\t' << m.accuracy << '\t' << m.f1 << '\t'
                      << (m.f1_by_convention ? 1 : 0) << '\n';
                }
            });
            std::cout << eval_subset << " micro-F1 " << ev.report.micro_f1 << " over " << ev.pairs.size()
                      << " pairs\n";
        } else if (*abl_cmd) {
            const RunConfig config = abl_o.resolve();
            const Dataset data = load_dataset(config);
            const auto graphs = build_graphs(data, config);
            const SplitSpec split = split_for(data, config, abl_split);
            std::vector<AblationFlags> grid;
            for (const auto& cell : abl_cells) {
                AblationFlags flags;
                if (cell != "baseline") {
                    std::stringstream names(cell);
                    for (std::string name; std::getline(names, name, ',');) flags.set(name);
                }
                grid.push_back(flags);
            }
            const auto cells = run_ablation_grid(data, graphs, split, config, grid);
            write_text(abl_out, ablation_table_json(cells));
            for (const auto& c : cells) {
                std::cout << std::left << std::setw(40) << c.flags.label() << " val " << c.result.val.micro_f1
                          << "  test " << c.result.test.micro_f1 << "\n";
            }
        } else if (*exp_cmd) {
            RunConfig config = exp_o.resolve();
            const Dataset data = load_dataset(config);
            Stage1Checkpoint ck = load_stage1(exp_ckpt, data.table);
            // Contact parameters come from the checkpoint unless given on the command line.
            if (!exp_o.radius) config.contact.radius = ck.config.contact.radius;
            if (!exp_o.k) config.contact.k = ck.config.contact.k;
            const auto graphs = standardize_graphs(build_graphs(data, config), ck.standardizer);
            save_embeddings(exp_out, pool_proteins(*ck.model, graphs));
            std::cout << "wrote " << graphs.size() << " pooled vectors to " << exp_out << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
