#pragma once

#include "jmcppi/contrastive.hpp"
#include "jmcppi/data_model.hpp"
#include "jmcppi/graph_builder.hpp"
#include "jmcppi/interaction_model.hpp"
#include "jmcppi/metrics.hpp"
#include "jmcppi/residue_encoder.hpp"
#include "jmcppi/splitter.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace jmcppi {

struct AblationFlags {
    bool no_L_RE = false;
    bool no_L_MSRE = false;
    bool no_recon = false;
    bool no_con_alpha = false;
    bool no_con_beta = false;
    bool no_con = false;
    bool no_node_perturb = false;
    bool no_edge_perturb = false;
    bool no_perturb = false;

    static const std::vector<std::string>& names();
    /// Throws std::invalid_argument for an unknown flag name.
    void set(std::string_view name, bool on = true);
    [[nodiscard]] bool get(std::string_view name) const;
    /// "+"-joined names of the set flags, "baseline" when none are set.
    [[nodiscard]] std::string label() const;

    [[nodiscard]] bool skip_stage1() const { return no_recon || (no_L_RE && no_L_MSRE); }
    [[nodiscard]] bool use_alpha() const { return !no_con && !no_con_alpha; }
    [[nodiscard]] bool use_beta() const { return !no_con && !no_con_beta; }

    friend bool operator==(const AblationFlags&, const AblationFlags&) = default;
};

struct RunConfig {
    std::string proteins_path;
    std::string ppi_path;
    /// Empty means the built-in property table.
    std::string property_table_path;
    std::string graph_cache_dir;

    SplitScheme split_scheme = SplitScheme::random;
    std::uint64_t split_seed = 0;
    std::uint64_t seed = 0;

    ContactParams contact;
    ResidueEncoderConfig encoder;
    InteractionModelConfig interaction;

    double mask_rate = 0.25;
    double delta = 1.5;
    /// One rate per view for node and edge perturbation unless overridden below.
    double perturb_rate = 0.1;
    std::optional<double> node_perturb_rate;
    std::optional<double> edge_perturb_rate;
    double tau = 0.6;
    /// Compare unit-length rows in the contrastive term. Off gives the raw inner
    /// product, whose loss is unbounded below.
    bool contrastive_normalize = true;
    double gamma_str = 0.5;
    double gamma_in_con = 0.6;

    double learning_rate = 1e-3;
    double weight_decay = 1e-4;
    int stage1_epochs = 50;
    int stage1_batch = 128;
    int stage2_epochs = 800;
    double threshold = 0.5;

    AblationFlags ablation;

    void validate() const;
    [[nodiscard]] double node_rate() const;
    [[nodiscard]] double edge_rate() const;

    [[nodiscard]] std::string to_json() const;
    static RunConfig from_json(std::string_view text);
    static RunConfig load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;
};

/// Independent stream seeds derived from one master seed.
std::uint64_t derive_seed(std::uint64_t master, std::string_view stream);

/// Raised when a training loss stops being finite. Carries a copy of the parameters
/// at the moment of failure.
class TrainingDiverged : public std::runtime_error {
public:
    TrainingDiverged(const std::string& what, int epoch, nn::Snapshot snapshot)
        : std::runtime_error(what), epoch_(epoch), snapshot_(std::move(snapshot)) {}
    [[nodiscard]] int epoch() const { return epoch_; }
    [[nodiscard]] const nn::Snapshot& snapshot() const { return snapshot_; }

private:
    int epoch_;
    nn::Snapshot snapshot_;
};

struct Stage1EpochLog {
    int epoch = 0;
    double loss = 0.0;
    std::optional<double> l_re;
    std::optional<double> l_msre;
};

struct Stage1Result {
    FeatureStandardizer standardizer;
    std::vector<Stage1EpochLog> log;
    EmbeddingTable pooled;
};

/// Graphs with features standardized; edges untouched.
std::vector<ProteinStructureGraph> standardize_graphs(std::span<const ProteinStructureGraph> graphs,
                                                      const FeatureStandardizer& standardizer);

/// Eval-mode mean-pooled encoder output for every graph, in input order.
EmbeddingTable pool_proteins(ResidueAutoencoder& model, std::span<const ProteinStructureGraph> standardized);

/// Trains on whole-protein batches. `graphs` hold raw features; the standardizer is fit
/// on `fit_ids` (all graphs when empty) and applied to all of them before training.
Stage1Result train_stage1(ResidueAutoencoder& model, std::span<const ProteinStructureGraph> graphs,
                          const RunConfig& config, const std::vector<std::string>& fit_ids = {});

/// Column-wise standardization of pooled vectors using the rows whose id is in
/// `fit_ids` (all rows when empty). Constant columns are centred only.
EmbeddingTable standardize_embeddings(const EmbeddingTable& table, const std::vector<std::string>& fit_ids);

struct Stage2EpochLog {
    int epoch = 0;
    double loss = 0.0;
    double l_in = 0.0;
    std::optional<double> l_con;
    double train_f1 = 0.0;
    double val_f1 = 0.0;
    std::uint64_t alpha_seed = 0;
    std::uint64_t beta_seed = 0;
};

struct Stage2Result {
    std::vector<Stage2EpochLog> log;
    int best_epoch = 0;
    double best_val_f1 = 0.0;
};

/// Full-graph training over the train-pair topology; the model ends holding the
/// parameters of the epoch with the best validation micro-F1 (later epochs win ties).
Stage2Result train_stage2(InteractionModel& model, const ProteinInteractionGraph& graph, const SplitSpec& split,
                          const RunConfig& config);

struct Evaluation {
    std::vector<Index> pairs;
    Matrix probabilities;
    Matrix predictions;
    MetricsReport report;
};

/// Scores the selected pairs with message passing over the train-pair edges.
/// Subset scores are filled when `pairs` is the split's test list.
Evaluation evaluate(InteractionModel& model, const ProteinInteractionGraph& graph, const SplitSpec& split,
                    std::span<const Index> pairs, double threshold);

std::string metrics_to_json(const MetricsReport& report);
void write_predictions(std::ostream& out, const ProteinInteractionGraph& graph, const Evaluation& evaluation);
void write_stage1_log(std::ostream& out, std::span<const Stage1EpochLog> log);
void write_stage2_log(std::ostream& out, std::span<const Stage2EpochLog> log);

/// Versioned JSON container of parameters and buffers plus free-form metadata.
void save_checkpoint(const std::filesystem::path& path, std::string_view kind, const nn::ParameterList& list,
                     const std::string& metadata_json);
/// Loads values into `list` by name and returns the metadata JSON text.
std::string load_checkpoint(const std::filesystem::path& path, std::string_view kind, const nn::ParameterList& list);

struct Dataset {
    std::vector<ProteinRecord> proteins;
    std::vector<InteractionRecord> interactions;
    AminoAcidPropertyTable table = AminoAcidPropertyTable::standard();
};

Dataset load_dataset(const RunConfig& config);
/// Builds (or reads from the cache directory when configured) every structure graph.
std::vector<ProteinStructureGraph> build_graphs(const Dataset& data, const RunConfig& config);

/// The split for the configured scheme and split seed.
SplitSpec make_split(const std::vector<InteractionRecord>& interactions, const std::vector<ProteinRecord>& proteins,
                     const RunConfig& config);

struct PipelineResult {
    Stage1Result stage1;
    Stage2Result stage2;
    MetricsReport train;
    MetricsReport val;
    MetricsReport test;
};

/// Both endpoints of every training pair, in split order (repeats kept).
std::vector<std::string> training_protein_ids(const std::vector<InteractionRecord>& interactions,
                                              const SplitSpec& split);

/// Stage 1, pooling, stage 2 and evaluation in one call.
PipelineResult run_pipeline(const Dataset& data, std::span<const ProteinStructureGraph> graphs,
                            const SplitSpec& split, const RunConfig& config);

struct AblationCell {
    AblationFlags flags;
    PipelineResult result;
};

/// One full run per flag set with shared seeds. An empty list runs the baseline alone.
std::vector<AblationCell> run_ablation_grid(const Dataset& data, std::span<const ProteinStructureGraph> graphs,
                                            const SplitSpec& split, const RunConfig& config,
                                            const std::vector<AblationFlags>& grid);
std::string ablation_table_json(std::span<const AblationCell> cells);

struct SyntheticConfig {
    int proteins = 20;
    int pairs = 60;
    int min_length = 30;
    int max_length = 60;
    /// Probability that a non-tree pair is drawn within one family.
    double same_family_bias = 0.7;
    std::uint64_t seed = 0;
};

/// Proteins whose residues are drawn mostly from one of four residue groups (the
/// protein's family). A pair's types are {(fa + fb) mod 7}, plus binding when fa == fb.
/// Pairs favour partners of the same family; the pair graph is connected.
Dataset synth_dataset(const SyntheticConfig& config);
/// Family index of a generated sequence: the residue group it draws most from.
int synthetic_family(std::string_view sequence);

}  // namespace jmcppi
