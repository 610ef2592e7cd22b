#include "jmcppi/harness.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace jmcppi {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Ablation flags and run configuration

const std::vector<std::string>& AblationFlags::names() {
    static const std::vector<std::string> all{"no_L_RE",      "no_L_MSRE",   "no_recon",
                                              "no_con_alpha", "no_con_beta", "no_con",
                                              "no_node_perturb", "no_edge_perturb", "no_perturb"};
    return all;
}

namespace {

bool* flag_slot(AblationFlags& f, std::string_view name) {
    if (name == "no_L_RE") return &f.no_L_RE;
    if (name == "no_L_MSRE") return &f.no_L_MSRE;
    if (name == "no_recon") return &f.no_recon;
    if (name == "no_con_alpha") return &f.no_con_alpha;
    if (name == "no_con_beta") return &f.no_con_beta;
    if (name == "no_con") return &f.no_con;
    if (name == "no_node_perturb") return &f.no_node_perturb;
    if (name == "no_edge_perturb") return &f.no_edge_perturb;
    if (name == "no_perturb") return &f.no_perturb;
    return nullptr;
}

void check_unit(double v, const char* what) {
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument(std::string("config: ") + what + " must lie in [0, 1]");
}

}  // namespace

void AblationFlags::set(std::string_view name, bool on) {
    bool* slot = flag_slot(*this, name);
    if (slot == nullptr) throw std::invalid_argument("unknown ablation flag '" + std::string(name) + "'");
    *slot = on;
}

bool AblationFlags::get(std::string_view name) const {
    bool* slot = flag_slot(const_cast<AblationFlags&>(*this), name);
    if (slot == nullptr) throw std::invalid_argument("unknown ablation flag '" + std::string(name) + "'");
    return *slot;
}

std::string AblationFlags::label() const {
    std::string out;
    for (const auto& n : names()) {
        if (get(n)) out += (out.empty() ? "" : "+") + n;
    }
    return out.empty() ? "baseline" : out;
}

void RunConfig::validate() const {
    encoder.validate();
    interaction.validate();
    check_unit(mask_rate, "mask_rate");
    check_unit(perturb_rate, "perturb_rate");
    if (node_perturb_rate) check_unit(*node_perturb_rate, "node_perturb_rate");
    if (edge_perturb_rate) check_unit(*edge_perturb_rate, "edge_perturb_rate");
    if (!(delta >= 1.0)) throw std::invalid_argument("config: delta must be at least 1");
    if (!(tau > 0.0)) throw std::invalid_argument("config: tau must be positive");
    if (gamma_str < 0.0 || gamma_in_con < 0.0) throw std::invalid_argument("config: loss weights must be non-negative");
    if (learning_rate < 0.0 || weight_decay < 0.0) {
        throw std::invalid_argument("config: learning rate and weight decay must be non-negative");
    }
    if (stage1_epochs < 1 || stage1_epochs > 50) throw std::invalid_argument("config: stage1_epochs must lie in [1, 50]");
    if (stage2_epochs < 1 || stage2_epochs > 800) throw std::invalid_argument("config: stage2_epochs must lie in [1, 800]");
    if (stage1_batch < 1) throw std::invalid_argument("config: stage1_batch must be positive");
    if (!(threshold > 0.0 && threshold < 1.0)) throw std::invalid_argument("config: threshold must lie in (0, 1)");
    if (!(contact.radius > 0.0)) throw std::invalid_argument("config: contact radius must be positive");
    if (contact.k < 1) throw std::invalid_argument("config: k must be at least 1");
}

double RunConfig::node_rate() const {
    if (ablation.no_perturb || ablation.no_node_perturb) return 0.0;
    return node_perturb_rate.value_or(perturb_rate);
}

double RunConfig::edge_rate() const {
    if (ablation.no_perturb || ablation.no_edge_perturb) return 0.0;
    return edge_perturb_rate.value_or(perturb_rate);
}

std::string RunConfig::to_json() const {
    json j;
    j["proteins_path"] = proteins_path;
    j["ppi_path"] = ppi_path;
    j["property_table_path"] = property_table_path;
    j["graph_cache_dir"] = graph_cache_dir;
    j["split_scheme"] = std::string(to_string(split_scheme));
    j["split_seed"] = split_seed;
    j["seed"] = seed;
    j["radius"] = contact.radius;
    j["k"] = contact.k;
    j["encoder_hidden"] = encoder.hidden;
    j["encoder_heads"] = encoder.heads;
    j["encoder_layers"] = encoder.layers;
    j["encoder_dropout"] = encoder.dropout;
    j["interaction_hidden"] = interaction.hidden;
    j["interaction_layers"] = interaction.layers;
    j["interaction_dropout"] = interaction.dropout;
    j["mask_rate"] = mask_rate;
    j["delta"] = delta;
    j["perturb_rate"] = perturb_rate;
    j["node_perturb_rate"] = node_perturb_rate ? json(*node_perturb_rate) : json(nullptr);
    j["edge_perturb_rate"] = edge_perturb_rate ? json(*edge_perturb_rate) : json(nullptr);
    j["tau"] = tau;
    j["contrastive_normalize"] = contrastive_normalize;
    j["gamma_str"] = gamma_str;
    j["gamma_in_con"] = gamma_in_con;
    j["learning_rate"] = learning_rate;
    j["weight_decay"] = weight_decay;
    j["stage1_epochs"] = stage1_epochs;
    j["stage1_batch"] = stage1_batch;
    j["stage2_epochs"] = stage2_epochs;
    j["threshold"] = threshold;
    json flags = json::array();
    for (const auto& n : AblationFlags::names()) {
        if (ablation.get(n)) flags.push_back(n);
    }
    j["ablation"] = flags;
    return j.dump(2);
}

RunConfig RunConfig::from_json(std::string_view text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("config: ") + e.what());
    }
    if (!j.is_object()) throw ParseError("config: top level must be an object");
    RunConfig c;
    try {
        for (const auto& [key, v] : j.items()) {
            if (key == "proteins_path") c.proteins_path = v.get<std::string>();
            else if (key == "ppi_path") c.ppi_path = v.get<std::string>();
            else if (key == "property_table_path") c.property_table_path = v.get<std::string>();
            else if (key == "graph_cache_dir") c.graph_cache_dir = v.get<std::string>();
            else if (key == "split_scheme") c.split_scheme = parse_split_scheme(v.get<std::string>());
            else if (key == "split_seed") c.split_seed = v.get<std::uint64_t>();
            else if (key == "seed") c.seed = v.get<std::uint64_t>();
            else if (key == "radius") c.contact.radius = v.get<double>();
            else if (key == "k") c.contact.k = v.get<int>();
            else if (key == "encoder_hidden") c.encoder.hidden = v.get<int>();
            else if (key == "encoder_heads") c.encoder.heads = v.get<int>();
            else if (key == "encoder_layers") c.encoder.layers = v.get<int>();
            else if (key == "encoder_dropout") c.encoder.dropout = v.get<double>();
            else if (key == "interaction_hidden") c.interaction.hidden = v.get<int>();
            else if (key == "interaction_layers") c.interaction.layers = v.get<int>();
            else if (key == "interaction_dropout") c.interaction.dropout = v.get<double>();
            else if (key == "mask_rate") c.mask_rate = v.get<double>();
            else if (key == "delta") c.delta = v.get<double>();
            else if (key == "perturb_rate") c.perturb_rate = v.get<double>();
            else if (key == "node_perturb_rate") {
                if (!v.is_null()) c.node_perturb_rate = v.get<double>();
            } else if (key == "edge_perturb_rate") {
                if (!v.is_null()) c.edge_perturb_rate = v.get<double>();
            } else if (key == "tau") c.tau = v.get<double>();
            else if (key == "contrastive_normalize") c.contrastive_normalize = v.get<bool>();
            else if (key == "gamma_str") c.gamma_str = v.get<double>();
            else if (key == "gamma_in_con") c.gamma_in_con = v.get<double>();
            else if (key == "learning_rate") c.learning_rate = v.get<double>();
            else if (key == "weight_decay") c.weight_decay = v.get<double>();
            else if (key == "stage1_epochs") c.stage1_epochs = v.get<int>();
            else if (key == "stage1_batch") c.stage1_batch = v.get<int>();
            else if (key == "stage2_epochs") c.stage2_epochs = v.get<int>();
            else if (key == "threshold") c.threshold = v.get<double>();
            else if (key == "ablation") {
                for (const auto& name : v) c.ablation.set(name.get<std::string>());
            } else {
                throw std::invalid_argument("config: unknown key '" + key + "'");
            }
        }
    } catch (const json::exception& e) {
        throw ParseError(std::string("config: ") + e.what());
    }
    c.validate();
    return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    return from_json(buffer.str());
}

void RunConfig::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write config " + path.string());
    out << to_json() << '\n';
}

std::uint64_t derive_seed(std::uint64_t master, std::string_view stream) {
    std::vector<std::uint32_t> material{static_cast<std::uint32_t>(master), static_cast<std::uint32_t>(master >> 32)};
    for (char ch : stream) material.push_back(static_cast<unsigned char>(ch));
    std::seed_seq seq(material.begin(), material.end());
    std::array<std::uint32_t, 2> out{};
    seq.generate(out.begin(), out.end());
    return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

// ---------------------------------------------------------------------------
// Stage 1

std::vector<ProteinStructureGraph> standardize_graphs(std::span<const ProteinStructureGraph> graphs,
                                                      const FeatureStandardizer& standardizer) {
    std::vector<ProteinStructureGraph> out(graphs.begin(), graphs.end());
    for (auto& g : out) g.features = standardizer.apply(g.features);
    return out;
}

EmbeddingTable pool_proteins(ResidueAutoencoder& model, std::span<const ProteinStructureGraph> standardized) {
    EmbeddingTable table;
    table.values.resize(static_cast<Index>(standardized.size()), model.config().hidden);
    for (std::size_t i = 0; i < standardized.size(); ++i) {
        table.ids.push_back(standardized[i].id);
        table.values.row(static_cast<Index>(i)) = pool_protein(model.embed(standardized[i]));
    }
    return table;
}

Stage1Result train_stage1(ResidueAutoencoder& model, std::span<const ProteinStructureGraph> graphs,
                          const RunConfig& config, const std::vector<std::string>& fit_ids) {
    config.validate();
    if (graphs.empty()) throw std::invalid_argument("train_stage1: no graphs");
    const std::set<std::string> fit_set(fit_ids.begin(), fit_ids.end());
    std::vector<Matrix> fit;
    for (const auto& g : graphs) {
        if (fit_set.empty() || fit_set.contains(g.id)) fit.push_back(g.features);
    }
    if (fit.empty()) throw std::invalid_argument("train_stage1: none of the standardizer proteins has a graph");

    Stage1Result result;
    result.standardizer = FeatureStandardizer::fit(fit);
    const auto prepared = standardize_graphs(graphs, result.standardizer);

    const AblationFlags& flags = config.ablation;
    if (!flags.skip_stage1()) {
        nn::ParameterList params = model.parameters();
        nn::AdamW optimizer(params, {config.learning_rate, config.weight_decay});
        nn::Rng order_rng(derive_seed(config.seed, "stage1.order"));
        nn::Rng dropout_rng(derive_seed(config.seed, "stage1.dropout"));
        nn::Rng mask_rng(derive_seed(config.seed, "stage1.mask"));
        const Stage1LossWeights weights{config.gamma_str, config.weight_decay, config.delta};

        std::vector<std::size_t> order(prepared.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        const auto batch_size = static_cast<std::size_t>(config.stage1_batch);

        for (int epoch = 1; epoch <= config.stage1_epochs; ++epoch) {
            std::shuffle(order.begin(), order.end(), order_rng);
            double sum_loss = 0.0;
            double sum_re = 0.0;
            double sum_msre = 0.0;
            int batches = 0;
            for (std::size_t start = 0; start < order.size(); start += batch_size) {
                std::vector<const ProteinStructureGraph*> members;
                for (std::size_t i = start; i < std::min(order.size(), start + batch_size); ++i) {
                    members.push_back(&prepared[order[i]]);
                }
                const StructureBatch batch = batch_graphs(members);

                optimizer.zero_grad();
                ad::Tape tape;
                const ad::Var x = tape.constant(batch.graph.features);
                std::optional<ad::Var> re;
                std::optional<ad::Var> msre;
                if (!flags.no_L_RE) {
                    re = loss_re(x, model.reconstruct(tape, batch.graph, x, true, dropout_rng));
                }
                if (!flags.no_L_MSRE) {
                    const auto rows = sample_mask_rows(x.rows(), config.mask_rate, mask_rng);
                    const ad::Var masked = ad::replace_rows(x, tape.parameter(model.mask_token), rows);
                    msre = loss_msre(x, model.reconstruct(tape, batch.graph, masked, true, dropout_rng),
                                     config.delta);
                }
                const ad::Var loss = re && msre ? stage1_loss(*re, *msre, weights)
                                     : re       ? *re
                                                : ad::scale(*msre, config.gamma_str);
                const double value = loss.item();
                if (!std::isfinite(value)) {
                    std::ostringstream msg;
                    msg << "stage 1 loss is not finite at epoch " << epoch << " (L_RE "
                        << (re ? re->item() : 0.0) << ", L_MSRE " << (msre ? msre->item() : 0.0) << ")";
                    throw TrainingDiverged(msg.str(), epoch, nn::Snapshot::capture(params));
                }
                tape.backward(loss);
                optimizer.step();
                sum_loss += value;
                if (re) sum_re += re->item();
                if (msre) sum_msre += msre->item();
                ++batches;
            }
            Stage1EpochLog entry;
            entry.epoch = epoch;
            entry.loss = sum_loss / batches;
            if (!flags.no_L_RE) entry.l_re = sum_re / batches;
            if (!flags.no_L_MSRE) entry.l_msre = sum_msre / batches;
            result.log.push_back(entry);
        }
    }
    result.pooled = pool_proteins(model, prepared);
    return result;
}

// ---------------------------------------------------------------------------
// Stage 2

namespace {

std::vector<std::pair<Index, Index>> select_pairs(const ProteinInteractionGraph& graph, std::span<const Index> idx) {
    std::vector<std::pair<Index, Index>> out;
    out.reserve(idx.size());
    for (Index p : idx) out.push_back(graph.pairs.at(static_cast<std::size_t>(p)));
    return out;
}

Matrix select_labels(const ProteinInteractionGraph& graph, std::span<const Index> idx) {
    Matrix out(static_cast<Index>(idx.size()), graph.labels.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Index>(i)) = graph.labels.row(idx[i]);
    return out;
}

double score_pairs(InteractionModel& model, const ProteinInteractionGraph& graph, const EdgeList& edges,
                   std::span<const Index> idx, double threshold) {
    const auto pairs = select_pairs(graph, idx);
    return micro_f1(predict(model.predict_logits(edges, graph.node_features, pairs), threshold),
                    select_labels(graph, idx));
}

}  // namespace

EmbeddingTable standardize_embeddings(const EmbeddingTable& table, const std::vector<std::string>& fit_ids) {
    std::vector<Index> rows;
    if (fit_ids.empty()) {
        rows.resize(static_cast<std::size_t>(table.size()));
        std::iota(rows.begin(), rows.end(), Index{0});
    } else {
        for (const auto& id : std::set<std::string>(fit_ids.begin(), fit_ids.end())) {
            if (auto r = table.find(id)) rows.push_back(*r);
        }
    }
    if (rows.empty()) throw std::invalid_argument("standardize_embeddings: no rows to fit on");
    std::sort(rows.begin(), rows.end());
    const Matrix fit = table.values(rows, Eigen::all);
    const RowVector mean = fit.colwise().mean();
    RowVector scale = ((fit.rowwise() - mean).array().square().colwise().mean()).sqrt();
    for (Index c = 0; c < scale.cols(); ++c) {
        if (!(scale(c) > 1e-12)) scale(c) = 1.0;
    }
    EmbeddingTable out = table;
    out.values = (table.values.rowwise() - mean).array().rowwise() / scale.array();
    return out;
}

Stage2Result train_stage2(InteractionModel& model, const ProteinInteractionGraph& graph, const SplitSpec& split,
                          const RunConfig& config) {
    config.validate();
    split.validate(graph.pair_count());
    if (split.train.empty()) throw std::invalid_argument("train_stage2: empty training split");
    if (model.input_dim() != graph.node_features.cols()) {
        throw std::invalid_argument("train_stage2: model input width does not match the protein vectors");
    }
    const EdgeList train_edges = graph.edges_for(split.train);
    const auto train_pairs = select_pairs(graph, split.train);
    const Matrix train_labels = select_labels(graph, split.train);

    nn::ParameterList params = model.parameters();
    nn::AdamW optimizer(params, {config.learning_rate, config.weight_decay});
    nn::Rng dropout_rng(derive_seed(config.seed, "stage2.dropout"));
    nn::Rng perturb_rng(derive_seed(config.seed, "stage2.perturb"));
    const ContrastiveConfig con_cfg{config.tau, config.gamma_in_con, config.weight_decay};
    con_cfg.validate();
    const AblationFlags& flags = config.ablation;
    const bool contrastive = config.gamma_in_con > 0.0 && (flags.use_alpha() || flags.use_beta());

    Stage2Result result;
    result.best_val_f1 = -1.0;
    nn::Snapshot best;
    for (int epoch = 1; epoch <= config.stage2_epochs; ++epoch) {
        Stage2EpochLog entry;
        entry.epoch = epoch;
        optimizer.zero_grad();
        ad::Tape tape;
        const ad::Var encoded =
            model.encode_proteins(tape, train_edges, tape.constant(graph.node_features), true, dropout_rng);
        const ad::Var logits =
            model.pair_logits(tape, model.project_head(tape, encoded, true, dropout_rng), train_pairs);
        const ad::Var l_in = loss_in(logits, train_labels);
        ad::Var loss = l_in;
        if (contrastive) {
            entry.alpha_seed = perturb_rng();
            entry.beta_seed = perturb_rng();
            std::optional<ad::Var> con;
            const auto view_loss = [&](std::uint64_t seed, ViewTag tag) {
                const PerturbSpec spec{config.node_rate(), config.edge_rate(), seed, tag};
                const PerturbedView view = make_view(graph.node_features, train_edges, spec);
                const ad::Var hv =
                    model.encode_proteins(tape, view.edges, tape.constant(view.features), true, dropout_rng);
                if (config.contrastive_normalize) {
                    return info_nce(ad::normalize_rows(encoded, kCosineNormFloor),
                                    ad::normalize_rows(hv, kCosineNormFloor), con_cfg.tau);
                }
                return info_nce(encoded, hv, con_cfg.tau);
            };
            if (flags.use_alpha()) con = view_loss(entry.alpha_seed, ViewTag::alpha);
            if (flags.use_beta()) {
                const ad::Var lb = view_loss(entry.beta_seed, ViewTag::beta);
                con = con ? ad::add(*con, lb) : lb;
            }
            entry.l_con = con->item();
            loss = stage2_loss(l_in, *con, con_cfg);
        }
        entry.l_in = l_in.item();
        entry.loss = loss.item();
        if (!std::isfinite(entry.loss)) {
            std::ostringstream msg;
            msg << "stage 2 loss is not finite at epoch " << epoch << " (L_IN " << entry.l_in << ")";
            throw TrainingDiverged(msg.str(), epoch, nn::Snapshot::capture(params));
        }
        tape.backward(loss);
        optimizer.step();

        entry.train_f1 = score_pairs(model, graph, train_edges, split.train, config.threshold);
        entry.val_f1 = split.val.empty() ? entry.train_f1
                                         : score_pairs(model, graph, train_edges, split.val, config.threshold);
        if (entry.val_f1 >= result.best_val_f1) {
            result.best_val_f1 = entry.val_f1;
            result.best_epoch = epoch;
            best = nn::Snapshot::capture(params);
        }
        result.log.push_back(entry);
    }
    best.restore(params);
    return result;
}

Evaluation evaluate(InteractionModel& model, const ProteinInteractionGraph& graph, const SplitSpec& split,
                    std::span<const Index> pairs, double threshold) {
    split.validate(graph.pair_count());
    Evaluation ev;
    ev.pairs.assign(pairs.begin(), pairs.end());
    const Matrix logits =
        model.predict_logits(graph.edges_for(split.train), graph.node_features, select_pairs(graph, pairs));
    ev.probabilities = sigmoid(logits);
    ev.predictions = predict(logits, threshold);
    const Matrix truth = select_labels(graph, pairs);
    ev.report.micro_f1 = micro_f1(ev.predictions, truth);
    ev.report.per_type = per_type_metrics(ev.predictions, truth);
    ev.report.pr_curve = pr_curve(ev.probabilities, truth);
    if (ev.pairs == split.test) {
        const auto tags = classify_subsets(split, graph);
        ev.report.subsets = subset_report(ev.predictions, truth, tags);
    }
    return ev;
}

// ---------------------------------------------------------------------------
// Reports and logs

namespace {

json metrics_json(const MetricsReport& report) {
    json j;
    j["micro_f1"] = report.micro_f1;
    json types = json::array();
    for (std::size_t c = 0; c < report.per_type.size(); ++c) {
        const auto& m = report.per_type[c];
        types.push_back({{"type", std::string(kInteractionTypeNames[c])},
                         {"accuracy", m.accuracy},
                         {"f1", m.f1},
                         {"f1_by_convention", m.f1_by_convention}});
    }
    j["per_type"] = types;
    json curve = json::array();
    for (const auto& p : report.pr_curve) {
        curve.push_back({{"threshold", p.threshold}, {"precision", p.precision}, {"recall", p.recall}});
    }
    j["pr_curve"] = curve;
    if (report.subsets) {
        json subsets = json::array();
        for (const auto& s : report.subsets->per_tag) {
            subsets.push_back({{"tag", std::string(to_string(s.tag))},
                               {"count", s.count},
                               {"fraction", s.fraction},
                               {"micro_f1", s.micro_f1 ? json(*s.micro_f1) : json(nullptr)}});
        }
        j["subsets"] = subsets;
        j["subset_weighted_f1"] = report.subsets->weighted_f1;
    }
    return j;
}

std::string fmt(double v) {
    std::ostringstream s;
    s << std::setprecision(17) << v;
    return s.str();
}

}  // namespace

std::string metrics_to_json(const MetricsReport& report) { return metrics_json(report).dump(2); }

void write_predictions(std::ostream& out, const ProteinInteractionGraph& graph, const Evaluation& evaluation) {
    out << "protein_a\tprotein_b";
    for (const auto& name : kInteractionTypeNames) out << "\tprob_" << name;
    for (const auto& name : kInteractionTypeNames) out << "\tpred_" << name;
    out << '\n';
    for (std::size_t i = 0; i < evaluation.pairs.size(); ++i) {
        const auto [a, b] = graph.pairs.at(static_cast<std::size_t>(evaluation.pairs[i]));
        out << graph.protein_ids[static_cast<std::size_t>(a)] << '\t' << graph.protein_ids[static_cast<std::size_t>(b)];
        const auto r = static_cast<Index>(i);
        for (Index c = 0; c < evaluation.probabilities.cols(); ++c) out << '\t' << fmt(evaluation.probabilities(r, c));
        for (Index c = 0; c < evaluation.predictions.cols(); ++c) {
            out << '\t' << static_cast<int>(evaluation.predictions(r, c));
        }
        out << '\n';
    }
}

void write_stage1_log(std::ostream& out, std::span<const Stage1EpochLog> log) {
    const bool re = !log.empty() && log.front().l_re.has_value();
    const bool msre = !log.empty() && log.front().l_msre.has_value();
    out << "epoch\tloss" << (re ? "\tl_re" : "") << (msre ? "\tl_msre" : "") << '\n';
    for (const auto& e : log) {
        out << e.epoch << '\t' << fmt(e.loss);
        if (re) out << '\t' << fmt(*e.l_re);
        if (msre) out << '\t' << fmt(*e.l_msre);
        out << '\n';
    }
}

void write_stage2_log(std::ostream& out, std::span<const Stage2EpochLog> log) {
    const bool con = !log.empty() && log.front().l_con.has_value();
    out << "epoch\tloss\tl_in" << (con ? "\tl_con" : "") << "\ttrain_f1\tval_f1"
        << (con ? "\talpha_seed\tbeta_seed" : "") << '\n';
    for (const auto& e : log) {
        out << e.epoch << '\t' << fmt(e.loss) << '\t' << fmt(e.l_in);
        if (con) out << '\t' << fmt(*e.l_con);
        out << '\t' << fmt(e.train_f1) << '\t' << fmt(e.val_f1);
        if (con) out << '\t' << e.alpha_seed << '\t' << e.beta_seed;
        out << '\n';
    }
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr int kCheckpointVersion = 1;

json matrix_json(const Matrix& m) {
    std::vector<double> data(static_cast<std::size_t>(m.size()));
    for (Index i = 0; i < m.rows(); ++i) {
        for (Index j = 0; j < m.cols(); ++j) data[static_cast<std::size_t>(i * m.cols() + j)] = m(i, j);
    }
    return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

void read_matrix(const json& j, Matrix& target, const std::string& name) {
    const auto rows = j.at("rows").get<Index>();
    const auto cols = j.at("cols").get<Index>();
    if (rows != target.rows() || cols != target.cols()) {
        throw ValidationError("checkpoint: shape mismatch for '" + name + "'");
    }
    const auto data = j.at("data").get<std::vector<double>>();
    if (static_cast<Index>(data.size()) != rows * cols) throw ValidationError("checkpoint: bad data for '" + name + "'");
    for (Index i = 0; i < rows; ++i) {
        for (Index c = 0; c < cols; ++c) target(i, c) = data[static_cast<std::size_t>(i * cols + c)];
    }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, std::string_view kind, const nn::ParameterList& list,
                     const std::string& metadata_json) {
    json j;
    j["format"] = "jmcppi-checkpoint";
    j["version"] = kCheckpointVersion;
    j["kind"] = std::string(kind);
    json params = json::object();
    for (const ad::Parameter* p : list.params) {
        if (params.contains(p->name)) throw std::logic_error("checkpoint: duplicate parameter name " + p->name);
        params[p->name] = matrix_json(p->value);
    }
    json buffers = json::object();
    for (const auto& [name, m] : list.buffers) buffers[name] = matrix_json(*m);
    j["parameters"] = params;
    j["buffers"] = buffers;
    j["metadata"] = metadata_json.empty() ? json::object() : json::parse(metadata_json);
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
    out << j.dump() << '\n';
}

std::string load_checkpoint(const std::filesystem::path& path, std::string_view kind, const nn::ParameterList& list) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ParseError("checkpoint " + path.string() + ": " + e.what());
    }
    if (j.value("format", "") != "jmcppi-checkpoint") throw ValidationError("checkpoint: unrecognized format");
    if (j.value("version", 0) != kCheckpointVersion) throw ValidationError("checkpoint: unsupported version");
    if (j.value("kind", "") != kind) {
        throw ValidationError("checkpoint: expected kind '" + std::string(kind) + "', found '" + j.value("kind", "") + "'");
    }
    const json& params = j.at("parameters");
    for (ad::Parameter* p : list.params) {
        if (!params.contains(p->name)) throw ValidationError("checkpoint: missing parameter '" + p->name + "'");
        read_matrix(params.at(p->name), p->value, p->name);
    }
    const json& buffers = j.at("buffers");
    for (const auto& [name, m] : list.buffers) {
        if (!buffers.contains(name)) throw ValidationError("checkpoint: missing buffer '" + name + "'");
        read_matrix(buffers.at(name), *m, name);
    }
    return j.at("metadata").dump();
}

// ---------------------------------------------------------------------------
// Data loading and the full pipeline

Dataset load_dataset(const RunConfig& config) {
    if (config.proteins_path.empty() || config.ppi_path.empty()) {
        throw std::invalid_argument("config: proteins_path and ppi_path are required");
    }
    Dataset data;
    data.proteins = load_proteins(config.proteins_path);
    data.interactions = load_ppi(config.ppi_path);
    if (!config.property_table_path.empty()) data.table = AminoAcidPropertyTable::load(config.property_table_path);
    return data;
}

std::vector<ProteinStructureGraph> build_graphs(const Dataset& data, const RunConfig& config) {
    const std::uint64_t key = graph_cache_key(config.contact, data.table);
    const bool cached = !config.graph_cache_dir.empty();
    if (cached) std::filesystem::create_directories(config.graph_cache_dir);
    std::vector<ProteinStructureGraph> graphs;
    graphs.reserve(data.proteins.size());
    for (const auto& record : data.proteins) {
        if (cached) {
            const auto path = graph_cache_path(config.graph_cache_dir, record.id, key);
            if (auto hit = load_structure_graph(path, key)) {
                graphs.push_back(std::move(*hit));
                continue;
            }
            graphs.push_back(build_structure_graph(record, data.table, config.contact));
            save_structure_graph(path, graphs.back(), key);
        } else {
            graphs.push_back(build_structure_graph(record, data.table, config.contact));
        }
    }
    return graphs;
}

namespace {

ProteinInteractionGraph topology_only(const std::vector<InteractionRecord>& interactions,
                                      const std::vector<ProteinRecord>& proteins) {
    EmbeddingTable ids;
    for (const auto& p : proteins) ids.ids.push_back(p.id);
    ids.values = Matrix::Zero(static_cast<Index>(proteins.size()), 1);
    return build_interaction_graph(interactions, ids);
}

}  // namespace

SplitSpec make_split(const std::vector<InteractionRecord>& interactions, const std::vector<ProteinRecord>& proteins,
                     const RunConfig& config) {
    if (config.split_scheme == SplitScheme::random) {
        return split_random(static_cast<Index>(interactions.size()), config.split_seed);
    }
    return split_traversal(topology_only(interactions, proteins), config.split_scheme, config.split_seed);
}

std::vector<std::string> training_protein_ids(const std::vector<InteractionRecord>& interactions,
                                              const SplitSpec& split) {
    std::vector<std::string> ids;
    for (Index p : split.train) {
        const auto& r = interactions.at(static_cast<std::size_t>(p));
        ids.push_back(r.protein_a);
        ids.push_back(r.protein_b);
    }
    return ids;
}

PipelineResult run_pipeline(const Dataset& data, std::span<const ProteinStructureGraph> graphs,
                            const SplitSpec& split, const RunConfig& config) {
    config.validate();
    split.validate(static_cast<Index>(data.interactions.size()));
    PipelineResult result;

    const std::vector<std::string> fit_ids = training_protein_ids(data.interactions, split);
    ResidueAutoencoder encoder(config.encoder, derive_seed(config.seed, "stage1.init"));
    result.stage1 = train_stage1(encoder, graphs, config, fit_ids);

    const ProteinInteractionGraph graph =
        build_interaction_graph(data.interactions, standardize_embeddings(result.stage1.pooled, fit_ids));
    InteractionModel model(graph.node_features.cols(), config.interaction, derive_seed(config.seed, "stage2.init"));
    result.stage2 = train_stage2(model, graph, split, config);
    result.train = evaluate(model, graph, split, split.train, config.threshold).report;
    result.val = evaluate(model, graph, split, split.val, config.threshold).report;
    result.test = evaluate(model, graph, split, split.test, config.threshold).report;
    return result;
}

std::vector<AblationCell> run_ablation_grid(const Dataset& data, std::span<const ProteinStructureGraph> graphs,
                                            const SplitSpec& split, const RunConfig& config,
                                            const std::vector<AblationFlags>& grid) {
    const std::vector<AblationFlags> cells = grid.empty() ? std::vector<AblationFlags>{AblationFlags{}} : grid;
    std::vector<AblationCell> out;
    for (const auto& flags : cells) {
        RunConfig cell = config;
        cell.ablation = flags;
        out.push_back({flags, run_pipeline(data, graphs, split, cell)});
    }
    return out;
}

std::string ablation_table_json(std::span<const AblationCell> cells) {
    json rows = json::array();
    for (const auto& c : cells) {
        rows.push_back({{"ablation", c.flags.label()},
                        {"best_epoch", c.result.stage2.best_epoch},
                        {"val_micro_f1", c.result.val.micro_f1},
                        {"test", metrics_json(c.result.test)}});
    }
    return rows.dump(2);
}

// ---------------------------------------------------------------------------
// Synthetic data

namespace {

constexpr std::array<std::string_view, 4> kResidueGroups{"AVLIMF", "DE", "KRH", "STNQ"};

}  // namespace

int synthetic_family(std::string_view sequence) {
    std::array<int, 4> counts{};
    for (char ch : sequence) {
        for (std::size_t g = 0; g < kResidueGroups.size(); ++g) {
            if (kResidueGroups[g].find(ch) != std::string_view::npos) ++counts[g];
        }
    }
    return static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
}

Dataset synth_dataset(const SyntheticConfig& config) {
    const int n = config.proteins;
    if (n < 2) throw std::invalid_argument("synth: need at least 2 proteins");
    if (config.pairs < n - 1 || config.pairs > n * (n - 1) / 2) {
        throw std::invalid_argument("synth: pair count must lie in [proteins - 1, proteins * (proteins - 1) / 2]");
    }
    if (config.same_family_bias < 0.0 || config.same_family_bias > 1.0) {
        throw std::invalid_argument("synth: same_family_bias must lie in [0, 1]");
    }
    if (config.min_length < 7 || config.max_length < config.min_length) {
        throw std::invalid_argument("synth: lengths must satisfy 7 <= min_length <= max_length");
    }
    nn::Rng rng(config.seed);
    Dataset data;
    std::vector<int> family(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) family[static_cast<std::size_t>(i)] = i % 4;
    std::shuffle(family.begin(), family.end(), rng);

    std::uniform_int_distribution<int> length(config.min_length, config.max_length);
    std::uniform_int_distribution<std::size_t> any_residue(0, kCanonicalResidues.size() - 1);
    std::bernoulli_distribution from_family(0.75);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int i = 0; i < n; ++i) {
        std::ostringstream id;
        id << "SYN" << std::setw(4) << std::setfill('0') << i + 1;
        ProteinRecord rec;
        rec.id = id.str();
        const auto group = kResidueGroups[static_cast<std::size_t>(family[static_cast<std::size_t>(i)])];
        std::uniform_int_distribution<std::size_t> in_group(0, group.size() - 1);
        const int len = length(rng);
        Eigen::Vector3d pos = Eigen::Vector3d::Zero();
        for (int r = 0; r < len; ++r) {
            rec.sequence.push_back(from_family(rng) ? group[in_group(rng)] : kCanonicalResidues[any_residue(rng)]);
            rec.coords.push_back(pos);
            Eigen::Vector3d step(gauss(rng), gauss(rng), gauss(rng));
            pos += 3.8 * step.normalized();
        }
        data.proteins.push_back(std::move(rec));
    }

    std::set<std::pair<int, int>> chosen;
    std::vector<int> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<std::pair<int, int>> pairs;
    const auto add = [&](int a, int b) {
        const auto key = std::minmax(a, b);
        if (a == b || !chosen.insert(key).second) return;
        pairs.emplace_back(a, b);
    };
    for (int i = 1; i < n; ++i) {
        std::uniform_int_distribution<int> earlier(0, i - 1);
        add(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(earlier(rng))]);
    }
    std::vector<int> seq_family;
    for (const auto& p : data.proteins) seq_family.push_back(synthetic_family(p.sequence));
    std::uniform_int_distribution<int> any_protein(0, n - 1);
    std::bernoulli_distribution same_family(config.same_family_bias);
    while (static_cast<int>(pairs.size()) < config.pairs) {
        const int a = any_protein(rng);
        std::vector<int> mates;
        for (int b = 0; b < n; ++b) {
            const auto key = std::minmax(a, b);
            if (b != a && seq_family[static_cast<std::size_t>(b)] == seq_family[static_cast<std::size_t>(a)] &&
                !chosen.contains({key.first, key.second})) {
                mates.push_back(b);
            }
        }
        if (!mates.empty() && same_family(rng)) {
            std::uniform_int_distribution<std::size_t> pick(0, mates.size() - 1);
            add(a, mates[pick(rng)]);
        } else {
            add(a, any_protein(rng));
        }
    }

    for (const auto& [a, b] : pairs) {
        const auto& pa = data.proteins[static_cast<std::size_t>(a)];
        const auto& pb = data.proteins[static_cast<std::size_t>(b)];
        const int fa = seq_family[static_cast<std::size_t>(a)];
        const int fb = seq_family[static_cast<std::size_t>(b)];
        InteractionRecord rec{pa.id, pb.id, {}};
        rec.types.set(static_cast<std::size_t>((fa + fb) % kInteractionTypeCount));
        if (fa == fb) rec.types.set(static_cast<std::size_t>(InteractionType::binding));
        data.interactions.push_back(std::move(rec));
    }
    return data;
}

}  // namespace jmcppi
