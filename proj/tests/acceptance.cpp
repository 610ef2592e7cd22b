// Acceptance checks. Each criterion prints one PASS or FAIL line; the exit code is
// nonzero when any selected criterion fails.
//
//   acceptance                 run every criterion
//   acceptance --criterion N   run criterion N only

#include "test_util.hpp"

#include <chrono>
#include <cstring>
#include <iostream>
#include <map>
#include <sstream>

using namespace jmcppi;
using testutil::numeric_gradient;
using testutil::numeric_gradient_inplace;
using testutil::random_matrix;
using testutil::gradient_mismatch;

namespace {

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void check(bool ok, const std::string& what) {
        if (!ok) {
            if (pass) detail << "first failure: " << what << "; ";
            pass = false;
        }
    }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

constexpr double kStep = 1e-5;
constexpr double kTolerance = 1e-4;
constexpr int kSeeds = 20;

// Random weights turn a matrix output into a scalar.
ad::Var weighted_sum(const ad::Var& out, const Matrix& w) { return ad::sum(ad::mul_constant(out, w)); }

// ---------------------------------------------------------------------------

Outcome criterion_1() {
    Outcome o;
    const auto t0 = Clock::now();
    double worst = 0.0;
    const auto record = [&](double err, const std::string& what) {
        worst = std::max(worst, err);
        o.check(err < kTolerance, what + " relative error " + std::to_string(err));
    };

    for (int s = 0; s < kSeeds; ++s) {
        std::mt19937_64 rng(1000 + s);
        // Reconstruction losses.
        const Matrix x0 = random_matrix(6, 7, rng);
        const Matrix xh0 = random_matrix(6, 7, rng);
        {
            ad::Tape tape;
            auto x = tape.variable(x0);
            auto xh = tape.variable(xh0);
            tape.backward(loss_re(x, xh));
            record(gradient_mismatch(tape.gradient(xh), numeric_gradient([&](const Matrix& m) { return loss_re(x0, m); }, xh0, kStep)),
                   "loss_re d/dx_hat");
            record(gradient_mismatch(tape.gradient(x), numeric_gradient([&](const Matrix& m) { return loss_re(m, xh0); }, x0, kStep)),
                   "loss_re d/dx");
        }
        {
            ad::Tape tape;
            auto x = tape.variable(x0);
            auto xh = tape.variable(xh0);
            tape.backward(loss_msre(x, xh, 1.5));
            record(gradient_mismatch(tape.gradient(xh),
                                  numeric_gradient([&](const Matrix& m) { return loss_msre(x0, m, 1.5); }, xh0, kStep)),
                   "loss_msre d/dx_hat");
            record(gradient_mismatch(tape.gradient(x),
                                  numeric_gradient([&](const Matrix& m) { return loss_msre(m, xh0, 1.5); }, x0, kStep)),
                   "loss_msre d/dx");
        }
        // Interaction loss.
        {
            const Matrix z0 = random_matrix(5, 7, rng, 2.0);
            const Matrix y = testutil::random_binary(5, 7, rng);
            ad::Tape tape;
            auto z = tape.variable(z0);
            tape.backward(loss_in(z, y));
            record(gradient_mismatch(tape.gradient(z), numeric_gradient([&](const Matrix& m) { return loss_in(m, y); }, z0, kStep)),
                   "loss_in");
        }
        // Contrastive loss.
        {
            const Matrix a0 = random_matrix(5, 4, rng);
            const Matrix b0 = random_matrix(5, 4, rng);
            ad::Tape tape;
            auto a = tape.variable(a0);
            auto b = tape.variable(b0);
            tape.backward(info_nce(a, b, 0.6));
            record(gradient_mismatch(tape.gradient(a), numeric_gradient([&](const Matrix& m) { return info_nce(m, b0, 0.6); }, a0, kStep)),
                   "info_nce d/anchor");
            record(gradient_mismatch(tape.gradient(b), numeric_gradient([&](const Matrix& m) { return info_nce(a0, m, 0.6); }, b0, kStep)),
                   "info_nce d/view");
        }
        // One attention layer: gradients for the input and every projection.
        {
            nn::Rng init(rng());
            const Index n = 6;
            const EdgeList edges = testutil::random_symmetric_edges(n, 0.5, rng);
            GatParams p("gat", 4, 3, 2, init);
            // Independent normalizing projection so that both key paths are exercised.
            p.key_norm.value = random_matrix(4, 6, rng, 0.5);
            const Matrix x0 = random_matrix(n, 4, rng);
            const Matrix w = random_matrix(n, 6, rng);
            const auto scalar = [&](const Matrix& xin) {
                return (gat_layer(edges, xin, p, HeadCombine::concat).array() * w.array()).sum();
            };
            nn::ParameterList list;
            p.register_into(list);
            list.zero_grad();
            ad::Tape tape;
            auto x = tape.variable(x0);
            tape.backward(weighted_sum(gat_layer(tape, edges, x, p, HeadCombine::concat).features, w));
            record(gradient_mismatch(tape.gradient(x), numeric_gradient(scalar, x0, kStep)), "gat_layer d/x");
            for (auto* param : list.params) {
                const Matrix analytic = param->grad;
                record(gradient_mismatch(analytic, numeric_gradient_inplace([&] { return scalar(x0); }, param->value, kStep)),
                       "gat_layer d/" + param->name);
            }
        }
        // One GIN layer in training mode (batch statistics), no dropout.
        {
            nn::Rng init(rng());
            const Index n = 7;
            const EdgeList edges = testutil::random_symmetric_edges(n, 0.4, rng);
            GinLayerParams p("gin", 3, 5, init);
            p.epsilon.value(0, 0) = 0.3;
            // Zero-initialized biases put dead rows exactly on the ReLU kink.
            p.fc1.bias.value = random_matrix(1, 5, rng, 0.5);
            p.fc2.bias.value = random_matrix(1, 5, rng, 0.5);
            const Matrix h0 = random_matrix(n, 3, rng);
            const Matrix w = random_matrix(n, 5, rng);
            nn::Rng unused(0);
            const auto scalar = [&](const Matrix& hin) {
                ad::Tape t;
                return weighted_sum(gin_layer(t, edges, t.constant(hin), p, 0.0, true, unused), w).item();
            };
            nn::ParameterList list;
            p.register_into(list);
            list.zero_grad();
            ad::Tape tape;
            auto h = tape.variable(h0);
            tape.backward(weighted_sum(gin_layer(tape, edges, h, p, 0.0, true, unused), w));
            record(gradient_mismatch(tape.gradient(h), numeric_gradient(scalar, h0, kStep)), "gin_layer d/h");
            for (auto* param : list.params) {
                const Matrix analytic = param->grad;
                record(gradient_mismatch(analytic, numeric_gradient_inplace([&] { return scalar(h0); }, param->value, kStep)),
                       "gin_layer d/" + param->name);
            }
        }
    }
    const double elapsed = seconds_since(t0);
    o.check(elapsed < 60.0, "took " + std::to_string(elapsed) + " s");
    o.detail << kSeeds << " seeds per function, worst relative error " << worst << ", " << elapsed << " s";
    return o;
}

Outcome criterion_2() {
    Outcome o;
    std::mt19937_64 rng(2);
    double worst = 0.0;
    const auto near = [&](double got, double want, const std::string& what) {
        worst = std::max(worst, std::abs(got - want));
        o.check(std::abs(got - want) <= 1e-9, what + " = " + std::to_string(got));
    };
    for (int t = 0; t < 20; ++t) {
        const Matrix x = random_matrix(5, 7, rng);
        // Parallel rows: positive multiples.
        Matrix scaled = x;
        for (Index i = 0; i < 5; ++i) scaled.row(i) *= 0.1 + 3.0 * double(i);
        near(loss_msre(x, scaled, 1.5), 0.0, "msre parallel");
        near(loss_msre(x, scaled, 2.0), 0.0, "msre parallel delta 2");
        // A single antiparallel row at delta = 2.
        near(loss_msre(x.topRows(1), Matrix(-2.5 * x.topRows(1)), 2.0), 4.0, "msre antiparallel");
        Matrix mixed = x;
        mixed.row(2) *= -1.0;
        near(loss_msre(x, mixed, 2.0) * 5.0, 4.0, "msre one antiparallel row of five");
        // Probability 0.5 on every class.
        const Matrix y = testutil::random_binary(4, 7, rng);
        near(loss_in(Matrix::Zero(4, 7), y), 7.0 * std::log(2.0), "loss_in at p = 0.5");
        // Identical embeddings.
        const Index n = 2 + t;
        const Matrix h = random_matrix(1, 6, rng).replicate(n, 1);
        near(info_nce(h, h, 0.6), std::log(double(n - 1)), "info_nce identical");
    }
    o.detail << "worst absolute deviation " << worst;
    return o;
}

Outcome criterion_3() {
    Outcome o;
    std::mt19937_64 rng(3);
    double worst = 0.0;
    std::uniform_int_distribution<Index> size(2, 30);
    std::uniform_int_distribution<int> heads(1, 4);
    for (int g = 0; g < 100; ++g) {
        const Index n = size(rng);
        const EdgeList edges = testutil::random_symmetric_edges(n, 0.3, rng);
        nn::Rng init(rng());
        GatParams p("gat", 7, 4, heads(rng), init);
        p.key.value = random_matrix(7, p.key.value.cols(), rng);
        p.key_norm.value = p.key.value;
        const Matrix x = random_matrix(n, 7, rng);
        const Matrix a = attention_coefficients(edges, x, p);
        Matrix sums = Matrix::Zero(n, p.heads);
        std::vector<bool> has_incoming(static_cast<std::size_t>(n), false);
        for (std::size_t e = 0; e < edges.size(); ++e) {
            sums.row(edges.targets[e]) += a.row(static_cast<Index>(e));
            has_incoming[static_cast<std::size_t>(edges.targets[e])] = true;
        }
        for (Index i = 0; i < n; ++i) {
            if (!has_incoming[static_cast<std::size_t>(i)]) continue;
            for (int h = 0; h < p.heads; ++h) worst = std::max(worst, std::abs(sums(i, h) - 1.0));
        }
    }
    o.check(worst <= 1e-6, "sum deviates by " + std::to_string(worst));
    o.detail << "100 graphs, worst |sum - 1| = " << worst;
    return o;
}

Outcome criterion_4() {
    Outcome o;
    std::mt19937_64 rng(4);
    std::uniform_int_distribution<Index> rows(1, 400);
    int cases = 0;
    for (int t = 0; t < 200; ++t) {
        const Index m = rows(rng);
        const Matrix x = random_matrix(m, 7, rng);
        const RowVector token = random_matrix(1, 7, rng);
        nn::Rng r(rng());
        const auto [masked, chosen] = apply_mask(x, token, 0.25, r);
        const auto want = static_cast<std::size_t>(std::llround(0.25 * double(m)));
        o.check(chosen.size() == want, "mask count for M = " + std::to_string(m));
        const std::set<Index> set(chosen.begin(), chosen.end());
        o.check(set.size() == chosen.size(), "mask rows distinct");
        for (Index i = 0; i < m; ++i) {
            const bool ok = set.contains(i) ? masked.row(i) == token : masked.row(i) == x.row(i);
            o.check(ok, "masked content for M = " + std::to_string(m));
        }

        const Index nodes = 1 + m / 4;
        EdgeList e;
        std::uniform_int_distribution<Index> node(0, nodes - 1);
        for (Index k = 0; k < m; ++k) e.push_back(node(rng), node(rng));
        const auto [rewired_edges, slots] = perturb_edges(e, nodes, 0.25, r);
        o.check(slots.size() == static_cast<std::size_t>(m / 4), "rewired count for |R| = " + std::to_string(m));
        const std::set<Index> touched(slots.begin(), slots.end());
        for (std::size_t k = 0; k < e.size(); ++k) {
            if (touched.contains(Index(k))) continue;
            o.check(rewired_edges.sources[k] == e.sources[k] && rewired_edges.targets[k] == e.targets[k],
                    "untouched slot changed");
        }

        const auto [same_edges, none] = perturb_edges(e, nodes, 0.0, r);
        o.check(none.empty() && same_edges.sources == e.sources && same_edges.targets == e.targets,
                "edge rate 0 changed the edges");
        const auto [same_nodes, keep] = perturb_nodes(x, 0.0, r);
        o.check(std::memcmp(same_nodes.data(), x.data(), sizeof(double) * std::size_t(x.size())) == 0,
                "node rate 0 changed the features");
        const auto view = make_view(x, e, PerturbSpec::shared(0.0, rng(), ViewTag::alpha));
        o.check(std::memcmp(view.features.data(), x.data(), sizeof(double) * std::size_t(x.size())) == 0 &&
                    view.edges.sources == e.sources && view.edges.targets == e.targets,
                "view at rate 0 differs from its input");
        ++cases;
    }
    o.detail << cases << " random sizes; mask = round(0.25 M), rewired = floor(0.25 |R|), rate 0 bit-identical";
    return o;
}

Outcome criterion_5() {
    Outcome o;
    const auto r = split_random(7401, 5);
    o.check(r.train.size() == 4440 && r.val.size() == 1480 && r.test.size() == 1481, "random split sizes");
    o.check(split_random(7401, 5) == r, "random split not deterministic");
    long long bs = 0;
    int graphs = 0;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        std::mt19937_64 rng(seed);
        std::uniform_int_distribution<int> proteins(8, 60);
        const int n = proteins(rng);
        std::uniform_int_distribution<int> pairs(n - 1, std::min(n * (n - 1) / 2, 4 * n));
        const Dataset d = synth_dataset({n, pairs(rng), 10, 20, 0.5, seed});
        EmbeddingTable t;
        for (const auto& p : d.proteins) t.ids.push_back(p.id);
        t.values = Matrix::Zero(t.size(), 1);
        const auto g = build_interaction_graph(d.interactions, t);
        const Index total = g.pair_count();
        const auto held = Index(std::floor(0.4 * double(total)));
        for (auto scheme : {SplitScheme::bfs, SplitScheme::dfs}) {
            const auto s = split_traversal(g, scheme, seed);
            s.validate(total);
            o.check(split_traversal(g, scheme, seed) == s, "traversal split not deterministic");
            const auto tags = classify_subsets(s, g);
            bs += std::count(tags.begin(), tags.end(), SubsetTag::BS);
            const auto v = Index(s.val.size());
            const auto te = Index(s.test.size());
            o.check(Index(s.train.size()) == total - held, "train size for P = " + std::to_string(total));
            o.check(v + te == held && (v == held / 2 || v == held - held / 2) &&
                        (te == held / 2 || te == held - held / 2),
                    "val/test sizes " + std::to_string(v) + "/" + std::to_string(te) + " for P = " +
                        std::to_string(total));
            ++graphs;
        }
    }
    o.check(bs == 0, std::to_string(bs) + " BS pairs in test");
    o.detail << "random 7401 -> " << r.train.size() << "/" << r.val.size() << "/" << r.test.size() << "; " << graphs
             << " traversal splits, BS pairs in test: " << bs;
    return o;
}

Outcome criterion_6() {
    Outcome o;
    std::mt19937_64 rng(6);
    std::uniform_int_distribution<Index> rows(1, 15);
    std::uniform_int_distribution<int> level(0, 20);
    double worst = 0.0;
    for (int t = 0; t < 100; ++t) {
        const Index p = rows(rng);
        const Matrix y = testutil::random_binary(p, 7, rng, 0.3);
        const Matrix pred = testutil::random_binary(p, 7, rng, 0.35);
        Matrix prob(p, 7);
        for (Index i = 0; i < prob.size(); ++i) prob.data()[i] = level(rng) / 20.0;

        const auto k = testutil::count_cells(pred, y, 0, 7);
        const auto c = confusion(pred, y);
        o.check(c.tp == k.tp && c.fp == k.fp && c.fn == k.fn && c.tn == k.tn, "micro counts");
        const double d = double(2 * k.tp + k.fp + k.fn);
        const double f1 = d == 0.0 ? 1.0 : 2.0 * double(k.tp) / d;
        worst = std::max(worst, std::abs(micro_f1(pred, y) - f1));

        const auto per = per_type_metrics(pred, y);
        for (Index col = 0; col < 7; ++col) {
            const auto kc = testutil::count_cells(pred, y, col, col + 1);
            const auto& m = per[static_cast<std::size_t>(col)];
            o.check(m.counts.tp == kc.tp && m.counts.fp == kc.fp && m.counts.fn == kc.fn && m.counts.tn == kc.tn,
                    "per-type counts");
            const double dc = double(2 * kc.tp + kc.fp + kc.fn);
            worst = std::max(worst, std::abs(m.f1 - (dc == 0.0 ? 1.0 : 2.0 * double(kc.tp) / dc)));
            worst = std::max(worst, std::abs(m.accuracy - double(kc.tp + kc.tn) / double(p)));
        }

        const auto curve = pr_curve(prob, y);
        const auto oracle = testutil::pr_oracle(prob, y);
        o.check(curve.size() == oracle.size(), "pr curve length");
        for (std::size_t i = 0; i < std::min(curve.size(), oracle.size()); ++i) {
            o.check(curve[i].threshold == oracle[i].threshold, "pr threshold");
            worst = std::max(worst, std::abs(curve[i].precision - oracle[i].precision));
            worst = std::max(worst, std::abs(curve[i].recall - oracle[i].recall));
        }
    }
    o.check(worst <= 1e-12, "ratio deviation " + std::to_string(worst));
    Matrix y(2, 2), pred(2, 2);
    y << 1, 0, 1, 1;
    pred << 1, 1, 1, 0;
    const double example = micro_f1(pred, y);
    o.check(std::abs(example - 0.6667) <= 1e-4, "worked example " + std::to_string(example));
    o.detail << "100 instances, worst ratio deviation " << worst << "; worked example " << example;
    return o;
}

struct DeskData {
    Dataset data;
    std::vector<ProteinStructureGraph> graphs;
    SplitSpec split;
};

DeskData desk_data(std::uint64_t seed, const RunConfig& cfg) {
    DeskData d;
    d.data = synth_dataset({20, 60, 30, 60, 0.7, seed});
    d.graphs = build_graphs(d.data, cfg);
    d.split = make_split(d.data.interactions, d.data.proteins, cfg);
    return d;
}

Outcome criterion_7() {
    Outcome o;
    {
        const RunConfig cfg = testutil::desk_config(100);
        const auto t0 = Clock::now();
        const DeskData d = desk_data(100, cfg);
        const PipelineResult r = run_pipeline(d.data, d.graphs, d.split, cfg);
        const double elapsed = seconds_since(t0);
        double best_train = 0.0;
        int reached = 0;
        for (const auto& e : r.stage2.log) {
            if (e.train_f1 > best_train) best_train = e.train_f1;
            if (reached == 0 && e.train_f1 >= 0.95) reached = e.epoch;
        }
        o.check(reached > 0 && reached <= 200, "train micro-F1 peaked at " + std::to_string(best_train));
        o.check(elapsed < 300.0, "desk run took " + std::to_string(elapsed) + " s");
        o.detail << "train micro-F1 >= 0.95 at epoch " << reached << " (max " << best_train << "), " << elapsed
                 << " s; ";
    }
    int not_better = 0;
    std::ostringstream per_seed;
    for (int s = 0; s < 10; ++s) {
        const std::uint64_t seed = 100 + static_cast<std::uint64_t>(s);
        RunConfig full = testutil::desk_config(seed);
        const DeskData d = desk_data(seed, full);
        RunConfig ablated = full;
        ablated.ablation.set("no_L_RE");
        ablated.ablation.set("no_L_MSRE");
        const double f_full = run_pipeline(d.data, d.graphs, d.split, full).val.micro_f1;
        const double f_abl = run_pipeline(d.data, d.graphs, d.split, ablated).val.micro_f1;
        if (f_abl <= f_full) ++not_better;
        per_seed << (s ? " " : "") << seed << ":" << f_full << "/" << f_abl;
    }
    o.check(not_better >= 7, "ablation not above full in only " + std::to_string(not_better) + "/10 seeds");
    o.detail << "ablated val micro-F1 <= full in " << not_better << "/10 seeds (seed:full/ablated " << per_seed.str()
             << ")";
    return o;
}

Outcome criterion_8() {
    Outcome o;
    const RunConfig cfg = testutil::desk_config(200);
    const DeskData d = desk_data(200, cfg);
    std::string logs[2];
    for (auto& text : logs) {
        const PipelineResult r = run_pipeline(d.data, d.graphs, d.split, cfg);
        std::ostringstream out;
        write_stage1_log(out, r.stage1.log);
        write_stage2_log(out, r.stage2.log);
        // Raw bit patterns as well, so formatting cannot hide a difference.
        for (const auto& e : r.stage1.log) out << std::hexfloat << e.loss << '\n';
        for (const auto& e : r.stage2.log) out << std::hexfloat << e.loss << ' ' << e.l_in << '\n';
        text = out.str();
    }
    o.check(logs[0] == logs[1], "loss logs differ");
    o.detail << "two runs, " << logs[0].size() << " bytes of log each, identical: " << (logs[0] == logs[1]);
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    const std::map<int, Outcome (*)()> criteria{{1, criterion_1}, {2, criterion_2}, {3, criterion_3},
                                                {4, criterion_4}, {5, criterion_5}, {6, criterion_6},
                                                {7, criterion_7}, {8, criterion_8}};
    std::vector<int> selected;
    for (int i = 1; i < argc; ++i) {
        if (std::strcmp(argv[i], "--criterion") == 0 && i + 1 < argc) {
            selected.push_back(std::atoi(argv[++i]));
        } else {
            std::cerr << "usage: acceptance [--criterion N]...\n";
            return 2;
        }
    }
    if (selected.empty()) {
        for (const auto& [n, fn] : criteria) selected.push_back(n);
    }
    bool all = true;
    for (int n : selected) {
        const auto it = criteria.find(n);
        if (it == criteria.end()) {
            std::cerr << "unknown criterion " << n << '\n';
            return 2;
        }
        Outcome o;
        try {
            o = it->second();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail << "exception: " << e.what();
        }
        std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << n << ": " << o.detail.str() << std::endl;
        all = all && o.pass;
    }
    return all ? 0 : 1;
}
