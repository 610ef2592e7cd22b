#include "test_util.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace jmcppi;

namespace {

std::vector<ProteinRecord> parse_proteins_text(const std::string& text) {
    std::istringstream in(text);
    return parse_proteins(in);
}

std::vector<InteractionRecord> parse_ppi_text(const std::string& text) {
    std::istringstream in(text);
    return parse_ppi(in);
}

template <typename F>
std::string error_of(F&& f) {
    try {
        f();
    } catch (const std::exception& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST(LoadProteins, MinimalRecord) {
    const auto p = parse_proteins_text(R"({"id": "P1", "sequence": "GA", "coords": [[0,0,0],[3.8,0,0]]})"
                                       "\n");
    ASSERT_EQ(p.size(), 1u);
    EXPECT_EQ(p[0].id, "P1");
    EXPECT_EQ(p[0].length(), 2);
    EXPECT_DOUBLE_EQ(p[0].coords[1].x(), 3.8);
}

TEST(LoadProteins, CoordinateCountMismatchNamesTheProtein) {
    const auto msg = error_of(
        [] { parse_proteins_text(R"({"id": "Q9", "sequence": "GAV", "coords": [[0,0,0],[1,0,0]]})"); });
    EXPECT_NE(msg.find("Q9"), std::string::npos) << msg;
    EXPECT_THROW(parse_proteins_text(R"({"id": "Q9", "sequence": "GAV", "coords": [[0,0,0],[1,0,0]]})"),
                 ValidationError);
}

TEST(LoadProteins, EmptyInputGivesNoRecords) { EXPECT_TRUE(parse_proteins_text("").empty()); }

TEST(LoadProteins, MalformedLineNamesTheLineNumber) {
    const std::string text = R"({"id": "A", "sequence": "G", "coords": [[0,0,0]]})"
                             "\n{not json\n";
    const auto msg = error_of([&] { parse_proteins_text(text); });
    EXPECT_NE(msg.find("line 2"), std::string::npos) << msg;
    EXPECT_THROW(parse_proteins_text(text), ParseError);
}

TEST(LoadProteins, NonCanonicalResidueRejected) {
    EXPECT_THROW(parse_proteins_text(R"({"id": "A", "sequence": "GX", "coords": [[0,0,0],[1,1,1]]})"),
                 ValidationError);
}

TEST(LoadProteins, WriteThenParseRoundTrips) {
    std::vector<ProteinRecord> records(2);
    records[0] = {"A", "GAV", {{0, 0, 0}, {1.25, -2, 3}, {0.1, 0.2, 0.3}}};
    records[1] = {"B", "W", {{5, 5, 5}}};
    std::ostringstream out;
    write_proteins(out, records);
    const auto back = parse_proteins_text(out.str());
    ASSERT_EQ(back.size(), 2u);
    for (std::size_t i = 0; i < 2; ++i) {
        EXPECT_EQ(back[i].id, records[i].id);
        EXPECT_EQ(back[i].sequence, records[i].sequence);
        for (std::size_t r = 0; r < records[i].coords.size(); ++r) EXPECT_EQ(back[i].coords[r], records[i].coords[r]);
    }
}

TEST(LoadPpi, RowsOfOnePairMergeAcrossOrientation) {
    const auto r = parse_ppi_text("a\tb\tmode\nP1\tP2\tbinding\nP2\tP1\treaction\n");
    ASSERT_EQ(r.size(), 1u);
    EXPECT_EQ(r[0].protein_a, "P1");
    EXPECT_EQ(r[0].protein_b, "P2");
    TypeSet expected;
    expected.set(static_cast<std::size_t>(InteractionType::binding));
    expected.set(static_cast<std::size_t>(InteractionType::reaction));
    EXPECT_EQ(r[0].types, expected);
}

TEST(LoadPpi, SelfInteractionRejected) {
    EXPECT_THROW(parse_ppi_text("a\tb\tmode\nP1\tP1\tbinding\n"), ValidationError);
}

TEST(LoadPpi, UnknownTypeListsTheValidTypes) {
    const auto msg = error_of([] { parse_ppi_text("a\tb\tmode\nP1\tP2\tfusion\n"); });
    EXPECT_NE(msg.find("fusion"), std::string::npos);
    for (auto name : kInteractionTypeNames) EXPECT_NE(msg.find(name), std::string::npos) << name;
}

TEST(LoadPpi, NoDuplicatePairsAndTypeCountMatchesDistinctRows) {
    std::mt19937_64 rng(5);
    const std::vector<std::string> ids{"A", "B", "C", "D", "E"};
    std::uniform_int_distribution<std::size_t> pick(0, ids.size() - 1);
    std::uniform_int_distribution<std::size_t> type(0, 6);
    for (int trial = 0; trial < 20; ++trial) {
        std::ostringstream text;
        text << "a\tb\tmode\n";
        std::set<std::tuple<std::string, std::string, std::size_t>> distinct;
        for (int row = 0; row < 30; ++row) {
            auto a = ids[pick(rng)];
            auto b = ids[pick(rng)];
            if (a == b) continue;
            const auto t = type(rng);
            text << a << '\t' << b << '\t' << kInteractionTypeNames[t] << '\n';
            distinct.insert({std::min(a, b), std::max(a, b), t});
        }
        const auto records = parse_ppi_text(text.str());
        std::set<std::pair<std::string, std::string>> pairs;
        std::size_t assignments = 0;
        for (const auto& r : records) {
            EXPECT_TRUE(pairs.insert(std::minmax(r.protein_a, r.protein_b)).second);
            EXPECT_TRUE(r.types.any());
            assignments += r.types.count();
        }
        EXPECT_EQ(assignments, distinct.size());
    }
}

TEST(LoadPpi, WriteThenParseRoundTrips) {
    const auto r = parse_ppi_text("a\tb\tmode\nP1\tP2\tbinding\nP2\tP3\texpression\nP1\tP2\tcatalysis\n");
    std::ostringstream out;
    write_ppi(out, r);
    const auto back = parse_ppi_text(out.str());
    ASSERT_EQ(back.size(), r.size());
    for (std::size_t i = 0; i < r.size(); ++i) {
        EXPECT_EQ(back[i].protein_a, r[i].protein_a);
        EXPECT_EQ(back[i].protein_b, r[i].protein_b);
        EXPECT_EQ(back[i].types, r[i].types);
    }
}

TEST(Featurize, IdenticalResiduesGiveIdenticalRows) {
    const Matrix f = featurize("GG", AminoAcidPropertyTable::standard());
    ASSERT_EQ(f.rows(), 2);
    ASSERT_EQ(f.cols(), kFeatureCount);
    EXPECT_EQ(f.row(0), f.row(1));
}

TEST(Featurize, RowsFollowTheTableInSequenceOrder) {
    const auto& table = AminoAcidPropertyTable::standard();
    const std::string seq = "MKVLAW";
    const Matrix f = featurize(seq, table);
    ASSERT_EQ(f.rows(), static_cast<Index>(seq.size()));
    for (std::size_t i = 0; i < seq.size(); ++i) {
        for (int c = 0; c < kFeatureCount; ++c) EXPECT_EQ(f(static_cast<Index>(i), c), table.row(seq[i])[c]);
    }
}

TEST(Featurize, NonCanonicalLetterReportsItsPosition) {
    const auto msg = error_of([] { featurize("GXG", AminoAcidPropertyTable::standard()); });
    EXPECT_NE(msg.find("position 2"), std::string::npos) << msg;
}

TEST(Featurize, RepeatedCallsAreBitIdentical) {
    const auto& table = AminoAcidPropertyTable::standard();
    const std::vector<Matrix> train{featurize("ACDEFGHIKL", table), featurize("MNPQRSTVWY", table)};
    const auto s = FeatureStandardizer::fit(train);
    EXPECT_EQ(featurize("WYKDE", table, s), featurize("WYKDE", table, s));
}

TEST(Standardizer, TrainingColumnsHaveZeroMeanAndUnitVariance) {
    const auto& table = AminoAcidPropertyTable::standard();
    const std::vector<Matrix> train{featurize("ACDEFGHIKLMN", table), featurize("PQRSTVWYAAGG", table)};
    const auto s = FeatureStandardizer::fit(train);
    Matrix all(24, kFeatureCount);
    all << s.apply(train[0]), s.apply(train[1]);
    const RowVector mean = all.colwise().mean();
    const RowVector var = (all.rowwise() - mean).array().square().colwise().mean();
    for (int c = 0; c < kFeatureCount; ++c) {
        EXPECT_NEAR(mean(c), 0.0, 1e-12);
        EXPECT_NEAR(var(c), 1.0, 1e-12);
    }
}

TEST(Standardizer, ConstantColumnKeepsUnitScale) {
    const std::vector<Matrix> train{Matrix::Constant(3, kFeatureCount, 2.0)};
    const auto s = FeatureStandardizer::fit(train);
    EXPECT_EQ(s.scale, RowVector::Ones(kFeatureCount));
    EXPECT_EQ(s.apply(train[0]), Matrix::Zero(3, kFeatureCount));
}

TEST(PropertyTable, ShippedFileEqualsTheBuiltInTable) {
    const auto loaded = AminoAcidPropertyTable::load(std::string(JMCPPI_SOURCE_DIR) + "/data/aa_properties.tsv");
    EXPECT_EQ(loaded, AminoAcidPropertyTable::standard());
    EXPECT_EQ(loaded.hash(), AminoAcidPropertyTable::standard().hash());
}

TEST(PropertyTable, TwentyFiniteRowsAndAVersion) {
    const auto& t = AminoAcidPropertyTable::standard();
    EXPECT_GE(t.version(), 1);
    for (char code : kCanonicalResidues) {
        for (double v : t.row(code)) EXPECT_TRUE(std::isfinite(v));
    }
    EXPECT_THROW((void)t.row('X'), ValidationError);
}

TEST(PropertyTable, SerializeParseRoundTripsAndHashTracksValues) {
    const auto& t = AminoAcidPropertyTable::standard();
    std::istringstream in(t.serialize());
    const auto back = AminoAcidPropertyTable::parse(in);
    EXPECT_EQ(back, t);

    std::string text = t.serialize();
    const auto pos = text.find("\nG\t");
    ASSERT_NE(pos, std::string::npos);
    text.insert(pos + 3, "1");
    std::istringstream changed(text);
    EXPECT_NE(AminoAcidPropertyTable::parse(changed).hash(), t.hash());
}

TEST(PropertyTable, MissingResidueRejected) {
    std::string text = AminoAcidPropertyTable::standard().serialize();
    const auto pos = text.find("\nW\t");
    ASSERT_NE(pos, std::string::npos);
    text.erase(pos + 1, text.find('\n', pos + 1) - pos);
    std::istringstream in(text);
    EXPECT_THROW(AminoAcidPropertyTable::parse(in), ParseError);
}
