#include "jmcppi/data_model.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

namespace jmcppi {

namespace {

// Keep in sync with data/aa_properties.tsv; a unit test compares the two.
constexpr const char* kStandardTable = R"(# jmcppi amino-acid property table
# version: 1
residue	tpsa	polarity	isoelectric_point	acid_base	log_p	hbond_donors	hbond_acceptors
A	63.3	8.1	6.00	0	-2.85	2	3
C	64.3	5.5	5.07	0	-2.49	3	4
D	101	13.0	2.77	-1	-3.89	3	5
E	101	12.3	3.22	-1	-3.69	3	5
F	63.3	5.2	5.48	0	-1.38	2	3
G	63.3	9.0	5.97	0	-3.21	2	3
H	92	10.4	7.59	1	-3.32	3	4
I	63.3	5.2	6.02	0	-1.70	2	3
K	89.3	11.3	9.74	1	-3.05	3	4
L	63.3	4.9	5.98	0	-1.52	2	3
M	88.6	5.7	5.74	0	-1.87	2	4
N	106	11.6	5.41	0	-3.82	3	4
P	49.3	8.0	6.30	0	-2.54	2	3
Q	106	10.5	5.65	0	-3.64	3	4
R	125	10.5	10.76	1	-4.20	4	4
S	83.6	9.2	5.68	0	-3.07	3	4
T	83.6	8.6	5.60	0	-2.94	3	4
V	63.3	5.9	5.96	0	-2.26	2	3
W	79.1	5.4	5.89	0	-1.06	3	3
Y	83.6	6.2	5.66	0	-2.26	3	4
)";

std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open " + path.string());
    }
    return in;
}

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, '\t')) {
        if (!field.empty() && field.back() == '\r') field.pop_back();
        fields.push_back(field);
    }
    return fields;
}

bool is_blank(const std::string& line) {
    return std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c) != 0; });
}

std::string valid_type_list() {
    std::string out;
    for (auto name : kInteractionTypeNames) {
        if (!out.empty()) out += ", ";
        out += name;
    }
    return out;
}

}  // namespace

void EdgeList::validate(Index node_count) const {
    if (sources.size() != targets.size()) {
        throw ValidationError("EdgeList: sources and targets differ in length");
    }
    for (std::size_t i = 0; i < sources.size(); ++i) {
        if (sources[i] < 0 || sources[i] >= node_count || targets[i] < 0 || targets[i] >= node_count) {
            throw ValidationError("EdgeList: edge " + std::to_string(i) + " references a node outside [0, " +
                                  std::to_string(node_count) + ")");
        }
    }
}

std::optional<InteractionType> parse_interaction_type(std::string_view name) {
    for (std::size_t i = 0; i < kInteractionTypeNames.size(); ++i) {
        if (kInteractionTypeNames[i] == name) {
            return static_cast<InteractionType>(i);
        }
    }
    return std::nullopt;
}

int residue_index(char code) {
    const auto pos = kCanonicalResidues.find(code);
    return pos == std::string_view::npos ? -1 : static_cast<int>(pos);
}

void ProteinRecord::validate() const {
    if (id.empty()) {
        throw ValidationError("protein record has an empty id");
    }
    if (sequence.empty()) {
        throw ValidationError("protein " + id + ": empty sequence");
    }
    if (coords.size() != sequence.size()) {
        throw ValidationError("protein " + id + ": " + std::to_string(sequence.size()) + " residues but " +
                              std::to_string(coords.size()) + " coordinates");
    }
    for (std::size_t i = 0; i < sequence.size(); ++i) {
        if (residue_index(sequence[i]) < 0) {
            throw ValidationError("protein " + id + ": non-canonical residue '" + std::string(1, sequence[i]) +
                                  "' at position " + std::to_string(i + 1));
        }
        if (!coords[i].allFinite()) {
            throw ValidationError("protein " + id + ": non-finite coordinate at position " + std::to_string(i + 1));
        }
    }
}

const AminoAcidPropertyTable& AminoAcidPropertyTable::standard() {
    static const AminoAcidPropertyTable table = [] {
        std::istringstream in(kStandardTable);
        return parse(in);
    }();
    return table;
}

AminoAcidPropertyTable AminoAcidPropertyTable::load(const std::filesystem::path& path) {
    auto in = open_input(path);
    return parse(in);
}

AminoAcidPropertyTable AminoAcidPropertyTable::parse(std::istream& in) {
    AminoAcidPropertyTable table;
    std::array<bool, 20> seen{};
    bool header_seen = false;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (is_blank(line)) continue;
        if (line[0] == '#') {
            const auto pos = line.find("version:");
            if (pos != std::string::npos) {
                table.version_ = std::stoi(line.substr(pos + 8));
            }
            continue;
        }
        const auto fields = split_tabs(line);
        if (!header_seen) {
            if (fields.size() != kFeatureCount + 1 || fields[0] != "residue") {
                throw ParseError("property table line " + std::to_string(line_no) + ": expected header row");
            }
            header_seen = true;
            continue;
        }
        if (fields.size() != kFeatureCount + 1 || fields[0].size() != 1) {
            throw ParseError("property table line " + std::to_string(line_no) + ": expected residue + 7 values");
        }
        const int idx = residue_index(fields[0][0]);
        if (idx < 0) {
            throw ParseError("property table line " + std::to_string(line_no) + ": unknown residue " + fields[0]);
        }
        if (seen[idx]) {
            throw ParseError("property table line " + std::to_string(line_no) + ": duplicate residue " + fields[0]);
        }
        seen[idx] = true;
        for (int c = 0; c < kFeatureCount; ++c) {
            try {
                std::size_t used = 0;
                table.rows_[idx][c] = std::stod(fields[c + 1], &used);
                if (used != fields[c + 1].size() || !std::isfinite(table.rows_[idx][c])) throw std::invalid_argument("");
            } catch (const std::exception&) {
                throw ParseError("property table line " + std::to_string(line_no) + ": bad number '" +
                                 fields[c + 1] + "'");
            }
        }
    }
    if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
        throw ParseError("property table: expected exactly 20 canonical residues");
    }
    if (table.version_ <= 0) {
        throw ParseError("property table: missing '# version: N' line");
    }
    return table;
}

const AminoAcidPropertyTable::Row& AminoAcidPropertyTable::row(char code) const {
    const int idx = residue_index(code);
    if (idx < 0) {
        throw ValidationError("non-canonical residue '" + std::string(1, code) + "'");
    }
    return rows_[idx];
}

std::string AminoAcidPropertyTable::serialize() const {
    std::ostringstream out;
    out << "# version: " << version_ << "\nresidue";
    for (auto name : kFeatureNames) out << '\t' << name;
    out << '\n' << std::setprecision(17);
    for (std::size_t i = 0; i < rows_.size(); ++i) {
        out << kCanonicalResidues[i];
        for (double v : rows_[i]) out << '\t' << v;
        out << '\n';
    }
    return out.str();
}

std::uint64_t AminoAcidPropertyTable::hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : serialize()) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::vector<ProteinRecord> parse_proteins(std::istream& in) {
    std::vector<ProteinRecord> proteins;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (is_blank(line)) continue;
        ProteinRecord record;
        try {
            const auto j = nlohmann::json::parse(line);
            record.id = j.at("id").get<std::string>();
            record.sequence = j.at("sequence").get<std::string>();
            for (const auto& xyz : j.at("coords")) {
                if (!xyz.is_array() || xyz.size() != 3) {
                    throw ParseError("coordinate entries must be [x, y, z]");
                }
                record.coords.emplace_back(xyz[0].get<double>(), xyz[1].get<double>(), xyz[2].get<double>());
            }
        } catch (const std::exception& e) {
            throw ParseError("protein file line " + std::to_string(line_no) + ": " + e.what());
        }
        record.validate();
        proteins.push_back(std::move(record));
    }
    return proteins;
}

std::vector<ProteinRecord> load_proteins(const std::filesystem::path& path) {
    auto in = open_input(path);
    return parse_proteins(in);
}

void write_proteins(std::ostream& out, std::span<const ProteinRecord> proteins) {
    for (const auto& p : proteins) {
        nlohmann::json coords = nlohmann::json::array();
        for (const auto& c : p.coords) coords.push_back({c.x(), c.y(), c.z()});
        out << nlohmann::json{{"id", p.id}, {"sequence", p.sequence}, {"coords", coords}}.dump() << '\n';
    }
}

std::vector<InteractionRecord> parse_ppi(std::istream& in) {
    std::vector<InteractionRecord> records;
    std::map<std::pair<std::string, std::string>, std::size_t> index;
    std::string line;
    int line_no = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (is_blank(line)) continue;
        const auto fields = split_tabs(line);
        if (!header_seen) {
            header_seen = true;
            if (fields.size() < 3) {
                throw ParseError("PPI file line " + std::to_string(line_no) + ": expected a 3-column header");
            }
            continue;
        }
        if (fields.size() != 3) {
            throw ParseError("PPI file line " + std::to_string(line_no) + ": expected 3 tab-separated fields");
        }
        const std::string& a = fields[0];
        const std::string& b = fields[1];
        if (a.empty() || b.empty()) {
            throw ParseError("PPI file line " + std::to_string(line_no) + ": empty protein id");
        }
        if (a == b) {
            throw ValidationError("PPI file line " + std::to_string(line_no) + ": self-interaction of " + a);
        }
        const auto type = parse_interaction_type(fields[2]);
        if (!type) {
            throw ValidationError("PPI file line " + std::to_string(line_no) + ": unknown interaction type '" +
                                  fields[2] + "' (valid: " + valid_type_list() + ")");
        }
        auto key = std::minmax(a, b);
        auto [it, inserted] = index.try_emplace({key.first, key.second}, records.size());
        if (inserted) {
            records.push_back(InteractionRecord{a, b, {}});
        }
        records[it->second].types.set(static_cast<std::size_t>(*type));
    }
    return records;
}

std::vector<InteractionRecord> load_ppi(const std::filesystem::path& path) {
    auto in = open_input(path);
    return parse_ppi(in);
}

void write_ppi(std::ostream& out, std::span<const InteractionRecord> records) {
    out << "protein_a\tprotein_b\ttype\n";
    for (const auto& r : records) {
        for (std::size_t c = 0; c < kInteractionTypeNames.size(); ++c) {
            if (r.types.test(c)) out << r.protein_a << '\t' << r.protein_b << '\t' << kInteractionTypeNames[c] << '\n';
        }
    }
}

Matrix featurize(std::string_view sequence, const AminoAcidPropertyTable& table) {
    if (sequence.empty()) {
        throw ValidationError("featurize: empty sequence");
    }
    Matrix features(static_cast<Index>(sequence.size()), kFeatureCount);
    for (std::size_t i = 0; i < sequence.size(); ++i) {
        if (residue_index(sequence[i]) < 0) {
            throw ValidationError("featurize: non-canonical residue '" + std::string(1, sequence[i]) +
                                  "' at position " + std::to_string(i + 1));
        }
        const auto& row = table.row(sequence[i]);
        for (int c = 0; c < kFeatureCount; ++c) features(static_cast<Index>(i), c) = row[c];
    }
    return features;
}

Matrix featurize(std::string_view sequence, const AminoAcidPropertyTable& table,
                 const FeatureStandardizer& standardizer) {
    return standardizer.apply(featurize(sequence, table));
}

FeatureStandardizer FeatureStandardizer::fit(std::span<const Matrix> training_features) {
    FeatureStandardizer s;
    Index rows = 0;
    RowVector total = RowVector::Zero(kFeatureCount);
    for (const Matrix& m : training_features) {
        total += m.colwise().sum();
        rows += m.rows();
    }
    if (rows == 0) {
        throw ValidationError("FeatureStandardizer::fit: no training residues");
    }
    s.mean = total / static_cast<double>(rows);
    RowVector sq = RowVector::Zero(kFeatureCount);
    for (const Matrix& m : training_features) {
        sq += (m.rowwise() - s.mean).array().square().matrix().colwise().sum();
    }
    s.scale = (sq / static_cast<double>(rows)).cwiseSqrt();
    // Constant columns keep unit scale instead of dividing by zero.
    for (Index c = 0; c < kFeatureCount; ++c) {
        if (s.scale(c) < 1e-12) s.scale(c) = 1.0;
    }
    return s;
}

}  // namespace jmcppi
