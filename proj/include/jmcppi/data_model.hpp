#pragma once

#include "jmcppi/types.hpp"

#include <bitset>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace jmcppi {

/// Interaction categories in their fixed label-column order.
enum class InteractionType { reaction = 0, binding, ptmod, activation, inhibition, catalysis, expression };

inline constexpr std::array<std::string_view, kInteractionTypeCount> kInteractionTypeNames = {
    "reaction", "binding", "ptmod", "activation", "inhibition", "catalysis", "expression"};

std::optional<InteractionType> parse_interaction_type(std::string_view name);

/// The 20 canonical amino-acid one-letter codes in alphabetical order.
inline constexpr std::string_view kCanonicalResidues = "ACDEFGHIKLMNPQRSTVWY";

/// Position of `code` within kCanonicalResidues, or -1 when non-canonical.
int residue_index(char code);

struct ProteinRecord {
    std::string id;
    std::string sequence;
    std::vector<Eigen::Vector3d> coords;

    [[nodiscard]] Index length() const { return static_cast<Index>(sequence.size()); }
    /// Throws ValidationError naming the protein when an invariant fails.
    void validate() const;
};

using TypeSet = std::bitset<kInteractionTypeCount>;

struct InteractionRecord {
    std::string protein_a;
    std::string protein_b;
    TypeSet types;
};

/// Seven physicochemical properties per amino acid. Column order:
/// topological polar surface area, polarity, isoelectric point, acidity/alkalinity,
/// octanol-water partition coefficient, H-bond donor count, H-bond acceptor count.
class AminoAcidPropertyTable {
public:
    using Row = std::array<double, kFeatureCount>;

    /// The fixture shipped with the library (identical to data/aa_properties.tsv).
    static const AminoAcidPropertyTable& standard();
    static AminoAcidPropertyTable load(const std::filesystem::path& path);
    static AminoAcidPropertyTable parse(std::istream& in);

    [[nodiscard]] const Row& row(char code) const;
    [[nodiscard]] int version() const { return version_; }
    /// FNV-1a 64-bit digest of the canonical serialization (version + all values).
    [[nodiscard]] std::uint64_t hash() const;
    [[nodiscard]] std::string serialize() const;

    friend bool operator==(const AminoAcidPropertyTable&, const AminoAcidPropertyTable&) = default;

private:
    int version_ = 0;
    std::array<Row, 20> rows_{};
};

inline constexpr std::array<std::string_view, kFeatureCount> kFeatureNames = {
    "tpsa", "polarity", "isoelectric_point", "acid_base", "log_p", "hbond_donors", "hbond_acceptors"};

std::vector<ProteinRecord> parse_proteins(std::istream& in);
std::vector<ProteinRecord> load_proteins(const std::filesystem::path& path);
void write_proteins(std::ostream& out, std::span<const ProteinRecord> proteins);

std::vector<InteractionRecord> parse_ppi(std::istream& in);
std::vector<InteractionRecord> load_ppi(const std::filesystem::path& path);
void write_ppi(std::ostream& out, std::span<const InteractionRecord> records);

/// Raw per-residue property rows (M x 7). Throws ValidationError at the first
/// non-canonical letter (1-based position).
Matrix featurize(std::string_view sequence, const AminoAcidPropertyTable& table);

/// Per-column z-score fitted on training residues and reused for every split.
struct FeatureStandardizer {
    RowVector mean = RowVector::Zero(kFeatureCount);
    RowVector scale = RowVector::Ones(kFeatureCount);

    static FeatureStandardizer fit(std::span<const Matrix> training_features);

    template <typename Derived>
    [[nodiscard]] Matrix apply(const Eigen::MatrixBase<Derived>& features) const {
        return (features.rowwise() - mean).array().rowwise() / scale.array();
    }
};

Matrix featurize(std::string_view sequence, const AminoAcidPropertyTable& table,
                 const FeatureStandardizer& standardizer);

}  // namespace jmcppi
