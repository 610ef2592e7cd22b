#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace jmcppi {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using RowVectorX = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = MatrixX<double>;
using RowVector = RowVectorX<double>;
using Vector = VectorX<double>;
using Index = Eigen::Index;

inline constexpr int kFeatureCount = 7;
inline constexpr int kInteractionTypeCount = 7;

/// Directed edge list stored as parallel source/target arrays.
struct EdgeList {
    std::vector<Index> sources;
    std::vector<Index> targets;

    [[nodiscard]] std::size_t size() const { return sources.size(); }
    [[nodiscard]] bool empty() const { return sources.empty(); }

    void push_back(Index source, Index target) {
        sources.push_back(source);
        targets.push_back(target);
    }

    /// Throws if any index falls outside [0, node_count) or the arrays disagree in length.
    void validate(Index node_count) const;

    friend bool operator==(const EdgeList&, const EdgeList&) = default;
};

class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace jmcppi
