#pragma once

#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace bayesflux {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input (files, configuration, arguments).
class InputError : public Error {
public:
    using Error::Error;
};

/// Linear algebra or iterative solver breakdown.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// The constraint set admits no solution.
class InfeasibleError : public Error {
public:
    using Error::Error;
};

inline bool is_finite_bound(double x) { return x > -kInf && x < kInf; }

/// Gathers the entries of `v` at `idx`.
inline Vector gather(const Vector& v, const std::vector<Index>& idx) {
    Vector out(static_cast<Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) out[static_cast<Index>(k)] = v[idx[k]];
    return out;
}

inline Matrix gather(const Matrix& m, const std::vector<Index>& rows, const std::vector<Index>& cols) {
    Matrix out(static_cast<Index>(rows.size()), static_cast<Index>(cols.size()));
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < cols.size(); ++c)
            out(static_cast<Index>(r), static_cast<Index>(c)) = m(rows[r], cols[c]);
    return out;
}

inline void symmetrize(Matrix& m) { m = 0.5 * (m + m.transpose()).eval(); }

}  // namespace bayesflux
