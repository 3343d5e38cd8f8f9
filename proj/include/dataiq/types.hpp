#pragma once
#include <Eigen/Core>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace dataiq {

template <class Scalar_, int Rows_ = Eigen::Dynamic, int Cols_ = Eigen::Dynamic>
using rowmat_type = Eigen::Matrix<Scalar_, Rows_, Cols_, Eigen::RowMajor>;

template <class Scalar_, int Rows_ = Eigen::Dynamic, int Cols_ = Eigen::Dynamic>
using colmat_type = Eigen::Matrix<Scalar_, Rows_, Cols_, Eigen::ColMajor>;

template <class Scalar_, int Rows_ = Eigen::Dynamic>
using vec_type = Eigen::Matrix<Scalar_, Rows_, 1>;

// Feature matrices are stored one example per row.
using Matrix = rowmat_type<double>;
using Vector = vec_type<double>;
using IndexVector = vec_type<Eigen::Index>;
using IntVector = vec_type<int>;

using Index = Eigen::Index;

enum class Group : std::uint8_t { Easy = 0, Ambiguous = 1, Hard = 2 };

inline constexpr std::string_view to_string(Group g)
{
    switch (g) {
        case Group::Easy: return "Easy";
        case Group::Ambiguous: return "Ambiguous";
        case Group::Hard: return "Hard";
    }
    return "?";
}

Group group_from_string(std::string_view s);

// Bad input: malformed files, out-of-range arguments, violated preconditions.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Non-finite arithmetic during training or estimation.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DivergenceError : public NumericError {
public:
    DivergenceError(const std::string& what, Index checkpoint)
        : NumericError(what), checkpoint_(checkpoint) {}
    Index checkpoint() const noexcept { return checkpoint_; }

private:
    Index checkpoint_;
};

// A result violated one of the library's own guarantees.
class InvariantError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

} // namespace dataiq
