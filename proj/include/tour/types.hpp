#ifndef TOUR_TYPES_HPP
#define TOUR_TYPES_HPP

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace tour {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using VectorXd = Vector<double>;
using RowMatrixXd = RowMatrix<double>;
using RowMatrixXf = RowMatrix<float>;

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Embedding file problems.
class FormatError : public Error { using Error::Error; };
class TruncationError : public Error { using Error::Error; };
class ValidationError : public Error { using Error::Error; };

class DimensionError : public Error { using Error::Error; };
class ConfigError : public Error { using Error::Error; };
/// A caller broke a function precondition (empty hard set, bad target...).
class ContractError : public Error { using Error::Error; };
class DataError : public Error { using Error::Error; };
class NumericError : public Error { using Error::Error; };

// Remote labeler.
class TransportError : public Error { using Error::Error; };
class ProtocolError : public Error { using Error::Error; };

}  // namespace tour

#endif  // TOUR_TYPES_HPP
