#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace cift {

using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;
using Labels = std::vector<int>;

enum class Modality { kVisible, kInfrared };

inline Modality opposite(Modality m) {
  return m == Modality::kVisible ? Modality::kInfrared : Modality::kVisible;
}

std::string to_string(Modality m);
Modality modality_from_string(const std::string& s);

enum class Distance { kEuclidean, kKL };

// Error hierarchy. Every failure the library reports derives from Error so
// the CLI can map it to an exit code in one place.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParameterError : public Error {
 public:
  using Error::Error;
};

class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

class CapacityError : public Error {
 public:
  using Error::Error;
};

class ConvergenceError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace cift
