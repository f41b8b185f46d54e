#pragma once

#include <stdexcept>
#include <string>

namespace stepbcd {

/// Operand shapes do not agree.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed input files, labels, checkpoints or configuration.
class DataError : public std::runtime_error {
 public:
  enum class Kind {
    Io,
    BadMagic,
    Truncated,
    DimensionOverflow,
    CountMismatch,
    LabelOutOfRange,
    NotOneHot,
    VersionMismatch,
    Checksum,
    ShapeMismatch,
    Parse,
    EmptySplit,
  };

  DataError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// An iterative solver missed its tolerance, or the iterates stopped being finite.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, double achieved = 0.0)
      : std::runtime_error(what), achieved_(achieved) {}

  double achieved() const noexcept { return achieved_; }

 private:
  double achieved_;
};

}  // namespace stepbcd
