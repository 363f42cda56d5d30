#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace anc {

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using VectorXd = Eigen::VectorXd;
using MatrixXd = Eigen::MatrixXd;

enum class ErrorKind {
  InvalidDimension,
  InvalidParameter,
  UnsupportedFamily,
  ConvergenceFailure,
  SingularInformation,
  ReferenceSolveFailure,
  DegenerateTangent,
  DegenerateModel,
  NumericalFailure,
  EmptyStudy,
  PartialResults,
  Config,
};

const char* to_string(ErrorKind kind) noexcept;

/// Every failure raised by the library carries one of the kinds above so
/// callers (the CLI in particular) can map it to an exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::InvalidDimension: return "invalid-dimension";
    case ErrorKind::InvalidParameter: return "invalid-parameter";
    case ErrorKind::UnsupportedFamily: return "unsupported-family";
    case ErrorKind::ConvergenceFailure: return "convergence-failure";
    case ErrorKind::SingularInformation: return "singular-information";
    case ErrorKind::ReferenceSolveFailure: return "reference-solve-failure";
    case ErrorKind::DegenerateTangent: return "degenerate-tangent";
    case ErrorKind::DegenerateModel: return "degenerate-model";
    case ErrorKind::NumericalFailure: return "numerical-failure";
    case ErrorKind::EmptyStudy: return "empty-study";
    case ErrorKind::PartialResults: return "partial-results";
    case ErrorKind::Config: return "config";
  }
  return "unknown";
}

/// SplitMix64 finalizer; used to derive independent per-replicate seeds.
constexpr std::uint64_t mix_seed(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream,
                                    std::uint64_t counter) noexcept {
  return mix_seed(mix_seed(seed ^ mix_seed(stream)) + counter);
}

}  // namespace anc
