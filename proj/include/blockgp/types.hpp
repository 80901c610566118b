#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>

namespace blockgp {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

// Error taxonomy. The CLI maps each category to a distinct exit code.
enum class ErrorKind {
  kUsage,
  kShape,
  kFormat,
  kFactorization,
  kConvergence,
  kDegenerate,
  kOverlap,
  kInfeasible,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct UsageError : Error {
  explicit UsageError(const std::string& w) : Error(ErrorKind::kUsage, w) {}
};
struct ShapeError : Error {
  explicit ShapeError(const std::string& w) : Error(ErrorKind::kShape, w) {}
};
struct FormatError : Error {
  explicit FormatError(const std::string& w) : Error(ErrorKind::kFormat, w) {}
};
struct FactorizationError : Error {
  FactorizationError(const std::string& w, long block)
      : Error(ErrorKind::kFactorization, w), block_index(block) {}
  long block_index;
};
struct ConvergenceError : Error {
  explicit ConvergenceError(const std::string& w) : Error(ErrorKind::kConvergence, w) {}
};
struct DegenerateRepresentativesError : Error {
  explicit DegenerateRepresentativesError(const std::string& w) : Error(ErrorKind::kDegenerate, w) {}
};
struct OverlapError : Error {
  explicit OverlapError(const std::string& w) : Error(ErrorKind::kOverlap, w) {}
};
struct InfeasibleClusterError : Error {
  explicit InfeasibleClusterError(const std::string& w) : Error(ErrorKind::kInfeasible, w) {}
};

/// Kernel hyperparameters (lengthscale, noise variance, output scale).
/// All three are strictly positive; the constructor enforces it.
template <typename Scalar>
struct Hyperparameters {
  Scalar lengthscale{1};
  Scalar noise{1};
  Scalar output_scale{1};

  Hyperparameters() = default;
  Hyperparameters(Scalar l, Scalar s2, Scalar a) : lengthscale(l), noise(s2), output_scale(a) { validate(); }

  void validate() const {
    if (!(lengthscale > 0) || !(noise > 0) || !(output_scale > 0) || !std::isfinite(lengthscale) ||
        !std::isfinite(noise) || !std::isfinite(output_scale)) {
      throw UsageError("hyperparameters must be finite and strictly positive");
    }
  }

  // Index order: 0 = lengthscale, 1 = noise, 2 = output scale.
  [[nodiscard]] Scalar get(int i) const {
    switch (i) {
      case 0: return lengthscale;
      case 1: return noise;
      case 2: return output_scale;
      default: throw UsageError("hyperparameter index out of range");
    }
  }
  [[nodiscard]] Hyperparameters with(int i, Scalar value) const {
    Hyperparameters out = *this;
    switch (i) {
      case 0: out.lengthscale = value; break;
      case 1: out.noise = value; break;
      case 2: out.output_scale = value; break;
      default: throw UsageError("hyperparameter index out of range");
    }
    out.validate();
    return out;
  }

  template <typename Other>
  [[nodiscard]] Hyperparameters<Other> cast() const {
    return Hyperparameters<Other>(static_cast<Other>(lengthscale), static_cast<Other>(noise),
                                  static_cast<Other>(output_scale));
  }

  friend bool operator==(const Hyperparameters&, const Hyperparameters&) = default;
};

inline constexpr const char* kHyperparameterNames[3] = {"lengthscale", "noise", "output_scale"};

}  // namespace blockgp
