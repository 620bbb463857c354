#ifndef LEVYBRIDGE_ERRORS_HPP
#define LEVYBRIDGE_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace levybridge {

class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Quadrature or sampler could not reach its tolerance. Never carries a guess.
class NumericalFailure : public Error {
  public:
    using Error::Error;
};

/// f_r(z) is zero or non-finite, so the bridge X^{r,z} is undefined.
class DegeneratePin : public Error {
  public:
    using Error::Error;
};

/// The bridge kernel is asked to leave a state it cannot be in.
class UnreachableState : public Error {
  public:
    using Error::Error;
};

/// A Bayes denominator vanished (below 1e-300).
class ZeroEvidence : public Error {
  public:
    using Error::Error;
};

class PreconditionViolation : public Error {
  public:
    using Error::Error;
};

/// Malformed model, measure or config.
class ValidationError : public Error {
  public:
    using Error::Error;
};

}  // namespace levybridge

#endif
