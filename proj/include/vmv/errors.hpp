#pragma once

#include <stdexcept>
#include <string>

namespace vmv {

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class DomainError : public Error { using Error::Error; };
class SingularityError : public Error { using Error::Error; };
class NonIntegrableError : public Error { using Error::Error; };
class GridMismatchError : public Error { using Error::Error; };
class DivergenceError : public Error { using Error::Error; };
class ConvergenceError : public Error { using Error::Error; };
class BlowUpError : public Error { using Error::Error; };
class RankDeficiencyError : public Error { using Error::Error; };
class DimensionError : public Error { using Error::Error; };
class CouplingError : public Error { using Error::Error; };
class InternalError : public Error { using Error::Error; };

/// Refusal of a run whose memory estimate exceeds the configured budget.
class BudgetError : public Error { using Error::Error; };

}  // namespace vmv
