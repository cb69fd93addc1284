#ifndef INTERTWINE_ERRORS_HPP
#define INTERTWINE_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace itw {

// Base for everything thrown by the library.  `witness_x` carries the grid
// location at which a numeric condition failed, when one exists.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
    Error(const std::string& msg, double witness)
        : std::runtime_error(msg), witness_x(witness), has_witness(true) {}
    double witness_x = 0.0;
    bool has_witness = false;
};

struct ParseError : Error { using Error::Error; };
struct EvaluationError : Error { using Error::Error; };
struct BranchError : Error { using Error::Error; };
struct IntegrationError : Error { using Error::Error; };
struct ClassificationError : Error { using Error::Error; };
struct SingularFactorError : Error { using Error::Error; };
struct SpectrumError : Error { using Error::Error; };
struct OrderingError : Error { using Error::Error; };
struct BasisOrderError : Error { using Error::Error; };
struct DomainError : Error { using Error::Error; };
struct AuditError : Error { using Error::Error; };
struct InfeasibleOrderingError : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };

} // namespace itw

#endif
