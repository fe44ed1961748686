#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace bleg {

/// Every failure raised by the library derives from Error and carries a
/// machine-readable kind, which the CLI echoes as structured output.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}

  [[nodiscard]] const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define BLEG_DEFINE_ERROR(Name, Kind)                                   \
  class Name : public Error {                                           \
   public:                                                              \
    explicit Name(const std::string& message) : Error(Kind, message) {} \
  };

BLEG_DEFINE_ERROR(DimensionError, "dimension")
BLEG_DEFINE_ERROR(DegenerateInputError, "degenerate-input")
BLEG_DEFINE_ERROR(ContractError, "contract")
BLEG_DEFINE_ERROR(NumericalError, "numerical")
BLEG_DEFINE_ERROR(ParameterError, "parameter")
BLEG_DEFINE_ERROR(InsufficientDataError, "insufficient-data")
BLEG_DEFINE_ERROR(ConsistencyError, "consistency")
BLEG_DEFINE_ERROR(ConfigurationError, "configuration")
BLEG_DEFINE_ERROR(TransportError, "transport")
BLEG_DEFINE_ERROR(MalformedResponseError, "malformed-response")
BLEG_DEFINE_ERROR(StateError, "state")
BLEG_DEFINE_ERROR(InvariantViolation, "invariant-violation")
BLEG_DEFINE_ERROR(TruncationError, "truncation")
BLEG_DEFINE_ERROR(DegenerateSeriesError, "degenerate-series")
BLEG_DEFINE_ERROR(FormatError, "format")
BLEG_DEFINE_ERROR(IoError, "io")

#undef BLEG_DEFINE_ERROR

}  // namespace bleg
