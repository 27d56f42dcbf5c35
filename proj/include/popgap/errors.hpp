#ifndef POPGAP_ERRORS_HPP
#define POPGAP_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace popgap {

// Base class for all toolkit errors. CLI maps these to exit code 2.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

#define POPGAP_DEFINE_ERROR(Name)                          \
  class Name : public Error {                              \
  public:                                                  \
    explicit Name(const std::string& msg) : Error(msg) {}  \
  }

// volume-io
POPGAP_DEFINE_ERROR(FileNotFoundError);
POPGAP_DEFINE_ERROR(MalformedHeaderError);
POPGAP_DEFINE_ERROR(NonIntegerDataError);
POPGAP_DEFINE_ERROR(UnknownLabelError);
POPGAP_DEFINE_ERROR(GridMismatchError);
POPGAP_DEFINE_ERROR(SpacingMismatchError);
POPGAP_DEFINE_ERROR(IoError);

// metrics
POPGAP_DEFINE_ERROR(EmptyMaskError);

// cohort
POPGAP_DEFINE_ERROR(MissingColumnError);
POPGAP_DEFINE_ERROR(DuplicateSubjectIdError);
POPGAP_DEFINE_ERROR(UnparseableAgeError);
POPGAP_DEFINE_ERROR(InsufficientSubjectsError);
POPGAP_DEFINE_ERROR(InfeasibleMatchError);
POPGAP_DEFINE_ERROR(KTooLargeError);

// gap
POPGAP_DEFINE_ERROR(DegenerateDenominatorError);
POPGAP_DEFINE_ERROR(MismatchedSamplesError);
POPGAP_DEFINE_ERROR(ZeroVarianceError);
POPGAP_DEFINE_ERROR(TooFewSamplesError);
POPGAP_DEFINE_ERROR(IncompleteGridError);

// phantom
POPGAP_DEFINE_ERROR(OutOfBoundsError);

// cli
POPGAP_DEFINE_ERROR(ConfigError);

#undef POPGAP_DEFINE_ERROR

}  // namespace popgap

#endif
