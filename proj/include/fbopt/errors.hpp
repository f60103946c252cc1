#pragma once

#include <stdexcept>
#include <string>

namespace fbopt {

// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define FBOPT_DEFINE_ERROR(Name)         \
  class Name : public Error {            \
   public:                               \
    using Error::Error;                  \
  }

FBOPT_DEFINE_ERROR(GimbalLock);
FBOPT_DEFINE_ERROR(DegenerateQuaternion);
FBOPT_DEFINE_ERROR(AngleNearPi);
FBOPT_DEFINE_ERROR(ChartMismatch);
FBOPT_DEFINE_ERROR(ParseError);
FBOPT_DEFINE_ERROR(ValidationError);
FBOPT_DEFINE_ERROR(UnknownFrame);
FBOPT_DEFINE_ERROR(ScheduleError);
FBOPT_DEFINE_ERROR(DimensionError);
FBOPT_DEFINE_ERROR(NonDifferentiablePoint);
FBOPT_DEFINE_ERROR(UnregisteredPrimitive);
FBOPT_DEFINE_ERROR(IoError);

#undef FBOPT_DEFINE_ERROR

}  // namespace fbopt
