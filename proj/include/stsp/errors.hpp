#pragma once

#include <stdexcept>
#include <string>

namespace stsp {

// Base of every domain error. `kind()` is a stable machine-parsable tag;
// the CLI prints it as `error kind=<tag> msg=<what>` on stderr.
class Error : public std::runtime_error {
public:
  Error(std::string kind, const std::string& msg)
      : std::runtime_error(msg), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

private:
  std::string kind_;
};

#define STSP_DEFINE_ERROR(Name)                                   \
  class Name : public Error {                                     \
  public:                                                         \
    explicit Name(const std::string& msg) : Error(#Name, msg) {}  \
  }

STSP_DEFINE_ERROR(ShapeMismatch);
STSP_DEFINE_ERROR(OutOfBounds);
STSP_DEFINE_ERROR(NotRectified);
STSP_DEFINE_ERROR(ParallelRays);
STSP_DEFINE_ERROR(InvalidRange);
STSP_DEFINE_ERROR(DegenerateSchedule);
STSP_DEFINE_ERROR(BadTimestep);
STSP_DEFINE_ERROR(EmptyMask);
STSP_DEFINE_ERROR(ImageTooSmall);
STSP_DEFINE_ERROR(BadParams);
STSP_DEFINE_ERROR(NoJointValid);
STSP_DEFINE_ERROR(AllCandidatesInvalid);
STSP_DEFINE_ERROR(EmptySpec);
STSP_DEFINE_ERROR(TooFewViews);
STSP_DEFINE_ERROR(BadTarget);
STSP_DEFINE_ERROR(IoError);

#undef STSP_DEFINE_ERROR

}  // namespace stsp
