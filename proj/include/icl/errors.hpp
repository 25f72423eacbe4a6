#pragma once

#include <stdexcept>
#include <string>

namespace icl {

// Base class for every error raised by the library. Each subclass names one
// failure mode so callers (and tests) can catch precisely what they expect.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define ICL_DEFINE_ERROR(Name)                                                 \
    class Name : public Error {                                                \
    public:                                                                    \
        explicit Name(const std::string& what) : Error(#Name ": " + what) {}   \
    }

ICL_DEFINE_ERROR(DimensionMismatch);
ICL_DEFINE_ERROR(NotSymmetric);
ICL_DEFINE_ERROR(NotConverged);
ICL_DEFINE_ERROR(NotPositiveDefinite);
ICL_DEFINE_ERROR(EmptyContext);
ICL_DEFINE_ERROR(NonPositiveW);
ICL_DEFINE_ERROR(ZeroW);
ICL_DEFINE_ERROR(ZeroTheta);
ICL_DEFINE_ERROR(ZeroSignal);
ICL_DEFINE_ERROR(HypothesisViolated);
ICL_DEFINE_ERROR(UnknownKind);
ICL_DEFINE_ERROR(EmptyBatch);
ICL_DEFINE_ERROR(Diverged);
ICL_DEFINE_ERROR(InvalidConfig);

#undef ICL_DEFINE_ERROR

}  // namespace icl
