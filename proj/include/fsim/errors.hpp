#ifndef FSIM_ERRORS_HPP
#define FSIM_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace fsim {

struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

#define FSIM_DEFINE_ERROR(name)                                        \
  struct name : Error {                                                \
    explicit name(const std::string& what) : Error(#name ": " + what) {} \
  }

FSIM_DEFINE_ERROR(ResolutionTooCoarse);
FSIM_DEFINE_ERROR(DegenerateElement);
FSIM_DEFINE_ERROR(H1Violation);
FSIM_DEFINE_ERROR(SingularInertia);
FSIM_DEFINE_ERROR(ExtensionDiverged);
FSIM_DEFINE_ERROR(CompatibilityViolation);
FSIM_DEFINE_ERROR(SingularSystem);
FSIM_DEFINE_ERROR(LinearSolveFailed);
FSIM_DEFINE_ERROR(PicardDiverged);
FSIM_DEFINE_ERROR(ConfigInvalid);
FSIM_DEFINE_ERROR(IncompatibleInitialData);
FSIM_DEFINE_ERROR(IoError);

#undef FSIM_DEFINE_ERROR

}  // namespace fsim

#endif
