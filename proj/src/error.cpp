#include "gh/error.hpp"

namespace gh {

int exit_code_for(Errc code) noexcept {
  switch (code) {
    case Errc::invalid_argument:
      return 2;
    case Errc::dimension:
    case Errc::degenerate_input:
    case Errc::unsupported:
      return 3;
    case Errc::io:
      return 4;
    case Errc::degenerate_embedding:
    case Errc::numerical_failure:
    case Errc::optimization_failure:
      return 5;
  }
  return 1;
}

}  // namespace gh
