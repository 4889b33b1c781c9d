#pragma once

#include <stdexcept>
#include <string>

namespace gh {

enum class Errc {
  invalid_argument,
  dimension,
  degenerate_input,
  degenerate_embedding,
  numerical_failure,
  optimization_failure,
  unsupported,
  io,
};

// Single exception type for the library; the code drives CLI exit status.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

// 0 success, 2 usage, 3 domain/infeasibility, 4 IO, 5 numerical failure.
int exit_code_for(Errc code) noexcept;

}  // namespace gh
