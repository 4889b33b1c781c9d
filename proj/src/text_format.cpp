#include "gh/text_format.hpp"

#include <charconv>
#include <cmath>

#include "gh/error.hpp"

namespace gh {

std::string format_real(Real value) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

Real parse_real(const std::string& text) {
  Real value = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  while (first < last && (*first == ' ' || *first == '\t')) ++first;
  while (last > first && (last[-1] == ' ' || last[-1] == '\t' || last[-1] == '\r')) --last;
  auto res = std::from_chars(first, last, value);
  if (res.ec != std::errc() || res.ptr != last) {
    throw Error(Errc::io, "cannot parse number '" + text + "'");
  }
  return value;
}

}  // namespace gh
