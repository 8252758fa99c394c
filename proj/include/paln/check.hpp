#ifndef PALN_CHECK_HPP_
#define PALN_CHECK_HPP_

#include <sstream>
#include <stdexcept>
#include <string>

namespace paln {
namespace detail {

template <class... Ts>
std::string cat(Ts&&... parts) {
  std::ostringstream os;
  (os << ... << parts);
  return os.str();
}

[[noreturn]] inline void fail_check(const char* expr, const std::string& msg) {
  throw std::invalid_argument("check failed (" + std::string(expr) + "): " + msg);
}

}  // namespace detail
}  // namespace paln

// Argument/shape validation. Throws std::invalid_argument.
#define PALN_CHECK(cond, ...)                                        \
  do {                                                               \
    if (!(cond)) ::paln::detail::fail_check(#cond, ::paln::detail::cat(__VA_ARGS__)); \
  } while (0)

#endif  // PALN_CHECK_HPP_
