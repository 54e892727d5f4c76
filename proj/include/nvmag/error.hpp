#ifndef NVMAG_ERROR_HPP
#define NVMAG_ERROR_HPP

#include <stdexcept>
#include <string>

namespace nvmag {

// Raised for invalid input data or arguments that violate an operation's
// preconditions. The CLI maps it to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace nvmag

#endif  // NVMAG_ERROR_HPP
