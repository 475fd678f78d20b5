#include "fspc/core.hpp"

namespace fspc {

void throw_usage(const std::string& what) { throw Error(ErrorKind::Usage, what); }
void throw_data(const std::string& what) { throw Error(ErrorKind::Data, what); }
void throw_numeric(const std::string& what) { throw Error(ErrorKind::Numeric, what); }

int exit_code(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Usage:
      return 2;
    case ErrorKind::Data:
      return 3;
    case ErrorKind::Numeric:
      return 4;
  }
  return 1;
}

}  // namespace fspc
