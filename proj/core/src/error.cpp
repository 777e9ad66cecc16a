#include "morphgan/error.hpp"

namespace morphgan {

void require(bool condition, const std::string& message) {
  if (!condition) throw ArgumentError(message);
}

}  // namespace morphgan
