#include "mct/image.hpp"

namespace mct {

bool ComplexImage::is_physical() const {
  for (std::size_t i = 0; i < re.size(); ++i) {
    if (!(re[i] >= 0.0) || !(im[i] >= 0.0)) return false;
  }
  return true;
}

}  // namespace mct
