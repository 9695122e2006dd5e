#include "sentmask/random.hpp"

#include <sstream>

#include "sentmask/error.hpp"

namespace sentmask {

std::string Rng::state() const {
  std::ostringstream out;
  out << engine_;
  return out.str();
}

void Rng::set_state(const std::string& state) {
  std::istringstream in(state);
  in >> engine_;
  if (!in) throw Error(ErrorCode::kCheckpoint, "corrupt generator state");
}

}  // namespace sentmask
