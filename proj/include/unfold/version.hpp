#ifndef UNFOLD_VERSION_HPP_
#define UNFOLD_VERSION_HPP_

namespace unfold {
inline constexpr const char* kVersion = "1.0.0";
}

#endif  // UNFOLD_VERSION_HPP_
