#ifndef SOUSIM_VERSION_HPP
#define SOUSIM_VERSION_HPP

namespace sousim {
inline constexpr const char* kVersion = "0.1.0";
}

#endif  // SOUSIM_VERSION_HPP
