#ifndef SPCR_VERSION_HPP
#define SPCR_VERSION_HPP

namespace spcr {
inline constexpr const char* kVersion = "0.1.0";
}

#endif
