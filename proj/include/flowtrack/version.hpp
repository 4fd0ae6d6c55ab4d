#ifndef FLOWTRACK_VERSION_HPP
#define FLOWTRACK_VERSION_HPP

#define FLOWTRACK_VERSION_STRING "0.1.0"

namespace flowtrack {

inline const char* tool_version() { return FLOWTRACK_VERSION_STRING; }

}  // namespace flowtrack

#endif  // FLOWTRACK_VERSION_HPP
