#include "aurum/error.hpp"

#include <utility>

namespace aurum {

Error::Error(std::string kind, const std::string& message)
    : std::runtime_error(kind + " error: " + message), kind_(std::move(kind)) {}

}  // namespace aurum
