#include "strokescope/errors.hpp"

namespace strokescope {

ParseError::ParseError(const std::string& message, std::size_t byte_offset)
    : Error("parse_error",
            message + " (at byte " + std::to_string(byte_offset) + ")"),
      byte_offset_(byte_offset) {}

} // namespace strokescope
