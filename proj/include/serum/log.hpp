#pragma once

#include <string>

namespace serum {

/// Warning and info sinks; kept out of headers that torch translation units
/// include so the two bundled fmt copies never meet.
void log_warning(const std::string& message);
void log_info(const std::string& message);

}  // namespace serum
