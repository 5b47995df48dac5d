#include "serum/log.hpp"

#include <spdlog/spdlog.h>

namespace serum {

void log_warning(const std::string& message) { spdlog::warn("{}", message); }

void log_info(const std::string& message) { spdlog::info("{}", message); }

}  // namespace serum
