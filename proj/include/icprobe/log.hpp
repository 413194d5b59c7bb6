// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

namespace icprobe::log {

enum class Level { Error = 0, Info = 1, Debug = 2 };

// Initial level comes from ICPROBE_LOG (error | info | debug); default error.
Level level() noexcept;
void set_level(Level level) noexcept;

void error(const std::string& message);
void info(const std::string& message);
void debug(const std::string& message);

inline bool enabled(Level at) noexcept { return static_cast<int>(at) <= static_cast<int>(level()); }

}  // namespace icprobe::log
