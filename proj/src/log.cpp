// SPDX-License-Identifier: Apache-2.0

#include "icprobe/log.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>
#include <iostream>
#include <mutex>

namespace icprobe::log {
namespace {

Level level_from_env() {
  const char* value = std::getenv("ICPROBE_LOG");
  if (value == nullptr) return Level::Error;
  if (std::strcmp(value, "debug") == 0) return Level::Debug;
  if (std::strcmp(value, "info") == 0) return Level::Info;
  return Level::Error;
}

std::atomic<int>& current() {
  static std::atomic<int> value{static_cast<int>(level_from_env())};
  return value;
}

std::mutex& sink_mutex() {
  static std::mutex m;
  return m;
}

void emit(Level at, const char* tag, const std::string& message) {
  if (!enabled(at)) return;
  std::lock_guard<std::mutex> lock(sink_mutex());
  std::cerr << "[icprobe " << tag << "] " << message << '\n';
}

}  // namespace

Level level() noexcept { return static_cast<Level>(current().load()); }
void set_level(Level at) noexcept { current().store(static_cast<int>(at)); }

void error(const std::string& message) { emit(Level::Error, "error", message); }
void info(const std::string& message) { emit(Level::Info, "info", message); }
void debug(const std::string& message) { emit(Level::Debug, "debug", message); }

}  // namespace icprobe::log
