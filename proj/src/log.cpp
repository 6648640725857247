#include "softhand/log.hpp"

#include <spdlog/sinks/null_sink.h>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/sinks/stdout_sinks.h>

namespace softhand {

namespace {

Logger with_pattern(Logger logger) {
  logger->set_pattern("level=%l logger=%n %v");
  logger->set_level(spdlog::level::info);
  return logger;
}

}  // namespace

Logger null_logger() {
  static Logger shared = std::make_shared<spdlog::logger>("null", std::make_shared<spdlog::sinks::null_sink_mt>());
  return shared;
}

Logger stderr_logger(const std::string& name) {
  return with_pattern(std::make_shared<spdlog::logger>(name, std::make_shared<spdlog::sinks::stderr_sink_mt>()));
}

Logger stream_logger(const std::string& name, std::ostream& out) {
  return with_pattern(std::make_shared<spdlog::logger>(name, std::make_shared<spdlog::sinks::ostream_sink_mt>(out)));
}

}  // namespace softhand
