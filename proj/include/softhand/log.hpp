// Loggers emit one event per line as key=value pairs, e.g.
//
//   event=registered finger=1 t_us=0 kind=2
#pragma once

#include <spdlog/logger.h>

#include <memory>
#include <ostream>
#include <string>

namespace softhand {

using Logger = std::shared_ptr<spdlog::logger>;

/// Discards everything.
Logger null_logger();
/// Writes "level=<level> <message>" lines to stderr.
Logger stderr_logger(const std::string& name);
/// Writes to an existing stream; handy for capturing lines in tests.
Logger stream_logger(const std::string& name, std::ostream& out);

}  // namespace softhand
