#pragma once

#include <functional>
#include <string>
#include <string_view>

namespace aal::log {

using Sink = std::function<void(std::string_view level, std::string_view message)>;

// Replaces the sink (default: stderr). Returns the previous one.
Sink set_sink(Sink sink);

void warn(std::string_view message);
void info(std::string_view message);

}  // namespace aal::log
