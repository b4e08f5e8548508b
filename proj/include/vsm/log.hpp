// Copyright 2026 The vsmwsd Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <string>

namespace vsm {

enum class LogLevel { debug, info, warning, error };

using LogSink = std::function<void(LogLevel, const std::string&)>;

// Replaces the process-wide sink and returns the previous one. The default
// sink writes warnings and errors to stderr.
LogSink set_log_sink(LogSink sink);
void log(LogLevel level, const std::string& message);

inline void log_warning(const std::string& m) { log(LogLevel::warning, m); }
inline void log_info(const std::string& m) { log(LogLevel::info, m); }

}  // namespace vsm
