// Copyright 2026 The vsmwsd Authors.
// SPDX-License-Identifier: Apache-2.0

#include "vsm/log.hpp"

#include <iostream>
#include <mutex>

namespace vsm {
namespace {

std::mutex g_mutex;

void default_sink(LogLevel level, const std::string& message) {
  if (level < LogLevel::warning) return;
  std::cerr << (level == LogLevel::warning ? "warning: " : "error: ") << message << '\n';
}

LogSink& sink() {
  static LogSink s = default_sink;
  return s;
}

}  // namespace

LogSink set_log_sink(LogSink s) {
  std::lock_guard<std::mutex> lock(g_mutex);
  LogSink previous = sink();
  sink() = s ? std::move(s) : LogSink(default_sink);
  return previous;
}

void log(LogLevel level, const std::string& message) {
  std::lock_guard<std::mutex> lock(g_mutex);
  sink()(level, message);
}

}  // namespace vsm
