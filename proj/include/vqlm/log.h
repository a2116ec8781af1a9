// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The vqlm Authors

#pragma once

#include <cstdarg>
#include <cstdio>

namespace vqlm {

enum class LogLevel { kDebug = 0, kInfo = 1, kWarn = 2, kError = 3 };

void set_log_level(LogLevel level);
LogLevel log_level();

void log_msg(LogLevel level, const char* fmt, ...) __attribute__((format(printf, 2, 3)));

#define VQLM_DEBUG(...) ::vqlm::log_msg(::vqlm::LogLevel::kDebug, __VA_ARGS__)
#define VQLM_INFO(...) ::vqlm::log_msg(::vqlm::LogLevel::kInfo, __VA_ARGS__)
#define VQLM_WARN(...) ::vqlm::log_msg(::vqlm::LogLevel::kWarn, __VA_ARGS__)
#define VQLM_ERROR(...) ::vqlm::log_msg(::vqlm::LogLevel::kError, __VA_ARGS__)

}  // namespace vqlm
