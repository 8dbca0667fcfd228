#include "llapa/diagnostics.hpp"

#include <iostream>
#include <mutex>

namespace llapa {

namespace {

std::mutex& sink_mutex() {
  static std::mutex m;
  return m;
}

DiagnosticSink& sink() {
  static DiagnosticSink s = [](const std::string& msg) { std::cerr << "llapa: warning: " << msg << '\n'; };
  return s;
}

}  // namespace

void set_diagnostic_sink(DiagnosticSink s) {
  std::lock_guard lock(sink_mutex());
  sink() = std::move(s);
}

void diagnostic(const std::string& message) {
  std::lock_guard lock(sink_mutex());
  if (sink()) sink()(message);
}

}  // namespace llapa
