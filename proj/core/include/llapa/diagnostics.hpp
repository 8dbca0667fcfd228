#pragma once

#include <functional>
#include <string>

namespace llapa {

/// Non-fatal warnings (mask fallbacks, dropped decode fragments). The default
/// sink prints to stderr; pass an empty function to silence.
using DiagnosticSink = std::function<void(const std::string&)>;

void set_diagnostic_sink(DiagnosticSink sink);
void diagnostic(const std::string& message);

}  // namespace llapa
