#pragma once

#include <functional>
#include <string>

namespace graphdkl {

using WarningSink = std::function<void(const std::string&)>;

/// Routes library warnings; the default sink writes to stderr. Returns the
/// previous sink.
WarningSink set_warning_sink(WarningSink sink);
void warn(const std::string& message);

}  // namespace graphdkl
