#pragma once

#include <map>
#include <string>
#include <string_view>

namespace ipi::prompts {

/// Prompt body of prompts/<name>.txt with its "#version" header removed.
const std::string& get(std::string_view name);

/// The integer after "#version" on the asset's first line.
int version(std::string_view name);

/// Replaces every {{key}} in the named prompt.
std::string render(std::string_view name, const std::map<std::string, std::string>& vars);

}  // namespace ipi::prompts
