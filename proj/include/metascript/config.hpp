#pragma once

#include <map>
#include <string>

namespace metascript {

// flat `key = value` file, '#' starts a comment
using KeyValues = std::map<std::string, std::string>;

KeyValues parse_config_file(const std::string& path);
KeyValues parse_config_text(const std::string& text);

}  // namespace metascript
