#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

namespace bleg::cli {

/// Every setting a subcommand reads, with its default.
nlohmann::json default_config();

/// Deep merge of `overrides` into `base`. Keys missing from `base` raise
/// ConfigurationError so that typos do not pass silently.
nlohmann::json merge_config(nlohmann::json base, const nlohmann::json& overrides, const std::string& where = "");

/// One invocation; `args` excludes the program name. Returns 0 on success,
/// 2 on a usage error and 1 when a module raises. The resolved config and a
/// summary go to `out` as JSON lines, errors to `err` as one JSON object.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace bleg::cli
