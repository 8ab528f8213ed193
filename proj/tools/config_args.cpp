// SPDX-License-Identifier: Apache-2.0
#include "config_args.hpp"

#include <fstream>
#include <sstream>

#include "pgn/error.hpp"

namespace pgn::cli {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

bool valid_key(const std::string& k) {
  if (k.empty() || !(k[0] >= 'a' && k[0] <= 'z')) return false;
  for (char c : k)
    if (!((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '-' || c == '_')) return false;
  return true;
}

}  // namespace

std::vector<ConfigEntry> parse_config(std::string_view text) {
  std::vector<ConfigEntry> out;
  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw InvalidInput("config line " + std::to_string(lineno) + ": expected key = value");
    ConfigEntry e;
    e.key = trim(std::string_view(line).substr(0, eq));
    e.value = trim(std::string_view(line).substr(eq + 1));
    e.line = lineno;
    for (auto& c : e.key)
      if (c == '_') c = '-';
    if (!valid_key(e.key)) throw InvalidInput("config line " + std::to_string(lineno) + ": bad key '" + e.key + "'");
    if (e.value.size() >= 2 && (e.value.front() == '"' || e.value.front() == '\'') && e.value.back() == e.value.front())
      e.value = e.value.substr(1, e.value.size() - 2);
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<std::string> expand_config(const std::vector<std::string>& args,
                                       const std::function<bool(const std::string&)>& known) {
  std::string path;
  bool found = false;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw InvalidInput("--config needs a path");
      path = args[i + 1];
      found = true;
    } else if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
      found = true;
    }
  }
  if (!found) return args;

  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot read config file " + path);
  std::ostringstream text;
  text << in.rdbuf();

  std::vector<std::string> out;
  for (const auto& e : parse_config(text.str())) {
    if (e.key == "config") throw InvalidInput("config line " + std::to_string(e.line) + ": nested config files are not supported");
    if (!known(e.key))
      throw InvalidInput("config line " + std::to_string(e.line) + ": unknown key '" + e.key + "'");
    out.push_back("--" + e.key + "=" + e.value);
  }
  out.insert(out.end(), args.begin(), args.end());
  return out;
}

}  // namespace pgn::cli
