#include "ucf/config.hpp"

#include <fstream>
#include <sstream>

#include "ucf/errors.hpp"

namespace ucf {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      if (!trim(cur).empty()) out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!trim(cur).empty()) out.push_back(trim(cur));
  return out;
}

KvConfig KvConfig::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("config file not found: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_string(ss.str());
}

KvConfig KvConfig::parse_string(const std::string& text) {
  KvConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ValidationError("config line " + std::to_string(lineno) +
                            ": expected key = value, got '" + line + "'");
    cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

bool KvConfig::has(const std::string& key) const { return index_.count(key); }

void KvConfig::set(const std::string& key, const std::string& value) {
  auto it = index_.find(key);
  if (it != index_.end()) {
    entries_[it->second].second = value;
  } else {
    index_[key] = entries_.size();
    entries_.emplace_back(key, value);
  }
}

std::string KvConfig::get_str(const std::string& key) const {
  auto it = index_.find(key);
  if (it == index_.end())
    throw ValidationError("config: missing required key '" + key + "'");
  return entries_[it->second].second;
}

std::string KvConfig::get_str(const std::string& key,
                              const std::string& dflt) const {
  return has(key) ? get_str(key) : dflt;
}

std::int64_t KvConfig::get_int(const std::string& key,
                               std::int64_t dflt) const {
  if (!has(key)) return dflt;
  const std::string v = get_str(key);
  try {
    std::size_t pos = 0;
    const std::int64_t r = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ValidationError("config: key '" + key + "' is not an integer: '" +
                          v + "'");
  }
}

std::uint64_t KvConfig::get_u64(const std::string& key,
                                std::uint64_t dflt) const {
  if (!has(key)) return dflt;
  const std::string v = get_str(key);
  try {
    std::size_t pos = 0;
    const std::uint64_t r = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ValidationError("config: key '" + key +
                          "' is not an unsigned integer: '" + v + "'");
  }
}

double KvConfig::get_double(const std::string& key, double dflt) const {
  if (!has(key)) return dflt;
  const std::string v = get_str(key);
  try {
    std::size_t pos = 0;
    const double r = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ValidationError("config: key '" + key + "' is not a number: '" + v +
                          "'");
  }
}

bool KvConfig::get_bool(const std::string& key, bool dflt) const {
  if (!has(key)) return dflt;
  const std::string v = get_str(key);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ValidationError("config: key '" + key + "' is not a boolean: '" + v +
                        "'");
}

std::vector<std::string> KvConfig::get_list(const std::string& key) const {
  if (!has(key)) return {};
  return split(get_str(key), ',');
}

void KvConfig::write(std::ostream& os) const {
  for (const auto& [k, v] : entries_) os << k << " = " << v << "\n";
}

void KvConfig::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write config to " + path);
  write(out);
}

}  // namespace ucf
