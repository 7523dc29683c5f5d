#include "pcsg/kvfile.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace pcsg {

namespace {
std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}
}  // namespace

KvFile KvFile::parse(const std::string& text, const std::string& header) {
  KvFile f;
  std::istringstream in(text);
  std::string raw;
  int lineno = 0;
  bool header_seen = header.empty();
  while (std::getline(in, raw)) {
    ++lineno;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    if (!header_seen) {
      if (line != header) {
        throw ConfigError("line " + std::to_string(lineno) + ": expected header '" + header + "', found '" + line + "'");
      }
      header_seen = true;
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": missing '='");
    KvEntry e{trim(line.substr(0, eq)), trim(line.substr(eq + 1)), lineno};
    if (e.key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    f.entries_.push_back(std::move(e));
  }
  if (!header_seen) throw ConfigError("missing header '" + header + "'");
  return f;
}

KvFile KvFile::load(const std::filesystem::path& path, const std::string& header) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse(ss.str(), header);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::vector<const KvEntry*> KvFile::all(const std::string& key) const {
  std::vector<const KvEntry*> out;
  for (const auto& e : entries_)
    if (e.key == key) out.push_back(&e);
  return out;
}

const KvEntry* KvFile::find(const std::string& key) const {
  const KvEntry* last = nullptr;
  for (const auto& e : entries_)
    if (e.key == key) last = &e;
  return last;
}

std::string KvFile::get_string(const std::string& key, const std::string& fallback) const {
  const KvEntry* e = find(key);
  return e ? e->value : fallback;
}

double KvFile::get_double(const std::string& key, double fallback) const {
  const KvEntry* e = find(key);
  return e ? parse_double(e->value, key) : fallback;
}

long long KvFile::get_int(const std::string& key, long long fallback) const {
  const KvEntry* e = find(key);
  return e ? parse_int(e->value, key) : fallback;
}

bool KvFile::get_bool(const std::string& key, bool fallback) const {
  const KvEntry* e = find(key);
  if (!e) return fallback;
  if (e->value == "1" || e->value == "true") return true;
  if (e->value == "0" || e->value == "false") return false;
  throw ConfigError(key + ": expected a boolean, got '" + e->value + "'");
}

double parse_double(const std::string& s, const std::string& what) {
  double v = 0;
  const auto* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || p != end) throw ConfigError(what + ": expected a number, got '" + s + "'");
  return v;
}

long long parse_int(const std::string& s, const std::string& what) {
  long long v = 0;
  const auto* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || p != end) throw ConfigError(what + ": expected an integer, got '" + s + "'");
  return v;
}

std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

}  // namespace pcsg
