#include "skinres/kvconfig.hpp"

#include <charconv>
#include <sstream>

#include <fmt/format.h>

#include "skinres/error.hpp"
#include "skinres/fsutil.hpp"

namespace skinres {

namespace {

std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

// Strips a trailing comment that is not inside a quoted string.
std::string_view strip_comment(std::string_view line) {
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"') quoted = !quoted;
        if (line[i] == '#' && !quoted) return line.substr(0, i);
    }
    return line;
}

std::string unquote(std::string_view token, std::string_view where) {
    token = trim(token);
    if (token.size() >= 2 && token.front() == '"' && token.back() == '"') {
        return std::string(token.substr(1, token.size() - 2));
    }
    if (token.find('"') != std::string_view::npos) {
        fail(ErrorKind::config, fmt::format("{}: malformed string value '{}'", where, token));
    }
    return std::string(token);
}

std::vector<std::string> split_list(std::string_view body, std::string_view where) {
    std::vector<std::string> items;
    std::string current;
    bool quoted = false;
    for (char c : body) {
        if (c == '"') quoted = !quoted;
        if (c == ',' && !quoted) {
            if (!trim(current).empty()) items.push_back(unquote(current, where));
            current.clear();
        } else {
            current.push_back(c);
        }
    }
    if (quoted) fail(ErrorKind::config, fmt::format("{}: unterminated string", where));
    if (!trim(current).empty()) items.push_back(unquote(current, where));
    return items;
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(std::string_view text, std::string_view origin) {
    KeyValueConfig cfg;
    cfg.origin_ = std::string(origin);
    std::string section;
    std::istringstream in{std::string(text)};
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const auto where = fmt::format("{}:{}", origin, line_no);
        const auto line = trim(strip_comment(raw));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') fail(ErrorKind::config, fmt::format("{}: bad section header", where));
            section = std::string(trim(line.substr(1, line.size() - 2)));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            fail(ErrorKind::config, fmt::format("{}: expected 'key = value'", where));
        }
        const auto key = std::string(trim(line.substr(0, eq)));
        const auto value = trim(line.substr(eq + 1));
        if (key.empty()) fail(ErrorKind::config, fmt::format("{}: empty key", where));
        const auto full = section.empty() ? key : section + "." + key;
        if (!value.empty() && value.front() == '[') {
            if (value.back() != ']') fail(ErrorKind::config, fmt::format("{}: unterminated list", where));
            cfg.values_[full] = split_list(value.substr(1, value.size() - 2), where);
            cfg.is_list_[full] = true;
        } else {
            cfg.values_[full] = {unquote(value, where)};
            cfg.is_list_[full] = false;
        }
    }
    return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
    std::error_code ec;
    if (!std::filesystem::is_regular_file(path, ec)) {
        fail(ErrorKind::config, fmt::format("config file not found: {}", path.string()));
    }
    return parse(read_file(path), path.string());
}

std::optional<std::string> KeyValueConfig::find_string(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    if (is_list_.at(key) || it->second.size() != 1) {
        fail(ErrorKind::config, fmt::format("{}: '{}' must be a scalar", origin_, key));
    }
    return it->second.front();
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
    return find_string(key).value_or(fallback);
}

long long KeyValueConfig::get_int(const std::string& key, long long fallback) const {
    const auto s = find_string(key);
    if (!s) return fallback;
    long long v = 0;
    const auto [ptr, ec] = std::from_chars(s->data(), s->data() + s->size(), v);
    if (ec != std::errc() || ptr != s->data() + s->size()) {
        fail(ErrorKind::config, fmt::format("{}: '{}' is not an integer: {}", origin_, key, *s));
    }
    return v;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
    const auto s = find_string(key);
    if (!s) return fallback;
    try {
        std::size_t used = 0;
        const double v = std::stod(*s, &used);
        if (used == s->size()) return v;
    } catch (const std::exception&) {
    }
    fail(ErrorKind::config, fmt::format("{}: '{}' is not a number: {}", origin_, key, *s));
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
    const auto s = find_string(key);
    if (!s) return fallback;
    if (*s == "true") return true;
    if (*s == "false") return false;
    fail(ErrorKind::config, fmt::format("{}: '{}' is not a boolean: {}", origin_, key, *s));
}

std::optional<std::vector<std::string>> KeyValueConfig::find_list(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    return it->second;
}

void KeyValueConfig::merge(const KeyValueConfig& other) {
    for (const auto& [k, v] : other.values_) {
        values_[k] = v;
        is_list_[k] = other.is_list_.at(k);
    }
}

}  // namespace skinres
