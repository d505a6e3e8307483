#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace skinres {

/// A small TOML subset: `[section]` headers, `key = value` pairs, `#` comments.
/// Values are quoted strings, bare numbers/booleans/words, or one-line `[a, b, c]` lists.
/// Keys are addressed as "section.key".
class KeyValueConfig {
public:
    static KeyValueConfig parse(std::string_view text, std::string_view origin = "<string>");
    static KeyValueConfig load(const std::filesystem::path& path);

    bool contains(const std::string& key) const { return values_.count(key) != 0; }

    std::string get_string(const std::string& key, const std::string& fallback) const;
    std::optional<std::string> find_string(const std::string& key) const;
    long long get_int(const std::string& key, long long fallback) const;
    double get_double(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    /// Scalars read as one-element lists.
    std::optional<std::vector<std::string>> find_list(const std::string& key) const;

    /// Layer `other` on top of this config; keys in `other` win.
    void merge(const KeyValueConfig& other);

    const std::map<std::string, std::vector<std::string>>& entries() const { return values_; }

private:
    std::map<std::string, std::vector<std::string>> values_;
    std::map<std::string, bool> is_list_;
    std::string origin_;
};

}  // namespace skinres
