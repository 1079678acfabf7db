#pragma once

#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace vmclass {

// INI-style key/value text: `[section]` headers, `key = value` lines, '#' or
// ';' comments. Section and key order is preserved on output.
class KeyValueConfig {
public:
    using Entry = std::pair<std::string, std::string>;

    static KeyValueConfig parse(std::string_view text, const std::string& source = "<config>");
    static KeyValueConfig load(const std::filesystem::path& path);

    void save(const std::filesystem::path& path) const;
    std::string to_string() const;

    bool has_section(std::string_view section) const;
    bool has(std::string_view section, std::string_view key) const;
    std::optional<std::string> get(std::string_view section, std::string_view key) const;

    std::string get_string(std::string_view section, std::string_view key, std::string fallback) const;
    double get_double(std::string_view section, std::string_view key, double fallback) const;
    std::int64_t get_int(std::string_view section, std::string_view key, std::int64_t fallback) const;
    std::uint64_t get_uint(std::string_view section, std::string_view key, std::uint64_t fallback) const;
    bool get_bool(std::string_view section, std::string_view key, bool fallback) const;

    void set(std::string_view section, std::string_view key, std::string value);
    void set_double(std::string_view section, std::string_view key, double value);
    void set_int(std::string_view section, std::string_view key, std::int64_t value);
    void set_bool(std::string_view section, std::string_view key, bool value);

    std::vector<std::string> sections() const;
    const std::vector<Entry>& entries(std::string_view section) const;

    // Throws ConfigError naming the first key of `section` not in `allowed`.
    void require_known_keys(std::string_view section, std::initializer_list<std::string_view> allowed) const;

    // Copies every entry of `other`, overriding existing keys.
    void merge(const KeyValueConfig& other);

    const std::string& source() const noexcept { return source_; }

private:
    struct Section {
        std::string name;
        std::vector<Entry> entries;
    };

    const Section* find(std::string_view section) const;
    Section& find_or_add(std::string_view section);
    [[noreturn]] void bad_value(std::string_view section, std::string_view key, const std::string& value,
                                const char* expected) const;

    std::string source_ = "<config>";
    std::vector<Section> sections_;
};

// Shortest text that parses back to the same double.
std::string format_double(double value);

}  // namespace vmclass
