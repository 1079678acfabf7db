#include "vmclass/config.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <fstream>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "vmclass/error.hpp"

namespace vmclass {

namespace pt = boost::property_tree;

std::string format_double(double value) {
    std::array<char, 32> buffer{};
    const auto [ptr, ec] = std::to_chars(buffer.data(), buffer.data() + buffer.size(), value);
    return std::string(buffer.data(), ptr);
}

KeyValueConfig KeyValueConfig::parse(std::string_view text, const std::string& source) {
    pt::ptree tree;
    std::istringstream in{std::string(text)};
    try {
        pt::ini_parser::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError(source + ":" + std::to_string(e.line()) + ": " + e.message());
    }

    KeyValueConfig config;
    config.source_ = source;
    for (const auto& [name, node] : tree) {
        if (node.empty() && !node.data().empty()) {
            throw ConfigError(source + ": key '" + name + "' appears outside any [section]");
        }
        auto& section = config.find_or_add(name);
        for (const auto& [key, value] : node) {
            section.entries.emplace_back(key, value.get_value<std::string>());
        }
    }
    return config;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    std::ostringstream text;
    text << in.rdbuf();
    return parse(text.str(), path.string());
}

void KeyValueConfig::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write config " + path.string());
    out << to_string();
    if (!out) throw ConfigError("failed writing config " + path.string());
}

std::string KeyValueConfig::to_string() const {
    std::ostringstream out;
    bool first = true;
    for (const auto& section : sections_) {
        if (!first) out << '\n';
        first = false;
        out << '[' << section.name << "]\n";
        for (const auto& [key, value] : section.entries) out << key << " = " << value << '\n';
    }
    return out.str();
}

const KeyValueConfig::Section* KeyValueConfig::find(std::string_view section) const {
    const auto it = std::find_if(sections_.begin(), sections_.end(),
                                 [&](const Section& s) { return s.name == section; });
    return it == sections_.end() ? nullptr : &*it;
}

KeyValueConfig::Section& KeyValueConfig::find_or_add(std::string_view section) {
    auto it = std::find_if(sections_.begin(), sections_.end(),
                           [&](const Section& s) { return s.name == section; });
    if (it != sections_.end()) return *it;
    sections_.push_back({std::string(section), {}});
    return sections_.back();
}

bool KeyValueConfig::has_section(std::string_view section) const { return find(section) != nullptr; }

bool KeyValueConfig::has(std::string_view section, std::string_view key) const {
    return get(section, key).has_value();
}

std::optional<std::string> KeyValueConfig::get(std::string_view section, std::string_view key) const {
    const Section* s = find(section);
    if (!s) return std::nullopt;
    for (const auto& [k, v] : s->entries) {
        if (k == key) return v;
    }
    return std::nullopt;
}

void KeyValueConfig::bad_value(std::string_view section, std::string_view key, const std::string& value,
                               const char* expected) const {
    throw ConfigError(source_ + ": [" + std::string(section) + "] " + std::string(key) + " = '" +
                      value + "' is not " + expected);
}

std::string KeyValueConfig::get_string(std::string_view section, std::string_view key,
                                       std::string fallback) const {
    auto v = get(section, key);
    return v ? *v : std::move(fallback);
}

double KeyValueConfig::get_double(std::string_view section, std::string_view key, double fallback) const {
    const auto v = get(section, key);
    if (!v) return fallback;
    double out = 0.0;
    const auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
    if (ec != std::errc() || ptr != v->data() + v->size()) bad_value(section, key, *v, "a number");
    return out;
}

std::int64_t KeyValueConfig::get_int(std::string_view section, std::string_view key,
                                     std::int64_t fallback) const {
    const auto v = get(section, key);
    if (!v) return fallback;
    std::int64_t out = 0;
    const auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
    if (ec != std::errc() || ptr != v->data() + v->size()) bad_value(section, key, *v, "an integer");
    return out;
}

std::uint64_t KeyValueConfig::get_uint(std::string_view section, std::string_view key,
                                       std::uint64_t fallback) const {
    const auto v = get(section, key);
    if (!v) return fallback;
    std::uint64_t out = 0;
    const auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
    if (ec != std::errc() || ptr != v->data() + v->size()) {
        bad_value(section, key, *v, "a non-negative integer");
    }
    return out;
}

bool KeyValueConfig::get_bool(std::string_view section, std::string_view key, bool fallback) const {
    const auto v = get(section, key);
    if (!v) return fallback;
    if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
    if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
    bad_value(section, key, *v, "a boolean");
}

void KeyValueConfig::set(std::string_view section, std::string_view key, std::string value) {
    auto& s = find_or_add(section);
    for (auto& [k, v] : s.entries) {
        if (k == key) {
            v = std::move(value);
            return;
        }
    }
    s.entries.emplace_back(std::string(key), std::move(value));
}

void KeyValueConfig::set_double(std::string_view section, std::string_view key, double value) {
    set(section, key, format_double(value));
}

void KeyValueConfig::set_int(std::string_view section, std::string_view key, std::int64_t value) {
    set(section, key, std::to_string(value));
}

void KeyValueConfig::set_bool(std::string_view section, std::string_view key, bool value) {
    set(section, key, value ? "true" : "false");
}

std::vector<std::string> KeyValueConfig::sections() const {
    std::vector<std::string> names;
    for (const auto& s : sections_) names.push_back(s.name);
    return names;
}

const std::vector<KeyValueConfig::Entry>& KeyValueConfig::entries(std::string_view section) const {
    static const std::vector<Entry> none;
    const Section* s = find(section);
    return s ? s->entries : none;
}

void KeyValueConfig::require_known_keys(std::string_view section,
                                        std::initializer_list<std::string_view> allowed) const {
    for (const auto& [key, value] : entries(section)) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
            throw ConfigError(source_ + ": unknown key '" + key + "' in [" + std::string(section) + "]");
        }
    }
}

void KeyValueConfig::merge(const KeyValueConfig& other) {
    for (const auto& section : other.sections_) {
        find_or_add(section.name);
        for (const auto& [key, value] : section.entries) set(section.name, key, value);
    }
}

}  // namespace vmclass
