#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

namespace vp::config {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// set() on a name nobody defined.
class UnknownPropertyError : public ConfigError {
public:
    UnknownPropertyError(std::string name, std::vector<std::string> suggestions);
    const std::string& name() const { return name_; }
    const std::vector<std::string>& suggestions() const { return suggestions_; }

private:
    std::string name_;
    std::vector<std::string> suggestions_;
};

class ParseError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

enum class Type { Integer, Boolean, String, Size };
const char* to_string(Type t);

enum class Source { Default, File, Api };
const char* to_string(Source s);

using Value = std::variant<std::int64_t, bool, std::string>;

struct PropertySpec {
    std::string name;
    Type type = Type::Integer;
    Value default_value;
    std::string description;
    /// The string value names a file a client may upload.
    bool file_parameter = false;
};

/// One "name = value" assignment as it appears in a file or API call.
struct Override {
    std::string name;
    std::string raw_value;
    int line = 0; // 0 for API overrides
};

/// Parses a raw textual value according to `type`. Strings are taken
/// verbatim (quotes already stripped by the file parser).
Value parse_value(const std::string& property, Type type, const std::string& raw);

std::string format_value(const Value& v);

/// Parses the line-oriented "dotted.name = value" grammar.
std::vector<Override> parse_file(const std::string& text);

/// Renders overrides back to the file grammar, strings quoted.
std::string render(const std::vector<Override>& overrides, const class PropertySet& set);

struct Resolved {
    std::string name;
    Value value;
    Source source;
};

/// Typed property catalog with layered overrides: default < file < api.
class PropertySet {
public:
    void define(PropertySpec spec);
    bool defined(const std::string& name) const { return specs_.contains(name); }
    const PropertySpec& spec(const std::string& name) const;
    std::vector<PropertySpec> specs() const;

    void set(const std::string& name, const std::string& raw_value, Source source);
    void set_value(const std::string& name, Value value, Source source);
    void apply(const std::vector<Override>& overrides, Source source);

    Value get(const std::string& name) const;
    std::int64_t get_int(const std::string& name) const;
    bool get_bool(const std::string& name) const;
    std::string get_string(const std::string& name) const;
    Source source_of(const std::string& name) const;

    /// Names that look like a misspelling of `name`.
    std::vector<std::string> suggestions(const std::string& name) const;

    void freeze() { frozen_ = true; }
    bool frozen() const { return frozen_; }

    std::vector<Resolved> snapshot() const;
    /// config.resolved document: [{name, value, source}, ...] sorted by name.
    nlohmann::ordered_json snapshot_json() const;

private:
    struct Entry {
        PropertySpec spec;
        std::map<Source, Value> layers;
    };
    const Entry& entry(const std::string& name) const;
    Entry& mutable_entry(const std::string& name);

    std::map<std::string, Entry> specs_;
    bool frozen_ = false;
};

} // namespace vp::config
