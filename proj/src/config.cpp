#include "vp/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <limits>

#include <fmt/format.h>

namespace vp::config {

namespace {

std::string join(const std::vector<std::string>& v) {
    std::string out;
    for (const auto& s : v) {
        if (!out.empty())
            out += ", ";
        out += s;
    }
    return out;
}

std::string describe_unknown(const std::string& name, const std::vector<std::string>& suggestions) {
    if (suggestions.empty())
        return fmt::format("unknown property '{}'", name);
    return fmt::format("unknown property '{}' (did you mean: {}?)", name, join(suggestions));
}

std::size_t edit_distance(const std::string& a, const std::string& b) {
    std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j)
        prev[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            const std::size_t subst = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, subst});
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

bool valid_name(std::string_view name) {
    if (name.empty() || name.front() == '.' || name.back() == '.')
        return false;
    char last = 0;
    for (char c : name) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_' || c == '.';
        if (!ok || (c == '.' && last == '.'))
            return false;
        last = c;
    }
    return true;
}

std::optional<std::int64_t> parse_integer(std::string_view text) {
    bool negative = false;
    if (!text.empty() && (text.front() == '-' || text.front() == '+')) {
        negative = text.front() == '-';
        text.remove_prefix(1);
    }
    int base = 10;
    if (text.size() > 2 && text[0] == '0' && (text[1] == 'x' || text[1] == 'X')) {
        base = 16;
        text.remove_prefix(2);
    }
    if (text.empty())
        return std::nullopt;
    std::uint64_t magnitude = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), magnitude, base);
    if (ec != std::errc() || ptr != text.data() + text.size())
        return std::nullopt;
    if (negative) {
        if (magnitude > std::uint64_t(std::numeric_limits<std::int64_t>::max()) + 1)
            return std::nullopt;
        return std::int64_t(0 - magnitude);
    }
    if (magnitude > std::uint64_t(std::numeric_limits<std::int64_t>::max()))
        return std::nullopt;
    return std::int64_t(magnitude);
}

std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos)
        return {};
    auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::string quote(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        switch (c) {
        case '"': out += "\\\""; break;
        case '\\': out += "\\\\"; break;
        case '\n': out += "\\n"; break;
        case '\t': out += "\\t"; break;
        default: out += c;
        }
    }
    return out + "\"";
}

} // namespace

UnknownPropertyError::UnknownPropertyError(std::string name, std::vector<std::string> suggestions)
    : ConfigError(describe_unknown(name, suggestions)), name_(std::move(name)),
      suggestions_(std::move(suggestions)) {}

const char* to_string(Type t) {
    switch (t) {
    case Type::Integer: return "integer";
    case Type::Boolean: return "boolean";
    case Type::String: return "string";
    case Type::Size: return "size";
    }
    return "?";
}

const char* to_string(Source s) {
    switch (s) {
    case Source::Default: return "default";
    case Source::File: return "file";
    case Source::Api: return "api";
    }
    return "?";
}

Value parse_value(const std::string& property, Type type, const std::string& raw) {
    auto fail = [&](const char* expected) {
        return ParseError(fmt::format("property '{}': cannot parse '{}' as {}", property, raw, expected));
    };
    switch (type) {
    case Type::Boolean:
        if (raw == "true")
            return true;
        if (raw == "false")
            return false;
        throw fail("boolean (true/false)");
    case Type::String:
        return raw;
    case Type::Integer:
        if (auto v = parse_integer(raw))
            return *v;
        throw fail("integer");
    case Type::Size: {
        std::string_view text = raw;
        int shift = 0;
        if (text.size() > 2) {
            auto suffix = text.substr(text.size() - 2);
            if (suffix == "Ki")
                shift = 10;
            else if (suffix == "Mi")
                shift = 20;
            else if (suffix == "Gi")
                shift = 30;
            if (shift)
                text.remove_suffix(2);
        }
        auto v = parse_integer(text);
        if (!v || *v < 0)
            throw fail("size (integer with optional Ki/Mi/Gi suffix)");
        if (shift && *v > (std::numeric_limits<std::int64_t>::max() >> shift))
            throw fail("size (value overflows)");
        return *v << shift;
    }
    }
    throw fail("value");
}

std::string format_value(const Value& v) {
    if (auto* i = std::get_if<std::int64_t>(&v))
        return std::to_string(*i);
    if (auto* b = std::get_if<bool>(&v))
        return *b ? "true" : "false";
    return std::get<std::string>(v);
}

std::vector<Override> parse_file(const std::string& text) {
    std::vector<Override> out;
    int line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto nl = text.find('\n', pos);
        std::string_view line(text.data() + pos, (nl == std::string::npos ? text.size() : nl) - pos);
        pos = nl == std::string::npos ? text.size() + 1 : nl + 1;
        ++line_no;

        auto syntax = [&](const std::string& what) {
            return ParseError(fmt::format("line {}: {}", line_no, what));
        };

        std::string stripped = trim(line);
        if (stripped.empty() || stripped.front() == '#')
            continue;
        auto eq = stripped.find('=');
        if (eq == std::string::npos)
            throw syntax(fmt::format("expected 'name = value', got '{}'", stripped));
        std::string name = trim(std::string_view(stripped).substr(0, eq));
        std::string rest = trim(std::string_view(stripped).substr(eq + 1));
        if (!valid_name(name))
            throw syntax(fmt::format("invalid property name '{}'", name));
        if (rest.empty())
            throw syntax(fmt::format("missing value for '{}'", name));

        std::string value;
        std::size_t consumed = 0;
        if (rest.front() == '"') {
            std::size_t i = 1;
            bool closed = false;
            for (; i < rest.size(); ++i) {
                char c = rest[i];
                if (c == '\\') {
                    if (++i >= rest.size())
                        break;
                    switch (rest[i]) {
                    case 'n': value += '\n'; break;
                    case 't': value += '\t'; break;
                    case '"': value += '"'; break;
                    case '\\': value += '\\'; break;
                    default: throw syntax(fmt::format("unknown escape '\\{}'", rest[i]));
                    }
                } else if (c == '"') {
                    closed = true;
                    ++i;
                    break;
                } else {
                    value += c;
                }
            }
            if (!closed)
                throw syntax("unterminated string");
            consumed = i;
        } else {
            while (consumed < rest.size()) {
                char c = rest[consumed];
                if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '+'))
                    break;
                ++consumed;
            }
            if (consumed == 0)
                throw syntax(fmt::format("unexpected character '{}' in value", rest.front()));
            value = rest.substr(0, consumed);
        }
        std::string tail = trim(std::string_view(rest).substr(consumed));
        if (!tail.empty() && tail.front() != '#')
            throw syntax(fmt::format("trailing text '{}' after value", tail));
        out.push_back(Override{std::move(name), std::move(value), line_no});
    }
    return out;
}

std::string render(const std::vector<Override>& overrides, const PropertySet& set) {
    std::string out;
    for (const auto& o : overrides) {
        const bool is_string = set.defined(o.name) && set.spec(o.name).type == Type::String;
        out += o.name + " = " + (is_string ? quote(o.raw_value) : o.raw_value) + "\n";
    }
    return out;
}

// ---------------------------------------------------------------------------

void PropertySet::define(PropertySpec spec) {
    if (frozen_)
        throw ConfigError(fmt::format("cannot define '{}' after freeze", spec.name));
    if (!valid_name(spec.name))
        throw ConfigError(fmt::format("invalid property name '{}'", spec.name));
    if (specs_.contains(spec.name))
        throw ConfigError(fmt::format("property '{}' defined twice", spec.name));
    const bool type_ok = std::visit(
        [&](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, bool>)
                return spec.type == Type::Boolean;
            else if constexpr (std::is_same_v<T, std::string>)
                return spec.type == Type::String;
            else
                return spec.type == Type::Integer || spec.type == Type::Size;
        },
        spec.default_value);
    if (!type_ok)
        throw ConfigError(fmt::format("default of '{}' is not a {}", spec.name, to_string(spec.type)));
    auto name = spec.name;
    Entry e{std::move(spec), {}};
    e.layers.emplace(Source::Default, e.spec.default_value);
    specs_.emplace(std::move(name), std::move(e));
}

const PropertySet::Entry& PropertySet::entry(const std::string& name) const {
    auto it = specs_.find(name);
    if (it == specs_.end())
        throw UnknownPropertyError(name, suggestions(name));
    return it->second;
}

PropertySet::Entry& PropertySet::mutable_entry(const std::string& name) {
    return const_cast<Entry&>(entry(name));
}

const PropertySpec& PropertySet::spec(const std::string& name) const {
    return entry(name).spec;
}

std::vector<PropertySpec> PropertySet::specs() const {
    std::vector<PropertySpec> out;
    for (const auto& [_, e] : specs_)
        out.push_back(e.spec);
    return out;
}

std::vector<std::string> PropertySet::suggestions(const std::string& name) const {
    std::vector<std::pair<std::size_t, std::string>> scored;
    const std::size_t budget = std::max<std::size_t>(2, name.size() / 4);
    for (const auto& [candidate, _] : specs_) {
        auto d = edit_distance(name, candidate);
        if (d <= budget)
            scored.emplace_back(d, candidate);
    }
    std::sort(scored.begin(), scored.end());
    std::vector<std::string> out;
    for (auto& [_, n] : scored)
        out.push_back(std::move(n));
    return out;
}

void PropertySet::set(const std::string& name, const std::string& raw_value, Source source) {
    const auto& e = entry(name);
    set_value(name, parse_value(name, e.spec.type, raw_value), source);
}

void PropertySet::set_value(const std::string& name, Value value, Source source) {
    if (frozen_)
        throw ConfigError(fmt::format("cannot set '{}': configuration is frozen", name));
    if (source == Source::Default)
        throw ConfigError("overrides must come from a file or the API");
    auto& e = mutable_entry(name);
    const bool is_int = std::holds_alternative<std::int64_t>(value);
    const bool ok = (e.spec.type == Type::Boolean && std::holds_alternative<bool>(value))
                    || (e.spec.type == Type::String && std::holds_alternative<std::string>(value))
                    || ((e.spec.type == Type::Integer || e.spec.type == Type::Size) && is_int);
    if (!ok)
        throw ParseError(fmt::format("property '{}': value '{}' is not a {}", name, format_value(value),
                                     to_string(e.spec.type)));
    e.layers[source] = std::move(value);
}

void PropertySet::apply(const std::vector<Override>& overrides, Source source) {
    for (const auto& o : overrides) {
        try {
            set(o.name, o.raw_value, source);
        } catch (const UnknownPropertyError&) {
            throw;
        } catch (const ConfigError& e) {
            if (o.line > 0)
                throw ParseError(fmt::format("line {}: {}", o.line, e.what()));
            throw;
        }
    }
}

Value PropertySet::get(const std::string& name) const {
    return entry(name).layers.rbegin()->second;
}

std::int64_t PropertySet::get_int(const std::string& name) const {
    return std::get<std::int64_t>(get(name));
}

bool PropertySet::get_bool(const std::string& name) const {
    return std::get<bool>(get(name));
}

std::string PropertySet::get_string(const std::string& name) const {
    return std::get<std::string>(get(name));
}

Source PropertySet::source_of(const std::string& name) const {
    return entry(name).layers.rbegin()->first;
}

std::vector<Resolved> PropertySet::snapshot() const {
    std::vector<Resolved> out;
    for (const auto& [name, e] : specs_) {
        const auto& [source, value] = *e.layers.rbegin();
        out.push_back(Resolved{name, value, source});
    }
    return out;
}

nlohmann::ordered_json PropertySet::snapshot_json() const {
    auto doc = nlohmann::ordered_json::array();
    for (const auto& r : snapshot()) {
        nlohmann::ordered_json rec;
        rec["name"] = r.name;
        std::visit([&](const auto& v) { rec["value"] = v; }, r.value);
        rec["source"] = to_string(r.source);
        doc.push_back(std::move(rec));
    }
    return doc;
}

} // namespace vp::config
