#pragma once
// Flat INI-style configuration: [section] headers plus `key = value` lines.
// Keys are stored as "section.key" ("key" alone before any section header).
// '#' or ';' starts a comment. Values are parsed on demand; a missing key
// without a default raises config_error. canonical() gives a sorted dump of
// the key-value pairs whose FNV-1a hash is stamped into every CSV, so output
// files are traceable to the exact configuration that produced them.

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "errors.hpp"
#include "rng.hpp"

namespace langevin {

namespace detail {
inline std::string trim(const std::string& s) {
    const char* ws = " \t\r\n";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(ws);
    return s.substr(b, e - b + 1);
}
} // namespace detail

class Config {
  public:
    Config() = default;

    static Config from_string(const std::string& text, const std::string& origin = "<string>") {
        Config cfg;
        std::istringstream in(text);
        std::string line, section;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const auto cut = line.find_first_of("#;");
            if (cut != std::string::npos) line.erase(cut);
            line = detail::trim(line);
            if (line.empty()) continue;
            if (line.front() == '[') {
                if (line.back() != ']')
                    throw config_error(origin + ":" + std::to_string(lineno) +
                                       ": unterminated section header");
                section = detail::trim(line.substr(1, line.size() - 2));
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw config_error(origin + ":" + std::to_string(lineno) +
                                   ": expected `key = value`, got `" + line + "`");
            std::string key = detail::trim(line.substr(0, eq));
            std::string val = detail::trim(line.substr(eq + 1));
            if (key.empty())
                throw config_error(origin + ":" + std::to_string(lineno) + ": empty key");
            if (!section.empty()) key = section + "." + key;
            cfg.kv_[key] = val;
        }
        return cfg;
    }

    static Config from_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw config_error("cannot open config file: " + path);
        std::ostringstream buf;
        buf << in.rdbuf();
        return from_string(buf.str(), path);
    }

    bool has(const std::string& key) const { return kv_.count(key) != 0; }

    const std::string& raw(const std::string& key) const {
        const auto it = kv_.find(key);
        if (it == kv_.end()) throw config_error("missing config key: " + key);
        return it->second;
    }

    std::string get_string(const std::string& key) const { return raw(key); }
    std::string get_string(const std::string& key, const std::string& dflt) const {
        return has(key) ? raw(key) : dflt;
    }

    double get_double(const std::string& key) const { return parse_double(key, raw(key)); }
    double get_double(const std::string& key, double dflt) const {
        return has(key) ? get_double(key) : dflt;
    }

    long long get_int(const std::string& key) const {
        const std::string& s = raw(key);
        std::size_t pos = 0;
        long long v = 0;
        try {
            v = std::stoll(s, &pos);
        } catch (const std::exception&) {
            throw config_error("config key " + key + ": not an integer: `" + s + "`");
        }
        if (pos != s.size())
            throw config_error("config key " + key + ": trailing junk in integer: `" + s + "`");
        return v;
    }
    long long get_int(const std::string& key, long long dflt) const {
        return has(key) ? get_int(key) : dflt;
    }

    // Comma-separated list of doubles.
    std::vector<double> get_vector(const std::string& key) const {
        const std::string& s = raw(key);
        std::vector<double> out;
        std::string item;
        std::istringstream in(s);
        while (std::getline(in, item, ',')) {
            item = detail::trim(item);
            if (item.empty())
                throw config_error("config key " + key + ": empty list element in `" + s + "`");
            out.push_back(parse_double(key, item));
        }
        if (out.empty()) throw config_error("config key " + key + ": empty list");
        return out;
    }

    void set(const std::string& key, const std::string& value) { kv_[key] = value; }

    // Sorted dump; std::map keeps keys ordered already.
    std::string canonical() const {
        std::string s;
        for (const auto& [k, v] : kv_) {
            s += k;
            s += '=';
            s += v;
            s += '\n';
        }
        return s;
    }

    std::uint64_t hash() const { return fnv1a(canonical()); }

    const std::map<std::string, std::string>& items() const { return kv_; }

  private:
    static double parse_double(const std::string& key, const std::string& s) {
        std::size_t pos = 0;
        double v = 0.0;
        try {
            v = std::stod(s, &pos);
        } catch (const std::exception&) {
            throw config_error("config key " + key + ": not a number: `" + s + "`");
        }
        if (pos != s.size())
            throw config_error("config key " + key + ": trailing junk in number: `" + s + "`");
        return v;
    }

    std::map<std::string, std::string> kv_;
};

} // namespace langevin
