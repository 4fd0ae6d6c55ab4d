#ifndef FLOWTRACK_JSONIO_HPP
#define FLOWTRACK_JSONIO_HPP

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "flowtrack/errors.hpp"

namespace flowtrack {

using json = nlohmann::json;

// FNV-1a over the canonical (key-sorted) serialization.
inline std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t json_hash(const json& j) { return fnv1a64(j.dump()); }

inline std::string hash_hex(std::uint64_t h) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[i] = digits[h & 0xf];
        h >>= 4;
    }
    return s;
}

inline json parse_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open file: " + path);
    json j = json::parse(f, nullptr, false);
    if (j.is_discarded()) throw ValidationError("malformed JSON in " + path);
    return j;
}

// Strict-parsing helper: after pulling known keys out of an object, reject
// anything left over, naming the offending key.
inline void reject_unknown_keys(const json& obj, const std::set<std::string>& allowed,
                                const std::string& context) {
    if (!obj.is_object()) throw ValidationError(context + " must be a JSON object");
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!allowed.count(it.key()))
            throw ValidationError("unknown key '" + it.key() + "' in " + context);
}

template <typename T>
T get_or(const json& obj, const std::string& key, T fallback) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ValidationError("key '" + key + "' has the wrong type");
    }
}

template <typename T>
T get_required(const json& obj, const std::string& key, const std::string& context) {
    if (!obj.contains(key)) throw ValidationError("missing key '" + key + "' in " + context);
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ValidationError("key '" + key + "' in " + context + " has the wrong type");
    }
}

// All file outputs go through write-to-temp + rename so malformed inputs or
// mid-write failures never leave partial files behind.
inline void atomic_write_file(const std::string& path,
                              const std::function<void(std::ostream&)>& writer) {
    namespace fs = std::filesystem;
    fs::path target(path);
    if (target.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(target.parent_path(), ec);
    }
    fs::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("cannot open for writing: " + tmp.string());
        try {
            writer(f);
        } catch (...) {
            f.close();
            std::error_code ec;
            fs::remove(tmp, ec);
            throw;
        }
        f.flush();
        if (!f) {
            std::error_code ec;
            fs::remove(tmp, ec);
            throw IoError("write failed: " + tmp.string());
        }
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw IoError("cannot finalize file: " + path);
    }
}

inline void atomic_write_text(const std::string& path, const std::string& content) {
    atomic_write_file(path, [&](std::ostream& os) { os << content; });
}

inline std::vector<json> read_jsonl(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open file: " + path);
    std::vector<json> lines;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded())
            throw ValidationError("malformed JSON line " + std::to_string(lineno) + " in " + path);
        lines.push_back(std::move(j));
    }
    return lines;
}

// ---- minimal schema check -------------------------------------------------
// Supports the subset of JSON Schema the committed schemas use: "type",
// "required", "properties", "items". Enough to keep report writers honest.
inline void validate_against_schema(const json& doc, const json& schema, const std::string& where) {
    if (schema.contains("type")) {
        const std::string t = schema.at("type").get<std::string>();
        bool ok = (t == "object" && doc.is_object()) || (t == "array" && doc.is_array()) ||
                  (t == "string" && doc.is_string()) || (t == "number" && doc.is_number()) ||
                  (t == "integer" && doc.is_number_integer()) || (t == "boolean" && doc.is_boolean());
        if (!ok)
            throw DataIntegrityError("schema violation at " + where + ": expected " + t);
    }
    if (schema.contains("required"))
        for (const auto& key : schema.at("required"))
            if (!doc.contains(key.get<std::string>()))
                throw DataIntegrityError("schema violation at " + where + ": missing '" +
                                         key.get<std::string>() + "'");
    if (schema.contains("properties") && doc.is_object())
        for (auto it = schema.at("properties").begin(); it != schema.at("properties").end(); ++it)
            if (doc.contains(it.key()))
                validate_against_schema(doc.at(it.key()), it.value(), where + "." + it.key());
    if (schema.contains("items") && doc.is_array())
        for (std::size_t i = 0; i < doc.size(); ++i)
            validate_against_schema(doc[i], schema.at("items"), where + "[" + std::to_string(i) + "]");
}

}  // namespace flowtrack

#endif  // FLOWTRACK_JSONIO_HPP
