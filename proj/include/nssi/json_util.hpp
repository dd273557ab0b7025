#pragma once

// Strict reading of JSON objects: every field is optional with the caller's
// default, type errors name the full key path, and keys nobody asked for are
// reported by finish().

#include <json.hpp>

#include <set>
#include <stdexcept>
#include <string>

namespace nssi {

using json = nlohmann::json;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class JsonReader {
 public:
  JsonReader(const json& object, std::string path) : object_(object), path_(std::move(path)) {
    if (!object_.is_object()) throw ConfigError(label() + ": expected an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = object_.find(key);
    if (it == object_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(label(key) + ": " + e.what());
    }
  }

  bool has(const char* key) const { return object_.contains(key); }

  // Nested object reader; the key counts as consumed.
  JsonReader child(const char* key) {
    seen_.insert(key);
    return JsonReader(object_.at(key), label(key));
  }

  const json* raw(const char* key) {
    seen_.insert(key);
    auto it = object_.find(key);
    return it == object_.end() ? nullptr : &*it;
  }

  std::string label(const std::string& key = {}) const {
    if (key.empty()) return path_.empty() ? "<root>" : path_;
    return path_.empty() ? key : path_ + "." + key;
  }

  void finish() const {
    for (auto it = object_.begin(); it != object_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError("unknown key '" + label(it.key()) + "'");
    }
  }

 private:
  const json& object_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace nssi
