#pragma once

#include <set>
#include <string>
#include <utility>

#include "json.hpp"
#include "stnc/error.hpp"

namespace stnc {

using Json = nlohmann::json;

// Reads fields from a JSON object and rejects keys nobody asked for.
// Call finish() once every expected field has been read.
class StrictObject {
 public:
  StrictObject(const Json& j, std::string where, ErrorKind kind = ErrorKind::kValidation)
      : j_(j), where_(std::move(where)), kind_(kind) {
    require(j_.is_object(), kind_, where_ + ": expected an object");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  const Json& at(const std::string& key) {
    seen_.insert(key);
    require(j_.contains(key), kind_, where_ + ": missing key '" + key + "'");
    return j_.at(key);
  }

  template <class T>
  T get(const std::string& key) {
    const Json& v = at(key);
    try {
      return v.get<T>();
    } catch (const nlohmann::json::exception& e) {
      fail(kind_, where_ + "." + key + ": " + e.what());
    }
  }

  template <class T>
  T get_or(const std::string& key, T fallback) {
    if (!has(key)) return fallback;
    return get<T>(key);
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      require(seen_.count(key) > 0, kind_, where_ + ": unknown key '" + key + "'");
    }
  }

  const std::string& where() const { return where_; }

 private:
  const Json& j_;
  std::string where_;
  ErrorKind kind_;
  std::set<std::string> seen_;
};

}  // namespace stnc
