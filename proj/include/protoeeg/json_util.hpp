#pragma once

// Strict JSON field reading: unknown keys and type mismatches are
// configuration errors that name the offending key.

#include <initializer_list>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "protoeeg/errors.hpp"

namespace protoeeg::jsonutil {

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<std::string_view> allowed,
                           const std::string& context) {
  if (!j.is_object()) throw ConfigError("'" + context + "' must be a JSON object");
  for (const auto& item : j.items()) {
    bool known = false;
    for (auto key : allowed) known = known || key == item.key();
    if (!known) {
      throw ConfigError("unknown key '" + item.key() + "'" + (context.empty() ? "" : " in '" + context + "'"));
    }
  }
}

template <typename T>
bool value_matches(const nlohmann::json& v) {
  if constexpr (std::is_same_v<T, bool>) {
    return v.is_boolean();
  } else if constexpr (std::is_integral_v<T> && std::is_unsigned_v<T>) {
    return v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0);
  } else if constexpr (std::is_integral_v<T>) {
    return v.is_number_integer();
  } else if constexpr (std::is_floating_point_v<T>) {
    return v.is_number();
  } else if constexpr (std::is_same_v<T, std::string>) {
    return v.is_string();
  } else {
    return true;
  }
}

template <typename T>
void read(const nlohmann::json& j, const char* key, T& out, const std::string& context) {
  if (!j.contains(key)) return;
  const auto& v = j.at(key);
  const std::string name = context.empty() ? std::string(key) : context + "." + key;
  bool ok = value_matches<T>(v);
  if constexpr (requires { typename T::value_type; } && !std::is_same_v<T, std::string>) {
    if (!v.is_array()) ok = false;
    else
      for (const auto& e : v) ok = ok && value_matches<typename T::value_type>(e);
  }
  if (!ok) throw ConfigError("key '" + name + "' has the wrong type: " + v.dump());
  try {
    out = v.get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("key '" + name + "' could not be read: " + e.what());
  }
}

}  // namespace protoeeg::jsonutil
