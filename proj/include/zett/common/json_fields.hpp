#pragma once

#include <set>
#include <string>

#include "json.hpp"
#include "zett/common/error.hpp"

namespace zett {

// Reads optional fields from a JSON object and rejects any key that was
// never asked for. Type errors surface as InvalidFormat.
class JsonFields {
 public:
  JsonFields(const nlohmann::json& j, std::string context) : j_(j), context_(std::move(context)) {
    require(j.is_object(), ErrorCode::InvalidFormat, context_ + ": expected a JSON object");
  }

  template <typename T>
  JsonFields& get(const char* key, T& out) {
    known_.insert(key);
    if (auto it = j_.find(key); it != j_.end()) {
      try {
        it->get_to(out);
      } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::InvalidFormat, context_ + "." + key + ": " + e.what());
      }
    }
    return *this;
  }

  bool has(const char* key) const { return j_.contains(key); }

  void finish() const {
    for (const auto& [key, value] : j_.items())
      require(known_.count(key) > 0, ErrorCode::InvalidFormat, context_ + ": unknown key '" + key + "'");
  }

 private:
  const nlohmann::json& j_;
  std::string context_;
  std::set<std::string, std::less<>> known_;
};

}  // namespace zett
