#pragma once

#include <nlohmann/json.hpp>

#include "spotlight/box.hpp"
#include "spotlight/error.hpp"

namespace spotlight {

inline nlohmann::json box_to_json(const BoundingBox& b) {
  return nlohmann::json::array({b.x, b.y, b.w, b.h});
}

inline BoundingBox box_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 4) throw Error("box must be [x, y, w, h]");
  for (const auto& v : j) {
    if (!v.is_number_integer()) throw Error("box coordinates must be integers");
  }
  return {j[0].get<int>(), j[1].get<int>(), j[2].get<int>(), j[3].get<int>()};
}

}  // namespace spotlight
