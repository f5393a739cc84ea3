#pragma once

#include "feasmap/svm.hpp"

#include <json.hpp>

namespace feasmap::detail {

nlohmann::json svm_to_json(const SvmModel& model);
SvmModel svm_from_json(const nlohmann::json& j);

nlohmann::json vector_to_json(const Vector& v);
Vector vector_from_json(const nlohmann::json& j);

}  // namespace feasmap::detail
