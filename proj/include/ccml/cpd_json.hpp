#pragma once

#include <json.hpp>

#include "ccml/discrete_cpd.hpp"

namespace ccml {

// {"support":[...],"masses":[...],"deferred":u}; adds "approximate":true
// only when the CPD was thinned.
nlohmann::json to_json(const DiscreteCpd& dist);

DiscreteCpd cpd_from_json(const nlohmann::json& j);

}  // namespace ccml
