#pragma once

#include <string>

#include "cmgva/mixture.hpp"

namespace cmgva {

// Versioned JSON checkpoint of a fitted state. Doubles are written with a
// shortest round-trip representation, so serialize -> parse -> serialize is
// byte stable and parsed values are bit identical to the originals.
//
// Schema (version 1):
// {
//   "format": "cmgva-state", "version": 1, "m": <int>,
//   "gamma": [..m..], "weights": [..K..], "frozen_through": <int>,
//   "components": [ {"mu": [..m..], "beta": [[..r..] x m rows], "d": [..m..]} ]
// }
std::string state_to_json(const CmgvaState& state, int indent = 2);
CmgvaState state_from_json(const std::string& text);

void save_state(const CmgvaState& state, const std::string& path);
CmgvaState load_state(const std::string& path);

}  // namespace cmgva
