// Checkpoint container: parameter path strings mapped to (shape, float64
// little-endian data), plus a JSON shape manifest next to it for
// inspection. Byte-identical for identical parameter values.
#pragma once

#include <string>

#include "gabornet/nn.hpp"

namespace gabornet {
namespace checkpoint {

void save(const std::string& path, const nn::ParamRegistry& reg);

// Strict: every registered path must be present with a matching shape, and
// the file may not carry entries the registry does not know.
void load_into(const std::string& path, const nn::ParamRegistry& reg);

}  // namespace checkpoint
}  // namespace gabornet
