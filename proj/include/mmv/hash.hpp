#pragma once

#include <string>
#include <string_view>

#include "mmv/measure.hpp"

namespace mmv {

std::string sha1_hex(std::string_view bytes);

// Hash git assigns to a blob with this content.
std::string git_blob_sha1(std::string_view content);

// Short content hash of a measure's CSV serialization.
std::string measure_hash(const EmpiricalMeasure& mu);

}  // namespace mmv
