#pragma once

#include <cstdint>

namespace rada {

enum class Domain : std::uint8_t { Source, Target };

constexpr char domain_tag(Domain d) { return d == Domain::Source ? 's' : 't'; }

}  // namespace rada
