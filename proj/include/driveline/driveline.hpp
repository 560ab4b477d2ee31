#pragma once

#include <string_view>

#include "driveline/analysis.hpp"
#include "driveline/cascade_control.hpp"
#include "driveline/config.hpp"
#include "driveline/controllers.hpp"
#include "driveline/errors.hpp"
#include "driveline/frames.hpp"
#include "driveline/matching_control.hpp"
#include "driveline/plant.hpp"
#include "driveline/pll.hpp"
#include "driveline/presets.hpp"
#include "driveline/scenario.hpp"
#include "driveline/simulation.hpp"

namespace driveline {
inline constexpr std::string_view kVersion = "0.1.0";
}
