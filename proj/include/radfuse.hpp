#pragma once

#include "radfuse/adamw.hpp"
#include "radfuse/amplifier.hpp"
#include "radfuse/array_api.hpp"
#include "radfuse/bundle.hpp"
#include "radfuse/config_io.hpp"
#include "radfuse/densifier.hpp"
#include "radfuse/error.hpp"
#include "radfuse/fusion.hpp"
#include "radfuse/grid.hpp"
#include "radfuse/io.hpp"
#include "radfuse/nn.hpp"
#include "radfuse/occupancy.hpp"
#include "radfuse/pillar.hpp"
#include "radfuse/pipeline.hpp"
#include "radfuse/rng.hpp"
#include "radfuse/synth.hpp"
#include "radfuse/tensor.hpp"

namespace radfuse {
inline constexpr const char* kVersion = "0.1.0";
}
