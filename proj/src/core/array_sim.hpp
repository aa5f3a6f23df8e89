#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "core/wav.hpp"

namespace msce {

// Circular-array capture model: each microphone hears the source delayed by
// distance/speed-of-sound and attenuated by nearest_distance/distance. No
// reverberation; distances are the whole geometry.
struct MicGeometry {
    std::vector<double> distances_m;
    double speed_of_sound = 343.0;

    void validate() const;
    nlohmann::json to_json() const;
    static MicGeometry from_json(const nlohmann::json& j);
};

// Six microphones on a 1.0 m ring plus a seventh at 1.5 m.
MicGeometry default_geometry();

// Mono source -> N channels, fractional delays by linear interpolation,
// common length = source length + ceil(max delay).
Audio simulate_array(const Audio& source, const MicGeometry& geometry);

}  // namespace msce
