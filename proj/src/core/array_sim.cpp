#include "core/array_sim.hpp"

#include <algorithm>
#include <cmath>

namespace msce {

using nlohmann::json;

void MicGeometry::validate() const {
    if (distances_m.empty()) fail_invalid("geometry needs at least one microphone");
    for (double d : distances_m)
        if (!(d > 0.0)) fail_invalid("microphone distances must be positive");
    if (!(speed_of_sound > 0.0)) fail_invalid("speed of sound must be positive");
}

json MicGeometry::to_json() const {
    json mics = json::array();
    for (std::size_t i = 0; i < distances_m.size(); ++i)
        mics.push_back(json{{"mic_id", static_cast<int>(i) + 1}, {"distance_m", distances_m[i]}});
    return json{{"speed_of_sound", speed_of_sound}, {"microphones", mics}};
}

MicGeometry MicGeometry::from_json(const json& j) {
    MicGeometry g;
    if (!j.is_object()) fail_data("geometry must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        if (key == "speed_of_sound") g.speed_of_sound = value.get<double>();
        else if (key == "microphones") {
            if (!value.is_array()) fail_data("geometry microphones must be an array");
            g.distances_m.assign(value.size(), 0.0);
            std::vector<bool> seen(value.size(), false);
            for (const auto& mic : value) {
                if (!mic.is_object() || !mic.contains("mic_id") || !mic.contains("distance_m"))
                    fail_data("each microphone needs mic_id and distance_m");
                const int id = mic.at("mic_id").get<int>();
                if (id < 1 || id > static_cast<int>(value.size()))
                    fail_data("mic_id out of range: " + std::to_string(id));
                if (seen[id - 1]) fail_data("duplicate mic_id: " + std::to_string(id));
                seen[id - 1] = true;
                g.distances_m[id - 1] = mic.at("distance_m").get<double>();
            }
        } else fail_data("unknown geometry key: " + key);
    }
    g.validate();
    return g;
}

MicGeometry default_geometry() {
    MicGeometry g;
    g.distances_m = {1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.5};
    return g;
}

Audio simulate_array(const Audio& source, const MicGeometry& geometry) {
    source.check_consistent();
    geometry.validate();
    if (source.num_channels() != 1) fail_invalid("simulate_array expects a mono source");

    const auto& x = source.channels[0];
    const long long n = source.length();
    const double fs = source.sample_rate;
    const double nearest = *std::min_element(geometry.distances_m.begin(), geometry.distances_m.end());

    double max_delay = 0.0;
    for (double d : geometry.distances_m)
        max_delay = std::max(max_delay, d / geometry.speed_of_sound * fs);
    const long long out_len = n + static_cast<long long>(std::ceil(max_delay));

    Audio out;
    out.sample_rate = source.sample_rate;
    out.channels.assign(geometry.distances_m.size(), std::vector<float>(out_len, 0.0f));
    for (std::size_t m = 0; m < geometry.distances_m.size(); ++m) {
        const double delay = geometry.distances_m[m] / geometry.speed_of_sound * fs;
        const double gain = nearest / geometry.distances_m[m];
        auto& y = out.channels[m];
        for (long long t = 0; t < out_len; ++t) {
            const double s = static_cast<double>(t) - delay;
            const double i0 = std::floor(s);
            const double frac = s - i0;
            const long long lo = static_cast<long long>(i0);
            const double a = (lo >= 0 && lo < n) ? x[lo] : 0.0;
            const double b = (lo + 1 >= 0 && lo + 1 < n) ? x[lo + 1] : 0.0;
            y[t] = static_cast<float>(gain * ((1.0 - frac) * a + frac * b));
        }
    }
    return out;
}

}  // namespace msce
