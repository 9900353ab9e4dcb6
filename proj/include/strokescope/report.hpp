#pragma once

#include <optional>
#include <string>

#include <json.hpp>

#include "strokescope/applications.hpp"
#include "strokescope/attribution.hpp"
#include "strokescope/image_io.hpp"

namespace strokescope {

// JSON views of engine results. Field order is fixed so that dumps are
// byte-reproducible.
nlohmann::json corr_json(const CorrReport& corr);
nlohmann::json attribution_json(const AttributionResult& result, const VectorSketch& sketch,
                                const std::optional<CorrReport>& corr = std::nullopt);
nlohmann::json filter_json(const FilterReport& report);
nlohmann::json attack_json(const AttackOutcome& outcome, AttackMode mode, int epsilon);
nlohmann::json reliability_json(const ReliabilityReport& report);
nlohmann::json sketch_json(const VectorSketch& sketch);

// Strokes coloured on a blue-grey-red scale by score / max |score|; a
// point-level result adds one dot per point on the same scale.
std::string overlay_svg(const VectorSketch& sketch, const AttributionResult& result);

Bytes heatmap_png(const Grid& pixel_grad);

} // namespace strokescope
