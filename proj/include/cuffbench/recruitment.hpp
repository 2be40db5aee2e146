#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "cuffbench/electrode.hpp"

namespace cuffbench {

/// Muscle label. The four forelimb muscles have canonical names; any other
/// non-empty label is accepted.
using MuscleId = std::string;

namespace muscles {
inline const MuscleId FCR = "FCR";  // flexor carpi radialis
inline const MuscleId FDS = "FDS";  // flexor digitorum superficialis
inline const MuscleId PT = "PT";    // pronator teres
inline const MuscleId ECR = "ECR";  // extensor carpi radialis
}  // namespace muscles

enum class NormalizationScope { PerMuscle, Global };

std::string_view to_string(NormalizationScope scope);
/// Accepts "per-muscle"/"per_muscle" and "global"; throws DomainError otherwise.
NormalizationScope parse_scope(std::string_view text);

struct RecruitmentPoint {
  double amplitude_ua = 0.0;
  double mean_p2p_uv = 0.0;
  double normalized = 0.0;
};

struct RecruitmentCurve {
  MuscleId muscle;
  StimConfig config;
  std::vector<RecruitmentPoint> points;  // strictly increasing amplitude
  NormalizationScope scope = NormalizationScope::PerMuscle;
  bool normalizable = true;  // false when the whole scope had zero response
};

}  // namespace cuffbench
