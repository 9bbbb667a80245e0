#include "failcast/types.hpp"

#include <cmath>

namespace failcast {

bool is_failure(double risk, const RiskSpec& spec) {
  if (!std::isfinite(risk)) throw std::invalid_argument("is_failure: risk must be finite");
  return spec.normalize(risk) > spec.normalized_threshold();
}

std::string to_string(RiskLabel label) {
  switch (label) {
    case RiskLabel::FailF: return "FailF";
    case RiskLabel::NoiseFail: return "NoiseFail";
    case RiskLabel::Safe: return "Safe";
  }
  return "Safe";
}

RiskLabel risk_label_from_string(const std::string& s) {
  if (s == "FailF") return RiskLabel::FailF;
  if (s == "NoiseFail") return RiskLabel::NoiseFail;
  if (s == "Safe") return RiskLabel::Safe;
  throw std::invalid_argument("unknown risk label: " + s);
}

}  // namespace failcast
