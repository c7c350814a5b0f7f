#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace mgrid {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using RowVec3 = Eigen::RowVector3d;

/// Raised when a scenario or a parameter set is structurally invalid.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when the integration produces a non-finite state.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// State component indices of a DGU: PCC voltage, terminal current,
/// integrator state.
enum Component : int { kVoltage = 0, kCurrent = 1, kIntegrator = 2 };

inline const char* component_name(int k) {
  switch (k) {
    case kVoltage: return "V";
    case kCurrent: return "I_t";
    case kIntegrator: return "v";
  }
  return "?";
}

}  // namespace mgrid
