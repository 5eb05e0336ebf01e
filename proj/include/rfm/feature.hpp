#pragma once

#include <Eigen/Dense>
#include <string>
#include <string_view>

#include "rfm/error.hpp"

namespace rfm {

enum class Backend { rl, hm };

inline std::string to_string(Backend b) { return b == Backend::rl ? "rl" : "hm"; }

inline Backend backend_from_string(std::string_view s) {
  if (s == "rl") return Backend::rl;
  if (s == "hm") return Backend::hm;
  throw InvalidArgument("unknown backend '" + std::string(s) + "' (expected rl or hm)");
}

/// Ordered eigenvalue descriptor of one point cloud.
struct FeatureVector {
  Eigen::VectorXd values;
  Backend backend = Backend::rl;

  std::size_t size() const { return static_cast<std::size_t>(values.size()); }
  double operator[](std::size_t i) const { return values[static_cast<Eigen::Index>(i)]; }
};

}  // namespace rfm
