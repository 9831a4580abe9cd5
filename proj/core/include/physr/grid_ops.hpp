#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "physr/bundle.hpp"

namespace physr::data {

/// {"x","y"} for order 1; {"x","y","xx","xy","yy"} for order 2.
std::vector<std::string> derivative_suffixes(int order);

/// State-major derivative column names: u_x, u_y, u_xx, ..., v_x, ...
std::vector<std::string> derivative_names(const std::vector<std::string>& states, int order);

/// Split "u_xx" into ("u", "xx") when `u` is one of `states` and the suffix is
/// a spatial derivative.
std::optional<std::pair<std::string, std::string>> split_derivative_name(const std::string& name,
                                                                         const std::vector<std::string>& states);

/// Second-order central differences on a periodic grid. `fields` is
/// points x q in grid order (index = j*nx + i); the result is
/// points x (q * suffixes) in derivative_names() order.
Eigen::MatrixXd spatial_derivatives(const Eigen::MatrixXd& fields, const Grid& grid, int order);

} // namespace physr::data
