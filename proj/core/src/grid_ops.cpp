#include "physr/grid_ops.hpp"

#include <algorithm>

#include "physr/error.hpp"

namespace physr::data {

std::vector<std::string> derivative_suffixes(int order) {
    if (order <= 0) return {};
    if (order == 1) return {"x", "y"};
    if (order == 2) return {"x", "y", "xx", "xy", "yy"};
    throw ArgumentError("spatial derivatives are available up to order 2");
}

std::vector<std::string> derivative_names(const std::vector<std::string>& states, int order) {
    std::vector<std::string> out;
    for (const auto& s : states) {
        for (const auto& suffix : derivative_suffixes(order)) out.push_back(s + "_" + suffix);
    }
    return out;
}

std::optional<std::pair<std::string, std::string>> split_derivative_name(const std::string& name,
                                                                         const std::vector<std::string>& states) {
    const auto all = derivative_suffixes(2);
    for (const auto& s : states) {
        if (name.size() <= s.size() + 1 || name.compare(0, s.size(), s) != 0 || name[s.size()] != '_') continue;
        std::string suffix = name.substr(s.size() + 1);
        if (std::find(all.begin(), all.end(), suffix) != all.end()) return std::make_pair(s, suffix);
    }
    return std::nullopt;
}

Eigen::MatrixXd spatial_derivatives(const Eigen::MatrixXd& fields, const Grid& grid, int order) {
    const int nx = grid.nx;
    const int ny = grid.ny;
    if (fields.rows() != static_cast<Eigen::Index>(nx) * ny)
        throw DataError("field size does not match the grid");
    const auto suffixes = derivative_suffixes(order);
    const auto k = static_cast<Eigen::Index>(suffixes.size());
    Eigen::MatrixXd out(fields.rows(), fields.cols() * k);
    const double dx = grid.dx();
    const double dy = grid.dy();
    auto at = [nx, ny](int i, int j) { return static_cast<Eigen::Index>(((j + ny) % ny) * nx + (i + nx) % nx); };

    for (Eigen::Index s = 0; s < fields.cols(); ++s) {
        const auto f = fields.col(s);
        for (int j = 0; j < ny; ++j) {
            for (int i = 0; i < nx; ++i) {
                const Eigen::Index p = at(i, j);
                const double c = f(p);
                const double e = f(at(i + 1, j));
                const double w = f(at(i - 1, j));
                const double n = f(at(i, j + 1));
                const double so = f(at(i, j - 1));
                out(p, s * k + 0) = (e - w) / (2.0 * dx);
                out(p, s * k + 1) = (n - so) / (2.0 * dy);
                if (k > 2) {
                    out(p, s * k + 2) = (e - 2.0 * c + w) / (dx * dx);
                    out(p, s * k + 3) =
                        (f(at(i + 1, j + 1)) - f(at(i + 1, j - 1)) - f(at(i - 1, j + 1)) + f(at(i - 1, j - 1))) /
                        (4.0 * dx * dy);
                    out(p, s * k + 4) = (n - 2.0 * c + so) / (dy * dy);
                }
            }
        }
    }
    return out;
}

} // namespace physr::data
