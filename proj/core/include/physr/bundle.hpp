#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace physr::data {

enum class SystemKind { Ode, Pde, Tabular };
enum class Role { Feature, Target, Coordinate };

std::string_view to_string(SystemKind kind) noexcept;
std::string_view to_string(Role role) noexcept;
SystemKind system_kind_from(std::string_view s);
Role role_from(std::string_view s);

struct Column {
    std::string name;
    Role role = Role::Feature;
    std::optional<std::string> unit;
};

/// Periodic square grid: points at lo + i*(hi-lo)/n, i = 0..n-1.
struct Grid {
    int nx = 32;
    int ny = 32;
    double lo = -10.0;
    double hi = 10.0;

    double dx() const noexcept { return (hi - lo) / nx; }
    double dy() const noexcept { return (hi - lo) / ny; }
    int points() const noexcept { return nx * ny; }
};

struct SplitInfo {
    std::string policy; // "trajectory" or "time"
    double fraction = 0.8;
    std::string part;   // "train" or "test"
};

struct BundleMeta {
    std::string name;
    SystemKind kind = SystemKind::Tabular;
    double dt = 0.0;
    double noise_level = 0.0;
    std::uint64_t seed = 0;
    std::optional<Grid> grid;
    std::optional<SplitInfo> split;
};

/// Column-major sample table plus metadata. Row order for simulated data is
/// (traj_id, t, grid index).
///
/// Column conventions: `traj_id` and `t` are coordinates; PDE bundles add
/// `x`, `y`. A target named `<s>_t` is the time derivative of feature `<s>`;
/// such features are the state variables. Other features (e.g. `u_xx`) are
/// derived quantities.
class DatasetBundle {
public:
    DatasetBundle() = default;
    /// Validates unique nonempty names, matching shapes, and the required
    /// coordinate columns for ODE/PDE data.
    DatasetBundle(std::vector<Column> columns, Eigen::MatrixXd values, BundleMeta meta);

    const std::vector<Column>& columns() const noexcept { return columns_; }
    const Eigen::MatrixXd& values() const noexcept { return values_; }
    const BundleMeta& meta() const noexcept { return meta_; }
    BundleMeta& meta() noexcept { return meta_; }
    Eigen::Index rows() const noexcept { return values_.rows(); }
    bool empty() const noexcept { return values_.rows() == 0; }

    std::optional<int> find(std::string_view name) const noexcept;
    int index_of(std::string_view name) const;
    Eigen::VectorXd column(std::string_view name) const { return values_.col(index_of(name)); }
    void set_column(std::string_view name, const Eigen::VectorXd& v);

    std::vector<std::string> names(Role role) const;
    std::vector<std::string> feature_names() const { return names(Role::Feature); }
    std::vector<std::string> target_names() const { return names(Role::Target); }
    std::vector<std::string> all_names() const;
    /// Features with a matching `<s>_t` target, in target order.
    std::vector<std::string> state_names() const;

    /// Gather the named columns into a rows x names.size() matrix.
    Eigen::MatrixXd matrix(const std::vector<std::string>& names) const;
    DatasetBundle select_rows(const std::vector<Eigen::Index>& rows) const;

    /// Distinct trajectory ids / times in ascending order.
    std::vector<double> trajectory_ids() const;
    std::vector<double> times() const;

private:
    std::vector<Column> columns_;
    Eigen::MatrixXd values_;
    BundleMeta meta_;
};

struct NoiseSpec {
    double level = 0.0; // sigma_R
    std::uint64_t seed = 0;
};

/// Perturb every state by N(0, (level*std(state))^2), re-estimate the targets
/// by central differences in time, recompute spatial-derivative features from
/// the noisy fields (PDE), and drop the first and last time of every series.
DatasetBundle add_noise_and_difference(const DatasetBundle& bundle, const NoiseSpec& noise);

struct SplitPolicy {
    enum class Kind { ByTrajectory, ByTimePrefix };
    Kind kind = Kind::ByTrajectory;
    double fraction = 0.8;
};

/// Disjoint train/test cover of the rows.
std::pair<DatasetBundle, DatasetBundle> split(const DatasetBundle& bundle, const SplitPolicy& policy);

/// Directory bundle: meta.json + data.csv.
void save(const DatasetBundle& bundle, const std::filesystem::path& dir);

/// Load a bundle directory, or a CSV file with a sidecar manifest
/// (`<stem>.meta.json` or `meta.json` next to it). Only manifest columns are kept.
DatasetBundle load(const std::filesystem::path& path);

} // namespace physr::data
