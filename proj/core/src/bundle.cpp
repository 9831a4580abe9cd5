#include "physr/bundle.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "physr/error.hpp"
#include "physr/grid_ops.hpp"
#include "physr/rng.hpp"

namespace physr::data {

using nlohmann::json;

std::string_view to_string(SystemKind kind) noexcept {
    switch (kind) {
    case SystemKind::Ode: return "ode";
    case SystemKind::Pde: return "pde";
    case SystemKind::Tabular: return "tabular";
    }
    return "tabular";
}

std::string_view to_string(Role role) noexcept {
    switch (role) {
    case Role::Feature: return "feature";
    case Role::Target: return "target";
    case Role::Coordinate: return "coordinate";
    }
    return "feature";
}

SystemKind system_kind_from(std::string_view s) {
    if (s == "ode") return SystemKind::Ode;
    if (s == "pde") return SystemKind::Pde;
    if (s == "tabular") return SystemKind::Tabular;
    throw DataError(fmt::format("unknown system kind '{}'", s));
}

Role role_from(std::string_view s) {
    if (s == "feature") return Role::Feature;
    if (s == "target") return Role::Target;
    if (s == "coordinate") return Role::Coordinate;
    throw DataError(fmt::format("unknown column role '{}'", s));
}

// ---------------------------------------------------------------------------

DatasetBundle::DatasetBundle(std::vector<Column> columns, Eigen::MatrixXd values, BundleMeta meta)
    : columns_(std::move(columns)), values_(std::move(values)), meta_(std::move(meta)) {
    if (static_cast<Eigen::Index>(columns_.size()) != values_.cols())
        throw DataError(fmt::format("bundle has {} columns but {} declared", values_.cols(), columns_.size()));
    std::set<std::string> seen;
    for (const auto& c : columns_) {
        if (c.name.empty()) throw DataError("column names must be nonempty");
        if (!seen.insert(c.name).second) throw DataError("duplicate column '" + c.name + "'");
    }
    if (meta_.kind != SystemKind::Tabular) {
        for (const char* required : {"traj_id", "t"}) {
            if (!seen.contains(required)) throw DataError(fmt::format("{} data needs a '{}' column", to_string(meta_.kind), required));
        }
    }
    if (meta_.kind == SystemKind::Pde) {
        if (!seen.contains("x") || !seen.contains("y")) throw DataError("pde data needs 'x' and 'y' columns");
        if (!meta_.grid) throw DataError("pde data needs grid metadata");
    }
}

std::optional<int> DatasetBundle::find(std::string_view name) const noexcept {
    for (std::size_t i = 0; i < columns_.size(); ++i) {
        if (columns_[i].name == name) return static_cast<int>(i);
    }
    return std::nullopt;
}

int DatasetBundle::index_of(std::string_view name) const {
    if (auto i = find(name)) return *i;
    throw DataError(fmt::format("missing column '{}'", name));
}

void DatasetBundle::set_column(std::string_view name, const Eigen::VectorXd& v) {
    if (v.size() != rows()) throw DataError("column length mismatch");
    values_.col(index_of(name)) = v;
}

std::vector<std::string> DatasetBundle::names(Role role) const {
    std::vector<std::string> out;
    for (const auto& c : columns_) {
        if (c.role == role) out.push_back(c.name);
    }
    return out;
}

std::vector<std::string> DatasetBundle::all_names() const {
    std::vector<std::string> out;
    for (const auto& c : columns_) out.push_back(c.name);
    return out;
}

std::vector<std::string> DatasetBundle::state_names() const {
    std::vector<std::string> out;
    for (const auto& t : target_names()) {
        if (t.size() > 2 && t.ends_with("_t")) {
            std::string s = t.substr(0, t.size() - 2);
            if (auto i = find(s); i && columns_[static_cast<std::size_t>(*i)].role == Role::Feature) out.push_back(s);
        }
    }
    return out;
}

Eigen::MatrixXd DatasetBundle::matrix(const std::vector<std::string>& names) const {
    Eigen::MatrixXd out(rows(), static_cast<Eigen::Index>(names.size()));
    for (std::size_t k = 0; k < names.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = values_.col(index_of(names[k]));
    return out;
}

DatasetBundle DatasetBundle::select_rows(const std::vector<Eigen::Index>& rows) const {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), values_.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = values_.row(rows[r]);
    return DatasetBundle(columns_, std::move(out), meta_);
}

namespace {
std::vector<double> distinct(const Eigen::VectorXd& v) {
    std::vector<double> out(v.data(), v.data() + v.size());
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}
} // namespace

std::vector<double> DatasetBundle::trajectory_ids() const { return distinct(column("traj_id")); }
std::vector<double> DatasetBundle::times() const { return distinct(column("t")); }

// ---------------------------------------------------------------------------
// Noise and central differences

namespace {

double population_std(const Eigen::VectorXd& v) {
    if (v.size() == 0) return 0.0;
    const double mean = v.mean();
    return std::sqrt((v.array() - mean).square().mean());
}

// Rows sharing (traj_id, spatial coordinates), each sorted by time.
std::vector<std::vector<Eigen::Index>> time_series(const DatasetBundle& b) {
    const Eigen::VectorXd traj = b.column("traj_id");
    const Eigen::VectorXd t = b.column("t");
    std::optional<Eigen::VectorXd> xs;
    std::optional<Eigen::VectorXd> ys;
    if (b.meta().kind == SystemKind::Pde) {
        xs = b.column("x");
        ys = b.column("y");
    }
    std::map<std::array<double, 3>, std::vector<Eigen::Index>> groups;
    for (Eigen::Index r = 0; r < b.rows(); ++r) {
        std::array<double, 3> key{traj(r), xs ? (*xs)(r) : 0.0, ys ? (*ys)(r) : 0.0};
        groups[key].push_back(r);
    }
    std::vector<std::vector<Eigen::Index>> out;
    out.reserve(groups.size());
    for (auto& [key, rows] : groups) {
        std::stable_sort(rows.begin(), rows.end(), [&](Eigen::Index a, Eigen::Index c) { return t(a) < t(c); });
        out.push_back(std::move(rows));
    }
    return out;
}

void recompute_spatial_features(DatasetBundle& b) {
    const auto states = b.state_names();
    const Grid grid = *b.meta().grid;
    std::vector<std::pair<int, int>> targets; // (bundle column, derivative column)
    for (int order : {2, 1}) {
        const auto names = derivative_names(states, order);
        targets.clear();
        for (std::size_t k = 0; k < names.size(); ++k) {
            if (auto c = b.find(names[k])) targets.emplace_back(*c, static_cast<int>(k));
        }
        if (targets.empty()) continue;
        const Eigen::VectorXd traj = b.column("traj_id");
        const Eigen::VectorXd t = b.column("t");
        const Eigen::VectorXd xs = b.column("x");
        const Eigen::VectorXd ys = b.column("y");
        std::map<std::pair<double, double>, std::vector<Eigen::Index>> slices;
        for (Eigen::Index r = 0; r < b.rows(); ++r) slices[{traj(r), t(r)}].push_back(r);
        Eigen::MatrixXd values = b.values();
        const auto state_cols = [&] {
            std::vector<int> c;
            for (const auto& s : states) c.push_back(b.index_of(s));
            return c;
        }();
        for (const auto& [key, rows] : slices) {
            if (static_cast<int>(rows.size()) != grid.points())
                throw DataError("time slice does not cover the full grid");
            Eigen::MatrixXd fields(grid.points(), static_cast<Eigen::Index>(states.size()));
            std::vector<Eigen::Index> index_of_point(static_cast<std::size_t>(grid.points()));
            for (Eigen::Index r : rows) {
                const int i = static_cast<int>(std::lround((xs(r) - grid.lo) / grid.dx()));
                const int j = static_cast<int>(std::lround((ys(r) - grid.lo) / grid.dy()));
                const Eigen::Index p = static_cast<Eigen::Index>(((j % grid.ny) + grid.ny) % grid.ny) * grid.nx +
                                       ((i % grid.nx) + grid.nx) % grid.nx;
                index_of_point[static_cast<std::size_t>(p)] = r;
                for (std::size_t s = 0; s < states.size(); ++s)
                    fields(p, static_cast<Eigen::Index>(s)) = values(r, state_cols[s]);
            }
            const Eigen::MatrixXd d = spatial_derivatives(fields, grid, order);
            for (Eigen::Index p = 0; p < grid.points(); ++p) {
                for (auto [col, k] : targets) values(index_of_point[static_cast<std::size_t>(p)], col) = d(p, k);
            }
        }
        b = DatasetBundle(b.columns(), std::move(values), b.meta());
        return;
    }
}

} // namespace

DatasetBundle add_noise_and_difference(const DatasetBundle& bundle, const NoiseSpec& noise) {
    if (noise.level < 0.0) throw ArgumentError("noise level must be non-negative");
    if (bundle.meta().kind == SystemKind::Tabular) throw DataError("noise and differencing need trajectory data");
    const auto states = bundle.state_names();
    if (states.empty()) throw DataError("bundle has no state/target column pairs");

    DatasetBundle noisy = bundle;
    Rng rng(noise.seed);
    for (const auto& s : states) {
        Eigen::VectorXd col = noisy.column(s);
        const double sigma = noise.level * population_std(col);
        if (sigma > 0.0) {
            for (Eigen::Index r = 0; r < col.size(); ++r) col(r) += sigma * rng.normal();
        }
        noisy.set_column(s, col);
    }
    if (bundle.meta().kind == SystemKind::Pde) recompute_spatial_features(noisy);

    const auto series = time_series(noisy);
    const Eigen::VectorXd t = noisy.column("t");
    std::vector<Eigen::Index> keep;
    for (const auto& rows : series) {
        if (rows.size() < 3) throw DataError("too-short trajectory: central differences need at least 3 timesteps");
        for (const auto& s : states) {
            const Eigen::VectorXd x = noisy.column(s);
            Eigen::VectorXd target = noisy.column(s + "_t");
            for (std::size_t k = 1; k + 1 < rows.size(); ++k) {
                const Eigen::Index prev = rows[k - 1];
                const Eigen::Index next = rows[k + 1];
                target(rows[k]) = (x(next) - x(prev)) / (t(next) - t(prev));
            }
            noisy.set_column(s + "_t", target);
        }
        keep.insert(keep.end(), rows.begin() + 1, rows.end() - 1);
    }
    std::sort(keep.begin(), keep.end());
    DatasetBundle out = noisy.select_rows(keep);
    out.meta().noise_level = noise.level;
    out.meta().seed = noise.seed;
    return out;
}

// ---------------------------------------------------------------------------
// Splitting

std::pair<DatasetBundle, DatasetBundle> split(const DatasetBundle& bundle, const SplitPolicy& policy) {
    if (!(policy.fraction > 0.0 && policy.fraction < 1.0)) throw ArgumentError("split fraction must lie in (0, 1)");
    const bool by_traj = policy.kind == SplitPolicy::Kind::ByTrajectory;
    const std::vector<double> keys = by_traj ? bundle.trajectory_ids() : bundle.times();
    if (keys.size() < 2) throw DataError("need at least two trajectories/times to split");
    auto n_train = static_cast<std::size_t>(std::llround(policy.fraction * static_cast<double>(keys.size())));
    n_train = std::clamp<std::size_t>(n_train, 1, keys.size() - 1);
    const double cutoff = keys[n_train - 1];

    const Eigen::VectorXd key_col = bundle.column(by_traj ? "traj_id" : "t");
    std::vector<Eigen::Index> train_rows;
    std::vector<Eigen::Index> test_rows;
    for (Eigen::Index r = 0; r < bundle.rows(); ++r) (key_col(r) <= cutoff ? train_rows : test_rows).push_back(r);

    DatasetBundle train = bundle.select_rows(train_rows);
    DatasetBundle test = bundle.select_rows(test_rows);
    const std::string name = by_traj ? "trajectory" : "time";
    train.meta().split = SplitInfo{name, policy.fraction, "train"};
    test.meta().split = SplitInfo{name, policy.fraction, "test"};
    return {std::move(train), std::move(test)};
}

// ---------------------------------------------------------------------------
// Storage

namespace {

json meta_to_json(const DatasetBundle& b) {
    const BundleMeta& m = b.meta();
    json vars = json::array();
    for (const auto& c : b.columns()) {
        json v{{"name", c.name}, {"role", std::string(to_string(c.role))}};
        if (c.unit) v["unit"] = *c.unit;
        vars.push_back(std::move(v));
    }
    json j{{"name", m.name},
           {"kind", std::string(to_string(m.kind))},
           {"variables", vars},
           {"dt", m.dt},
           {"noise_level", m.noise_level},
           {"seed", m.seed},
           {"grid", nullptr},
           {"split", nullptr}};
    if (m.grid) j["grid"] = json{{"nx", m.grid->nx}, {"ny", m.grid->ny}, {"extent", {m.grid->lo, m.grid->hi}}};
    if (m.split) j["split"] = json{{"policy", m.split->policy}, {"fraction", m.split->fraction}, {"part", m.split->part}};
    return j;
}

std::pair<std::vector<Column>, BundleMeta> meta_from_json(const json& j) {
    try {
        std::vector<Column> cols;
        for (const auto& v : j.at("variables")) {
            Column c;
            c.name = v.at("name").get<std::string>();
            c.role = role_from(v.value("role", std::string("feature")));
            if (v.contains("unit") && !v["unit"].is_null()) c.unit = v["unit"].get<std::string>();
            cols.push_back(std::move(c));
        }
        BundleMeta m;
        m.name = j.value("name", std::string());
        m.kind = system_kind_from(j.value("kind", std::string("tabular")));
        m.dt = j.value("dt", 0.0);
        m.noise_level = j.value("noise_level", 0.0);
        m.seed = j.value("seed", std::uint64_t{0});
        if (j.contains("grid") && !j["grid"].is_null()) {
            const auto& g = j["grid"];
            Grid grid;
            grid.nx = g.at("nx");
            grid.ny = g.at("ny");
            grid.lo = g.at("extent").at(0);
            grid.hi = g.at("extent").at(1);
            m.grid = grid;
        }
        if (j.contains("split") && !j["split"].is_null()) {
            const auto& s = j["split"];
            m.split = SplitInfo{s.at("policy"), s.at("fraction"), s.at("part")};
        }
        return {std::move(cols), std::move(m)};
    } catch (const json::exception& ex) {
        throw DataError(std::string("malformed manifest: ") + ex.what());
    }
}

std::vector<std::string_view> split_csv_line(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const std::size_t comma = line.find(',', start);
        out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '"')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '"' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

double parse_double(std::string_view s, std::size_t line) {
    s = trim(s);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw DataError(fmt::format("data.csv line {}: cannot parse '{}' as a number", line, s));
    return v;
}

} // namespace

void save(const DatasetBundle& bundle, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream meta(dir / "meta.json");
        if (!meta) throw DataError("cannot write " + (dir / "meta.json").string());
        meta << meta_to_json(bundle).dump(2) << '\n';
    }
    std::ofstream csv(dir / "data.csv");
    if (!csv) throw DataError("cannot write " + (dir / "data.csv").string());
    const auto& cols = bundle.columns();
    for (std::size_t c = 0; c < cols.size(); ++c) csv << (c ? "," : "") << cols[c].name;
    csv << '\n';
    std::string line;
    const Eigen::MatrixXd& v = bundle.values();
    for (Eigen::Index r = 0; r < v.rows(); ++r) {
        line.clear();
        for (Eigen::Index c = 0; c < v.cols(); ++c) {
            if (c) line += ',';
            // Shortest round-trip representation keeps save/load bit-exact.
            char buf[32];
            auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v(r, c));
            line.append(buf, ptr);
        }
        csv << line << '\n';
    }
}

DatasetBundle load(const std::filesystem::path& path) {
    namespace fs = std::filesystem;
    fs::path manifest;
    fs::path data;
    if (fs::is_directory(path)) {
        manifest = path / "meta.json";
        data = path / "data.csv";
    } else {
        data = path;
        manifest = path.parent_path() / (path.stem().string() + ".meta.json");
        if (!fs::exists(manifest)) manifest = path.parent_path() / "meta.json";
    }
    if (!fs::exists(manifest)) throw DataError("missing manifest for " + path.string());
    if (!fs::exists(data)) throw DataError("missing data file " + data.string());

    json j;
    {
        std::ifstream in(manifest);
        try {
            j = json::parse(in);
        } catch (const json::exception& ex) {
            throw DataError(std::string("malformed manifest: ") + ex.what());
        }
    }
    auto [columns, meta] = meta_from_json(j);

    std::ifstream in(data);
    std::string header;
    if (!std::getline(in, header)) throw DataError("data.csv is empty");
    const auto head = split_csv_line(header);
    std::vector<int> source;
    for (const auto& c : columns) {
        auto it = std::find_if(head.begin(), head.end(), [&](std::string_view h) { return trim(h) == c.name; });
        if (it == head.end()) throw DataError(fmt::format("manifest column '{}' not found in data.csv", c.name));
        source.push_back(static_cast<int>(it - head.begin()));
    }

    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != head.size())
            throw DataError(fmt::format("data.csv line {}: expected {} fields, found {}", line_no, head.size(),
                                        fields.size()));
        std::vector<double> row;
        row.reserve(source.size());
        for (int s : source) row.push_back(parse_double(fields[static_cast<std::size_t>(s)], line_no));
        rows.push_back(std::move(row));
    }
    Eigen::MatrixXd values(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(columns.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t c = 0; c < columns.size(); ++c)
            values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    }
    return DatasetBundle(std::move(columns), std::move(values), std::move(meta));
}

} // namespace physr::data
