#include "covmap/grid.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

#include "covmap/errors.hpp"
#include "csv_util.hpp"

namespace covmap::geo {

Grid::Grid(GridParams params, std::vector<bool> land_mask)
    : params_(params), land_mask_(std::move(land_mask)) {
    if (params_.n_cols < 1 || params_.n_rows < 1)
        throw std::invalid_argument("grid needs at least one row and one column");
    if (!(params_.cell_size_km > 0.0)) throw std::invalid_argument("cell size must be positive");
    const auto n = static_cast<std::size_t>(params_.n_cols) * params_.n_rows;
    if (land_mask_.size() != n) throw std::invalid_argument("land mask size does not match grid");
    land_ordinal_.assign(n, -1);
    for (std::size_t c = 0; c < n; ++c) {
        if (!land_mask_[c]) continue;
        land_ordinal_[c] = static_cast<long>(land_cells_.size());
        land_cells_.push_back(c);
    }
}

bool Grid::same_geometry(const Grid& other) const {
    return params_.n_cols == other.params_.n_cols && params_.n_rows == other.params_.n_rows &&
           params_.cell_size_km == other.params_.cell_size_km &&
           params_.origin_x_km == other.params_.origin_x_km &&
           params_.origin_y_km == other.params_.origin_y_km && land_mask_ == other.land_mask_;
}

int Territory::find(const std::string& id) const {
    const auto it = index_.find(id);
    return it == index_.end() ? -1 : it->second;
}

Territory build_grid(const GridParams& params, std::span<const MembershipRow> membership,
                     std::span<const PopulationRow> populations) {
    if (params.n_cols < 1 || params.n_rows < 1 || !(params.cell_size_km > 0.0))
        throw DataError("invalid grid parameters");

    Territory t;
    for (const auto& p : populations) {
        if (p.population < 1) throw DataError("municipality " + p.id + " has population < 1");
        if (!t.index_.emplace(p.id, static_cast<int>(t.municipalities.size())).second)
            throw DataError("duplicate municipality id " + p.id);
        Municipality m;
        m.id = p.id;
        m.name = p.name;
        m.population = p.population;
        t.municipalities.push_back(std::move(m));
    }

    const auto n_cells = static_cast<std::size_t>(params.n_cols) * params.n_rows;
    t.cell_owner.assign(n_cells, -1);
    std::vector<bool> land(n_cells, false);
    for (const auto& row : membership) {
        if (row.row < 0 || row.col < 0 || row.row >= params.n_rows || row.col >= params.n_cols)
            throw DataError("cell (" + std::to_string(row.row) + "," + std::to_string(row.col) +
                            ") outside the grid");
        const int owner = t.find(row.municipality_id);
        if (owner < 0) throw DataError("unknown municipality id " + row.municipality_id);
        const auto cell = static_cast<std::size_t>(row.row) * params.n_cols + row.col;
        if (t.cell_owner[cell] >= 0)
            throw DataError("cell (" + std::to_string(row.row) + "," + std::to_string(row.col) +
                            ") assigned twice");
        t.cell_owner[cell] = owner;
        land[cell] = true;
    }

    t.grid = std::make_shared<const Grid>(params, std::move(land));
    for (std::size_t c = 0; c < n_cells; ++c)
        if (t.cell_owner[c] >= 0) t.municipalities[t.cell_owner[c]].member_cells.push_back(c);
    for (auto& m : t.municipalities) {
        if (m.member_cells.empty()) throw DataError("municipality " + m.id + " owns no cells");
        m.centroid = centroid_of(*t.grid, m);
    }
    return t;
}

Point centroid_of(const Grid& grid, const Municipality& m, std::span<const double> weights) {
    if (m.member_cells.empty()) throw std::invalid_argument("municipality has no cells");
    if (!weights.empty() && weights.size() != m.member_cells.size())
        throw std::invalid_argument("weights must parallel member_cells");
    double sx = 0.0, sy = 0.0, sw = 0.0;
    for (std::size_t i = 0; i < m.member_cells.size(); ++i) {
        const double w = weights.empty() ? 1.0 : weights[i];
        if (w < 0.0) throw std::invalid_argument("negative centroid weight");
        const Point c = grid.center(m.member_cells[i]);
        sx += w * c.x;
        sy += w * c.y;
        sw += w;
    }
    if (!(sw > 0.0)) throw std::invalid_argument("centroid weights sum to zero");
    return {sx / sw, sy / sw};
}

std::vector<MembershipRow> rasterize_rectangles(std::span<const CellRect> rects) {
    std::vector<MembershipRow> rows;
    for (const auto& r : rects)
        for (int row = r.row_begin; row < r.row_end; ++row)
            for (int col = r.col_begin; col < r.col_end; ++col)
                rows.push_back({row, col, r.municipality_id});
    return rows;
}

std::vector<MembershipRow> read_cells_csv(const std::filesystem::path& path) {
    detail::CsvReader in(path, "row,col,municipality_id");
    std::vector<MembershipRow> rows;
    std::vector<std::string> f;
    while (in.next(f)) {
        if (f.size() != 3) in.fail("expected 3 fields");
        const auto row = detail::parse_number<int>(f[0]);
        const auto col = detail::parse_number<int>(f[1]);
        if (!row || !col) in.fail("row/col must be integers");
        if (*row < 0 || *col < 0) in.fail("negative cell index");
        if (f[2].empty()) in.fail("empty municipality id");
        rows.push_back({*row, *col, f[2]});
    }
    return rows;
}

std::vector<PopulationRow> read_municipalities_csv(const std::filesystem::path& path) {
    detail::CsvReader in(path, "municipality_id,name,population");
    std::vector<PopulationRow> rows;
    std::vector<std::string> f;
    while (in.next(f)) {
        if (f.size() != 3) in.fail("expected 3 fields");
        const auto pop = detail::parse_number<long long>(f[2]);
        if (!pop) in.fail("population must be an integer");
        if (*pop < 1) in.fail("population must be >= 1");
        if (f[0].empty()) in.fail("empty municipality id");
        rows.push_back({f[0], f[1], *pop});
    }
    return rows;
}

void write_cells_csv(const std::filesystem::path& path, const Territory& territory) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << "row,col,municipality_id\n";
    const Grid& g = *territory.grid;
    for (std::size_t c : g.land_cells())
        out << g.row_of(c) << ',' << g.col_of(c) << ','
            << territory.municipalities[territory.cell_owner[c]].id << '\n';
}

void write_municipalities_csv(const std::filesystem::path& path, const Territory& territory) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << "municipality_id,name,population\n";
    for (const auto& m : territory.municipalities)
        out << m.id << ',' << m.name << ',' << m.population << '\n';
}

}  // namespace covmap::geo
