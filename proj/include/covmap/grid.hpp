#pragma once

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "covmap/dates.hpp"

namespace covmap::geo {

struct Point {
    double x = 0.0;
    double y = 0.0;
};

inline double distance(Point a, Point b) {
    const double dx = a.x - b.x;
    const double dy = a.y - b.y;
    return std::sqrt(dx * dx + dy * dy);
}

struct GridParams {
    int n_cols = 1;
    int n_rows = 1;
    double cell_size_km = 1.0;
    double origin_x_km = 0.0;
    double origin_y_km = 0.0;
};

/// Regular raster of square cells. Cells are indexed row-major starting at
/// the lower-left corner: index = row * n_cols + col, row 0 at the bottom.
/// Land cells additionally carry a dense ordinal 0..n_land-1 in index order.
class Grid {
public:
    Grid(GridParams params, std::vector<bool> land_mask);

    const GridParams& params() const { return params_; }
    int n_cols() const { return params_.n_cols; }
    int n_rows() const { return params_.n_rows; }
    double cell_size() const { return params_.cell_size_km; }
    std::size_t n_cells() const { return land_mask_.size(); }
    std::size_t n_land() const { return land_cells_.size(); }

    std::size_t cell_index(int row, int col) const {
        return static_cast<std::size_t>(row) * params_.n_cols + col;
    }
    int row_of(std::size_t cell) const { return static_cast<int>(cell / params_.n_cols); }
    int col_of(std::size_t cell) const { return static_cast<int>(cell % params_.n_cols); }
    bool contains(int row, int col) const {
        return row >= 0 && col >= 0 && row < params_.n_rows && col < params_.n_cols;
    }
    bool is_land(std::size_t cell) const { return land_mask_[cell]; }

    Point center(int row, int col) const {
        return {params_.origin_x_km + (col + 0.5) * params_.cell_size_km,
                params_.origin_y_km + (row + 0.5) * params_.cell_size_km};
    }
    Point center(std::size_t cell) const { return center(row_of(cell), col_of(cell)); }

    /// Land ordinal -> cell index.
    const std::vector<std::size_t>& land_cells() const { return land_cells_; }
    /// Cell index -> land ordinal, or -1 for non-land cells.
    long land_ordinal(std::size_t cell) const { return land_ordinal_[cell]; }

    bool same_geometry(const Grid& other) const;

private:
    GridParams params_;
    std::vector<bool> land_mask_;
    std::vector<std::size_t> land_cells_;
    std::vector<long> land_ordinal_;
};

struct Municipality {
    std::string id;
    std::string name;
    long long population = 1;
    Point centroid;
    /// Cell indices (not land ordinals), ascending.
    std::vector<std::size_t> member_cells;
};

/// One line of cells.csv.
struct MembershipRow {
    int row = 0;
    int col = 0;
    std::string municipality_id;
};

/// One line of municipalities.csv.
struct PopulationRow {
    std::string id;
    std::string name;
    long long population = 1;
};

/// Grid plus its municipality partition. Immutable after build_grid.
struct Territory {
    std::shared_ptr<const Grid> grid;
    std::vector<Municipality> municipalities;
    /// Per cell index: owning municipality position, or -1.
    std::vector<int> cell_owner;

    std::size_t n_land() const { return grid->n_land(); }
    /// Position of a municipality id in `municipalities`, or -1.
    int find(const std::string& id) const;

private:
    friend Territory build_grid(const GridParams&, std::span<const MembershipRow>,
                                std::span<const PopulationRow>);
    std::unordered_map<std::string, int> index_;
};

/// Builds the grid and the municipality partition from a membership table.
/// Municipality order follows `populations`. Throws DataError on duplicate
/// cells, unknown ids, out-of-range cells or municipalities without cells.
Territory build_grid(const GridParams& params, std::span<const MembershipRow> membership,
                     std::span<const PopulationRow> populations);

/// Mean of member cell centers, optionally weighted (weights parallel to
/// member_cells). Throws std::invalid_argument for bad weights.
Point centroid_of(const Grid& grid, const Municipality& m, std::span<const double> weights = {});

/// Axis-aligned block of cells [col_begin, col_end) x [row_begin, row_end).
struct CellRect {
    std::string municipality_id;
    int col_begin = 0;
    int col_end = 0;
    int row_begin = 0;
    int row_end = 0;
};

/// Synthetic-data helper: expands rectangles into membership rows.
std::vector<MembershipRow> rasterize_rectangles(std::span<const CellRect> rects);

std::vector<MembershipRow> read_cells_csv(const std::filesystem::path& path);
std::vector<PopulationRow> read_municipalities_csv(const std::filesystem::path& path);
void write_cells_csv(const std::filesystem::path& path, const Territory& territory);
void write_municipalities_csv(const std::filesystem::path& path, const Territory& territory);

/// One day's incidence raster. Values are indexed by land ordinal.
struct IncidenceField {
    std::shared_ptr<const Grid> grid;
    Date date{};
    std::vector<double> values;

    static IncidenceField zeros(std::shared_ptr<const Grid> grid, Date date) {
        IncidenceField f{grid, date, {}};
        f.values.assign(f.grid->n_land(), 0.0);
        return f;
    }
};

inline constexpr double kNodata = -9999.0;

}  // namespace covmap::geo
