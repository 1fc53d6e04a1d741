#include "covmap/raster.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "covmap/errors.hpp"
#include "csv_util.hpp"

namespace covmap::geo {

AsciiRaster to_raster(const IncidenceField& field) {
    const Grid& g = *field.grid;
    AsciiRaster r;
    r.ncols = g.n_cols();
    r.nrows = g.n_rows();
    r.xllcorner = g.params().origin_x_km;
    r.yllcorner = g.params().origin_y_km;
    r.cellsize = g.cell_size();
    r.values.assign(g.n_cells(), kNodata);
    for (int row = 0; row < g.n_rows(); ++row) {
        const int file_row = g.n_rows() - 1 - row;
        for (int col = 0; col < g.n_cols(); ++col) {
            const long ord = g.land_ordinal(g.cell_index(row, col));
            if (ord >= 0) r.values[static_cast<std::size_t>(file_row) * g.n_cols() + col] = field.values[ord];
        }
    }
    return r;
}

IncidenceField from_raster(const AsciiRaster& raster, std::shared_ptr<const Grid> grid, Date date) {
    const Grid& g = *grid;
    if (raster.ncols != g.n_cols() || raster.nrows != g.n_rows())
        throw DataError("raster dimensions do not match the grid");
    IncidenceField f = IncidenceField::zeros(grid, date);
    for (std::size_t ord = 0; ord < g.n_land(); ++ord) {
        const std::size_t cell = g.land_cells()[ord];
        const int file_row = g.n_rows() - 1 - g.row_of(cell);
        const double v = raster.values[static_cast<std::size_t>(file_row) * g.n_cols() + g.col_of(cell)];
        if (v == raster.nodata) throw DataError("land cell carries NODATA in raster");
        f.values[ord] = v;
    }
    return f;
}

void write_esri_ascii(const std::filesystem::path& path, const AsciiRaster& r) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << "ncols " << r.ncols << '\n'
        << "nrows " << r.nrows << '\n'
        << "xllcorner " << detail::fmt6(r.xllcorner) << '\n'
        << "yllcorner " << detail::fmt6(r.yllcorner) << '\n'
        << "cellsize " << detail::fmt6(r.cellsize) << '\n'
        << "NODATA_value " << detail::fmt6(r.nodata) << '\n';
    for (int row = 0; row < r.nrows; ++row) {
        for (int col = 0; col < r.ncols; ++col) {
            if (col) out << ' ';
            out << detail::fmt6(r.values[static_cast<std::size_t>(row) * r.ncols + col]);
        }
        out << '\n';
    }
}

void write_esri_ascii(const std::filesystem::path& path, const IncidenceField& field) {
    write_esri_ascii(path, to_raster(field));
}

AsciiRaster read_esri_ascii(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    AsciiRaster r;
    bool center_x = false, center_y = false;
    int seen = 0;
    std::string key;
    // Header: key/value pairs until the first numeric token.
    while (in >> std::ws && in.peek() != EOF && std::isalpha(in.peek())) {
        in >> key;
        std::transform(key.begin(), key.end(), key.begin(),
                       [](unsigned char c) { return std::tolower(c); });
        double value = 0.0;
        if (!(in >> value)) throw DataError(path.string() + ": bad header value for " + key);
        if (key == "ncols") r.ncols = static_cast<int>(value);
        else if (key == "nrows") r.nrows = static_cast<int>(value);
        else if (key == "xllcorner") r.xllcorner = value;
        else if (key == "yllcorner") r.yllcorner = value;
        else if (key == "xllcenter") { r.xllcorner = value; center_x = true; }
        else if (key == "yllcenter") { r.yllcorner = value; center_y = true; }
        else if (key == "cellsize") r.cellsize = value;
        else if (key == "nodata_value") r.nodata = value;
        else throw DataError(path.string() + ": unknown header key " + key);
        ++seen;
    }
    if (r.ncols < 1 || r.nrows < 1 || seen < 5)
        throw DataError(path.string() + ": incomplete header");
    if (center_x) r.xllcorner -= 0.5 * r.cellsize;
    if (center_y) r.yllcorner -= 0.5 * r.cellsize;
    const auto n = static_cast<std::size_t>(r.ncols) * r.nrows;
    r.values.resize(n);
    std::string token;
    for (std::size_t i = 0; i < n; ++i) {
        if (!(in >> token)) throw DataError(path.string() + ": truncated raster body");
        char* end = nullptr;
        r.values[i] = std::strtod(token.c_str(), &end);
        if (end != token.c_str() + token.size())
            throw DataError(path.string() + ": bad raster value '" + token + "'");
    }
    if (in >> token) throw DataError(path.string() + ": trailing data after raster body");
    return r;
}

}  // namespace covmap::geo
