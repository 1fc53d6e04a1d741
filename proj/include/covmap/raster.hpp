#pragma once

#include <filesystem>
#include <vector>

#include "covmap/grid.hpp"

namespace covmap::geo {

/// ESRI ASCII grid contents. `values` are stored top row first, as on disk.
struct AsciiRaster {
    int ncols = 0;
    int nrows = 0;
    double xllcorner = 0.0;
    double yllcorner = 0.0;
    double cellsize = 1.0;
    double nodata = kNodata;
    std::vector<double> values;
};

/// Writes an ESRI ASCII grid with `%.6g` values; non-land cells carry NODATA.
void write_esri_ascii(const std::filesystem::path& path, const IncidenceField& field);
void write_esri_ascii(const std::filesystem::path& path, const AsciiRaster& raster);

/// Reads an ESRI ASCII grid. Header keys are case-insensitive; both
/// xllcorner/xllcenter forms are accepted. Throws DataError.
AsciiRaster read_esri_ascii(const std::filesystem::path& path);

AsciiRaster to_raster(const IncidenceField& field);
/// Converts back onto `grid`, checking the geometry. Throws DataError when
/// land cells carry NODATA or dimensions disagree.
IncidenceField from_raster(const AsciiRaster& raster, std::shared_ptr<const Grid> grid, Date date);

}  // namespace covmap::geo
