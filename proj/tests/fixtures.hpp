#pragma once

#include <string>
#include <vector>

#include "covmap/grid.hpp"

namespace fixtures {

/// rows_of_blocks x cols_of_blocks rectangles of block_w x block_h cells.
inline covmap::geo::Territory block_territory(int cols_of_blocks, int rows_of_blocks, int block_w,
                                              int block_h, long long base_pop = 150000,
                                              long long pop_step = 10000, double cell_km = 1.0) {
    using namespace covmap::geo;
    std::vector<CellRect> rects;
    std::vector<PopulationRow> pops;
    int k = 0;
    for (int br = 0; br < rows_of_blocks; ++br)
        for (int bc = 0; bc < cols_of_blocks; ++bc) {
            const std::string id = "M" + std::to_string(k);
            rects.push_back({id, bc * block_w, (bc + 1) * block_w, br * block_h, (br + 1) * block_h});
            pops.push_back({id, "Municipality " + std::to_string(k), base_pop + pop_step * k});
            ++k;
        }
    const auto rows = rasterize_rectangles(rects);
    GridParams gp{cols_of_blocks * block_w, rows_of_blocks * block_h, cell_km, 0.0, 0.0};
    return build_grid(gp, rows, pops);
}

}  // namespace fixtures
