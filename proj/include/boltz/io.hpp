#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "phase.hpp"

namespace boltz {

// Field container, little-endian:
//   char[8]  "BZFIELD1"
//   int32    dimension, n_cells, n_per_axis
//   float64  period, v_max
//   uint64   metadata length L, then L bytes of JSON text
//   uint64   value count, then the values as float64, cell-major
//            (values[cell * n^3 + node], node = (ix * n + iy) * n + iz)
inline constexpr char field_magic[8] = {'B', 'Z', 'F', 'I', 'E', 'L', 'D', '1'};

template <class T>
void write_pod(std::ostream& os, const T& x) {
    os.write(reinterpret_cast<const char*>(&x), sizeof(T));
}
template <class T>
T read_pod(std::istream& is) {
    T x{};
    is.read(reinterpret_cast<char*>(&x), sizeof(T));
    if (!is) throw Error("field file: truncated");
    return x;
}

inline void write_field(const std::string& path, const PhaseField& f, const std::string& metadata = "{}") {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot write " + path);
    os.write(field_magic, 8);
    write_pod<std::int32_t>(os, f.space.dimension);
    write_pod<std::int32_t>(os, f.space.n_cells);
    write_pod<std::int32_t>(os, f.vel.n());
    write_pod<double>(os, f.space.period);
    write_pod<double>(os, f.vel.v_max());
    write_pod<std::uint64_t>(os, metadata.size());
    os.write(metadata.data(), std::streamsize(metadata.size()));
    write_pod<std::uint64_t>(os, f.values.size());
    os.write(reinterpret_cast<const char*>(f.values.data()), std::streamsize(f.values.size() * sizeof(double)));
    if (!os) throw Error("write failed: " + path);
}

inline DistributionField read_field(const std::string& path, std::string* metadata = nullptr) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot read " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, field_magic, 8) != 0) throw Error("not a BZFIELD1 file: " + path);
    const int dim = read_pod<std::int32_t>(is);
    const int cells = read_pod<std::int32_t>(is);
    const int n = read_pod<std::int32_t>(is);
    const double period = read_pod<double>(is);
    const double v_max = read_pod<double>(is);
    const auto L = read_pod<std::uint64_t>(is);
    std::string meta(L, '\0');
    is.read(meta.data(), std::streamsize(L));
    if (metadata) *metadata = meta;
    DistributionField F(SpatialGrid(dim, period, cells), VelocityGrid(v_max, n));
    const auto count = read_pod<std::uint64_t>(is);
    if (count != F.values.size()) throw Error("field file: value count does not match the grid");
    is.read(reinterpret_cast<char*>(F.values.data()), std::streamsize(count * sizeof(double)));
    if (!is) throw Error("field file: truncated values");
    return F;
}

/// Per-cell moments: x, rho, u_x, u_y, u_z, T.
inline void write_cell_moments_csv(std::ostream& os, const DistributionField& F) {
    os << "cell,x,rho,ux,uy,uz,T\n";
    char buf[256];
    for (int c = 0; c < F.cells(); ++c) {
        const CellMoments m = cell_moments(F, c);
        std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", c, m.x, m.rho, m.u.x, m.u.y, m.u.z,
                      m.T);
        os << buf;
    }
}

/// Numeric CSV with "#" comment lines and a header row.
struct CsvTable {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;

    std::vector<double> column(const std::string& name) const {
        for (std::size_t k = 0; k < columns.size(); ++k)
            if (columns[k] == name) {
                std::vector<double> out;
                for (const auto& r : rows) out.push_back(r.at(k));
                return out;
            }
        throw Error("csv: no column '" + name + "'");
    }
};

inline CsvTable read_csv(std::istream& is) {
    CsvTable t;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::stringstream ss(line);
        std::string cell;
        if (t.columns.empty()) {
            while (std::getline(ss, cell, ',')) t.columns.push_back(cell);
            continue;
        }
        std::vector<double> r;
        while (std::getline(ss, cell, ',')) {
            try {
                r.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw Error("csv: bad number '" + cell + "'");
            }
        }
        if (r.size() != t.columns.size()) throw Error("csv: row width does not match the header");
        t.rows.push_back(std::move(r));
    }
    if (t.columns.empty()) throw Error("csv: missing header");
    return t;
}

inline CsvTable read_csv_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw Error("cannot read " + path);
    return read_csv(is);
}

}  // namespace boltz
