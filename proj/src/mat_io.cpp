#include "intlora/mat_io.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

namespace intlora {

namespace {

bool has_suffix(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() &&
           s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

Matrix read_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open '" + path + "'");
    std::vector<double> data;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::size_t c = 0;
        while (std::getline(ss, cell, ',')) {
            try {
                data.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw IoError("'" + path + "': cannot parse '" + cell + "' as a number");
            }
            ++c;
        }
        if (rows == 0) {
            cols = c;
        } else if (c != cols) {
            throw IoError("'" + path + "': ragged CSV row " + std::to_string(rows + 1));
        }
        ++rows;
    }
    if (rows == 0) throw IoError("'" + path + "': empty matrix");
    return Matrix(rows, cols, std::move(data));
}

void write_csv(const std::string& path, const Matrix& m) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open '" + path + "' for writing");
    char buf[64];
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", m(i, j));
            os << buf << (j + 1 < m.cols() ? "," : "\n");
        }
    }
}

std::uint32_t read_u32(std::istream& is, const std::string& path) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) {
        throw IoError("'" + path + "': truncated header");
    }
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) |
           (static_cast<std::uint32_t>(b[3]) << 24);
}

} // namespace

Matrix read_matrix(const std::string& path) {
    if (has_suffix(path, ".csv")) return read_csv(path);
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open '" + path + "'");
    const std::uint32_t rows = read_u32(is, path);
    const std::uint32_t cols = read_u32(is, path);
    if (rows == 0 || cols == 0) throw IoError("'" + path + "': zero dimension");
    std::vector<double> data(static_cast<std::size_t>(rows) * cols);
    for (double& v : data) {
        unsigned char b[8];
        if (!is.read(reinterpret_cast<char*>(b), 8)) {
            throw IoError("'" + path + "': truncated payload");
        }
        std::uint64_t bits = 0;
        for (int k = 0; k < 8; ++k) bits |= static_cast<std::uint64_t>(b[k]) << (8 * k);
        std::memcpy(&v, &bits, 8);
    }
    return Matrix(rows, cols, std::move(data));
}

void write_matrix(const std::string& path, const Matrix& m) {
    if (has_suffix(path, ".csv")) {
        write_csv(path, m);
        return;
    }
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open '" + path + "' for writing");
    auto put_u32 = [&](std::uint32_t v) {
        unsigned char b[4] = {static_cast<unsigned char>(v),
                              static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 24)};
        os.write(reinterpret_cast<char*>(b), 4);
    };
    put_u32(static_cast<std::uint32_t>(m.rows()));
    put_u32(static_cast<std::uint32_t>(m.cols()));
    for (std::size_t i = 0; i < m.size(); ++i) {
        std::uint64_t bits;
        std::memcpy(&bits, &m.data()[i], 8);
        unsigned char b[8];
        for (int k = 0; k < 8; ++k) b[k] = static_cast<unsigned char>(bits >> (8 * k));
        os.write(reinterpret_cast<char*>(b), 8);
    }
    if (!os) throw IoError("write failed for '" + path + "'");
}

} // namespace intlora
