#include "coevolve/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace coevolve {

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_matrix_csv(const std::string &path, const Matrix &m, const std::string &col_prefix) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open for writing: " + path);
    for (Eigen::Index c = 0; c < m.cols(); ++c) out << (c ? "," : "") << col_prefix << c;
    out << "\n";
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            out << (c ? "," : "") << format_double(m(r, c));
        out << "\n";
    }
    if (!out) throw DataError("write failed: " + path);
}

Matrix read_matrix_csv(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open: " + path);
    std::string line;
    if (!std::getline(in, line)) throw DataError("missing header row: " + path);
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::istringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) {
            try {
                row.push_back(std::stod(cell));
            } catch (const std::exception &) {
                throw DataError("non-numeric cell '" + cell + "' in " + path);
            }
        }
        if (!rows.empty() && row.size() != rows.front().size())
            throw DataError("ragged rows in " + path);
        rows.push_back(std::move(row));
    }
    Matrix m(rows.size(), rows.empty() ? 0 : rows.front().size());
    for (size_t r = 0; r < rows.size(); ++r)
        for (size_t c = 0; c < rows[r].size(); ++c) m(r, c) = rows[r][c];
    return m;
}

void write_named_matrices(const std::string &path,
                          const std::vector<std::pair<std::string, Matrix>> &tensors) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open for writing: " + path);
    out << "coevolve-tensors 1\n" << tensors.size() << "\n";
    for (const auto &[name, m] : tensors) {
        out << name << " " << m.rows() << " " << m.cols() << "\n";
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            for (Eigen::Index c = 0; c < m.cols(); ++c)
                out << (c ? " " : "") << format_double(m(r, c));
            out << "\n";
        }
    }
    if (!out) throw DataError("write failed: " + path);
}

std::vector<std::pair<std::string, Matrix>> read_named_matrices(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open: " + path);
    std::string magic;
    int version = 0;
    in >> magic >> version;
    if (magic != "coevolve-tensors" || version != 1)
        throw DataError("not a checkpoint file: " + path);
    size_t count = 0;
    in >> count;
    std::vector<std::pair<std::string, Matrix>> tensors;
    tensors.reserve(count);
    for (size_t k = 0; k < count; ++k) {
        std::string name;
        Eigen::Index rows = 0, cols = 0;
        in >> name >> rows >> cols;
        if (!in || rows < 0 || cols < 0) throw DataError("corrupt checkpoint: " + path);
        Matrix m(rows, cols);
        for (Eigen::Index r = 0; r < rows; ++r)
            for (Eigen::Index c = 0; c < cols; ++c) in >> m(r, c);
        if (!in) throw DataError("corrupt checkpoint tensor " + name + " in " + path);
        tensors.emplace_back(std::move(name), std::move(m));
    }
    return tensors;
}

std::uint64_t fnv1a(const std::string &bytes) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::uint64_t fnv1a_file(const std::string &path) { return fnv1a(read_text_file(path)); }

std::string read_text_file(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::string &path, const std::string &content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open for writing: " + path);
    out << content;
    if (!out) throw DataError("write failed: " + path);
}

} // namespace coevolve
