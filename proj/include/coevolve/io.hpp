#ifndef COEVOLVE_IO_HPP_
#define COEVOLVE_IO_HPP_

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "coevolve/common.hpp"

namespace coevolve {

/// Shortest round-trippable decimal form (17 significant digits).
std::string format_double(double v);

/// CSV with a generated header `prefix0,prefix1,...`.
void write_matrix_csv(const std::string &path, const Matrix &m, const std::string &col_prefix);
/// Reads a numeric CSV, skipping the mandatory header row.
Matrix read_matrix_csv(const std::string &path);

/// Checkpoint container: named tensors with a shape header per entry.
void write_named_matrices(const std::string &path,
                          const std::vector<std::pair<std::string, Matrix>> &tensors);
std::vector<std::pair<std::string, Matrix>> read_named_matrices(const std::string &path);

std::uint64_t fnv1a(const std::string &bytes);
std::uint64_t fnv1a_file(const std::string &path);

std::string read_text_file(const std::string &path);
void write_text_file(const std::string &path, const std::string &content);

} // namespace coevolve

#endif // COEVOLVE_IO_HPP_
