#pragma once

#include "flatnn/index.hpp"

#include <string>
#include <vector>

namespace flatnn {

// File formats:
//   text points   "flatnn-pts v1 <n> <d>" then n rows of d decimals
//   binary points magic "FNNB", u32 version, u64 n, u64 d, n*d little-endian
//                 64-bit floats (row per point)
//   query flats   "flatnn-flats v1 <q> <k> <d>" then per query k+1 generator
//                 rows
//   index         magic "FNNI", u32 version, length-prefixed sections
//                 (params, points, clusters), trailing fnv1a-64 checksum

void save_points_text(const std::string& path, const Matrix& points);
void save_points_binary(const std::string& path, const Matrix& points);

/// Sniffs text vs binary by the leading magic.
Matrix load_points(const std::string& path);

void save_flats(const std::string& path, const std::vector<Flat>& flats);
std::vector<Flat> load_flats(const std::string& path);

void save_index(const FlatIndex& idx, const std::string& path);

/// Verifies magic, version and checksum, then deterministically reassembles
/// the derived structures from the stored extraction.
FlatIndex load_index(const std::string& path);

/// Line-oriented key=value config files; later keys win. '#' starts comments.
std::vector<std::pair<std::string, std::string>> load_config(const std::string& path);

std::uint64_t fnv1a64(const void* data, std::size_t len,
                      std::uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace flatnn
