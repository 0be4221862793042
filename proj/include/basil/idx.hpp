#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "basil/dataset.hpp"

namespace basil {

struct IdxImages {
    std::size_t count = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::uint8_t> pixels;  // count * rows * cols
};

IdxImages parse_idx_images(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> parse_idx_labels(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> read_binary_file(const std::filesystem::path& path);

// Pixels scaled to [0,1]. `limit` keeps only the first samples (0 = all).
// `classes` of 0 means max label + 1.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels, std::size_t limit = 0,
                 int classes = 0);

}  // namespace basil
